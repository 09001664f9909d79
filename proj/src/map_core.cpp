#include "percmap/map_core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "percmap/errors.hpp"
#include "percmap/json_io.hpp"

namespace percmap {

Category Category::from_id(int id) {
  switch (id) {
    case kPed: return ped();
    case kDiv: return div();
    case kBdr: return bdr();
    default:
      PERCMAP_REQUIRE(id >= 0, "category id must be non-negative");
      return {id, false};
  }
}

Category Category::from_name(std::string_view name) {
  if (name == "ped") return ped();
  if (name == "div") return div();
  if (name == "bdr") return bdr();
  throw ContractError("unknown category name '" + std::string(name) + "'");
}

std::string Category::name() const {
  switch (id) {
    case kPed: return "ped";
    case kDiv: return "div";
    case kBdr: return "bdr";
    default: return std::to_string(id);
  }
}

void validate_instance(const MapInstance& inst) {
  PERCMAP_REQUIRE(inst.points.size() >= 2, "map instance needs at least 2 points");
  for (const auto& p : inst.points) {
    PERCMAP_REQUIRE(std::isfinite(p.x) && std::isfinite(p.y),
                    "map instance has non-finite coordinates");
  }
  PERCMAP_REQUIRE(inst.confidence >= 0.0 && inst.confidence <= 1.0,
                  "confidence must lie in [0, 1]");
}

void validate_grid(const BevGrid& g) {
  PERCMAP_REQUIRE(g.x_max > g.x_min && g.y_max > g.y_min, "empty grid range");
  PERCMAP_REQUIRE(g.height > 0 && g.width > 0, "grid needs positive cell counts");
  PERCMAP_REQUIRE(g.downsample > 0, "downsample factor must be positive");
}

double chain_length(const std::vector<Point2>& pts, bool closed) {
  double total = 0.0;
  for (std::size_t i = 1; i < pts.size(); ++i) {
    total += std::hypot(pts[i].x - pts[i - 1].x, pts[i].y - pts[i - 1].y);
  }
  if (closed && pts.size() > 1) {
    total += std::hypot(pts.front().x - pts.back().x, pts.front().y - pts.back().y);
  }
  return total;
}

MapInstance resample_polyline(const MapInstance& inst, std::size_t n) {
  PERCMAP_REQUIRE(inst.points.size() >= 2, "resample needs at least 2 points");
  PERCMAP_REQUIRE(n >= 2, "resample count must be >= 2");

  std::vector<Point2> chain = inst.points;
  if (inst.closed()) chain.push_back(chain.front());

  std::vector<double> cum(chain.size(), 0.0);
  for (std::size_t i = 1; i < chain.size(); ++i) {
    cum[i] = cum[i - 1] + std::hypot(chain[i].x - chain[i - 1].x, chain[i].y - chain[i - 1].y);
  }
  const double total = cum.back();

  MapInstance out{{}, inst.category, inst.confidence};
  out.points.reserve(n);
  if (total <= 0.0) {
    out.points.assign(n, chain.front());
    return out;
  }

  const double step = inst.closed() ? total / static_cast<double>(n)
                                    : total / static_cast<double>(n - 1);
  std::size_t seg = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!inst.closed() && k + 1 == n) {
      out.points.push_back(chain.back());
      break;
    }
    const double s = step * static_cast<double>(k);
    while (seg + 2 < chain.size() && cum[seg + 1] <= s) ++seg;
    const double len = cum[seg + 1] - cum[seg];
    const double t = len > 0.0 ? std::clamp((s - cum[seg]) / len, 0.0, 1.0) : 0.0;
    const Point2 a = chain[seg];
    const Point2 b = chain[seg + 1];
    out.points.push_back({a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)});
  }
  return out;
}

std::optional<Cell> bev_to_cell(const BevGrid& grid, Point2 p) {
  if (!std::isfinite(p.x) || !std::isfinite(p.y) || !grid.contains(p)) return std::nullopt;
  const int col = std::min(static_cast<int>(std::floor(grid.col_coord(p.x))), grid.width - 1);
  const int row = std::min(static_cast<int>(std::floor(grid.row_coord(p.y))), grid.height - 1);
  return Cell{row, col};
}

Point2 cell_center(const BevGrid& grid, Cell cell) {
  return {grid.x_min + (cell.col + 0.5) * grid.cell_width(),
          grid.y_min + (cell.row + 0.5) * grid.cell_height()};
}

// --- JSON ------------------------------------------------------------------

nlohmann::json to_json(const MapInstance& inst) {
  nlohmann::json pts = nlohmann::json::array();
  for (const auto& p : inst.points) pts.push_back({p.x, p.y});
  nlohmann::json j;
  if (inst.category.id < kNumCategories) {
    j["category"] = inst.category.name();
  } else {
    j["category"] = inst.category.id;
  }
  j["closed"] = inst.category.is_closed;
  j["confidence"] = inst.confidence;
  j["points"] = std::move(pts);
  return j;
}

nlohmann::json to_json(const VectorMap& map) {
  nlohmann::json inst = nlohmann::json::array();
  for (const auto& i : map.instances) inst.push_back(to_json(i));
  return {{"frame_id", map.frame_id}, {"instances", std::move(inst)}};
}

nlohmann::json to_json(const BevGrid& g) {
  return {{"x_range", {g.x_min, g.x_max}},
          {"y_range", {g.y_min, g.y_max}},
          {"height", g.height},
          {"width", g.width},
          {"downsample", g.downsample}};
}

MapInstance instance_from_json(const nlohmann::json& j) {
  PERCMAP_REQUIRE(j.is_object(), "instance must be a JSON object");
  MapInstance inst;
  const auto& cat = j.at("category");
  if (cat.is_string()) {
    inst.category = Category::from_name(cat.get<std::string>());
  } else {
    inst.category = Category::from_id(cat.get<int>());
  }
  if (j.contains("closed")) {
    const bool closed = j.at("closed").get<bool>();
    PERCMAP_REQUIRE(inst.category.id >= kNumCategories || closed == inst.category.is_closed,
                    "'closed' disagrees with built-in category " + inst.category.name());
    inst.category.is_closed = closed;
  }
  inst.confidence = j.value("confidence", 1.0);
  for (const auto& p : j.at("points")) {
    PERCMAP_REQUIRE(p.is_array() && p.size() == 2, "points must be [x, y] pairs");
    inst.points.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  validate_instance(inst);
  return inst;
}

VectorMap map_from_json(const nlohmann::json& j) {
  PERCMAP_REQUIRE(j.is_object(), "map document must be a JSON object");
  VectorMap map;
  map.frame_id = j.value("frame_id", std::string{});
  for (const auto& i : j.at("instances")) map.instances.push_back(instance_from_json(i));
  return map;
}

BevGrid grid_from_json(const nlohmann::json& j) {
  PERCMAP_REQUIRE(j.is_object(), "grid must be a JSON object");
  for (const auto& [k, v] : j.items())
    PERCMAP_REQUIRE(k == "x_range" || k == "y_range" || k == "height" || k == "width" || k == "downsample",
                    "grid: unknown key '" + k + "'");
  BevGrid g;
  if (j.contains("x_range")) {
    g.x_min = j["x_range"].at(0).get<double>();
    g.x_max = j["x_range"].at(1).get<double>();
  }
  if (j.contains("y_range")) {
    g.y_min = j["y_range"].at(0).get<double>();
    g.y_max = j["y_range"].at(1).get<double>();
  }
  g.height = j.value("height", g.height);
  g.width = j.value("width", g.width);
  g.downsample = j.value("downsample", g.downsample);
  validate_grid(g);
  return g;
}

VectorMap load_map(const std::string& path) {
  const auto j = read_json_file(path);
  try {
    return map_from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  } catch (const ContractError& e) {
    throw IoError(path + ": " + e.what());
  }
}

void save_map(const VectorMap& map, const std::string& path) {
  write_json_file(path, to_json(map));
}

}  // namespace percmap
