#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace percmap {

inline constexpr int kNumCategories = 3;

struct Point2 {
  double x = 0.0;  // lateral, meters
  double y = 0.0;  // longitudinal, meters

  friend bool operator==(const Point2&, const Point2&) = default;
};

// Map element class. The three built-in ids are stable across serialization;
// other integer ids are accepted as open polylines.
struct Category {
  enum Id : int { kPed = 0, kDiv = 1, kBdr = 2 };

  int id = kDiv;
  bool is_closed = false;

  static Category ped() { return {kPed, true}; }
  static Category div() { return {kDiv, false}; }
  static Category bdr() { return {kBdr, false}; }
  static Category from_id(int id);
  static Category from_name(std::string_view name);

  std::string name() const;
  friend bool operator==(const Category&, const Category&) = default;
};

// One vectorized element. Closed polygons do not repeat the first vertex;
// closure is implied by category.is_closed.
struct MapInstance {
  std::vector<Point2> points;
  Category category;
  double confidence = 1.0;

  bool closed() const { return category.is_closed; }
};

// Throws ContractError if the instance has < 2 points, non-finite coordinates
// or a confidence outside [0, 1].
void validate_instance(const MapInstance& inst);

struct VectorMap {
  std::vector<MapInstance> instances;
  std::string frame_id;
};

struct Cell {
  int row = 0;
  int col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

// Metric BEV raster. x is lateral and spans `width` columns; y is
// longitudinal and spans `height` rows; storage is row-major (row <-> y).
struct BevGrid {
  double x_min = -15.0;
  double x_max = 15.0;
  double y_min = -30.0;
  double y_max = 30.0;
  int height = 200;
  int width = 100;
  int downsample = 2;

  static BevGrid standard() { return {}; }
  // Reduced geometry used for gradient checks and toy training.
  static BevGrid toy() { return {-15.0, 15.0, -30.0, 30.0, 40, 20, 2}; }

  double cell_width() const { return (x_max - x_min) / width; }
  double cell_height() const { return (y_max - y_min) / height; }
  // Continuous cell coordinates: (col_f, row_f) with cell (r, c) covering
  // [c, c+1) x [r, r+1).
  double col_coord(double x) const { return (x - x_min) * width / (x_max - x_min); }
  double row_coord(double y) const { return (y - y_min) * height / (y_max - y_min); }
  bool contains(Point2 p) const {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
  }
  std::size_t num_cells() const { return static_cast<std::size_t>(height) * width; }

  friend bool operator==(const BevGrid&, const BevGrid&) = default;
};

void validate_grid(const BevGrid& grid);

// Arclength resampling to exactly n points. Open chains keep both endpoints;
// closed chains are sampled over the perimeter (closing edge included) at
// spacing L/n starting from the first vertex. A zero-length chain maps to n
// copies of its first point.
MapInstance resample_polyline(const MapInstance& inst, std::size_t n);

double chain_length(const std::vector<Point2>& points, bool closed);

// Floor convention; the upper range boundary is clamped into the last cell.
std::optional<Cell> bev_to_cell(const BevGrid& grid, Point2 p);
Point2 cell_center(const BevGrid& grid, Cell cell);

// --- JSON (canonical scene format) ---------------------------------------

nlohmann::json to_json(const MapInstance& inst);
nlohmann::json to_json(const VectorMap& map);
nlohmann::json to_json(const BevGrid& grid);
MapInstance instance_from_json(const nlohmann::json& j);
VectorMap map_from_json(const nlohmann::json& j);
BevGrid grid_from_json(const nlohmann::json& j);

VectorMap load_map(const std::string& path);
void save_map(const VectorMap& map, const std::string& path);

}  // namespace percmap
