#include "percmap/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <set>

#include "percmap/checkpoint.hpp"
#include "percmap/errors.hpp"
#include "percmap/json_io.hpp"
#include "percmap/rng.hpp"
#include "percmap/targets.hpp"

namespace percmap {
namespace {

constexpr int kMaxAttempts = 2000;
constexpr int kLineVertices = 7;
constexpr double kPvSampleStep = 0.1;  // meters between projected GT samples

enum Stream : std::uint64_t { kMapStream = 1, kBevEmbed = 2, kPvEmbed = 3, kBevNoise = 4, kPvNoise = 5 };

// Unit vector for rotation by 2 * atan(t); rational, so no libm involved.
Point2 rational_unit(double t) {
  const double d = 1.0 + t * t;
  return {(1.0 - t * t) / d, 2.0 * t / d};
}

Point2 rotate(Point2 v, Point2 r) { return {v.x * r.x - v.y * r.y, v.x * r.y + v.y * r.x}; }

double point_segment_distance(Point2 p, Point2 a, Point2 b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(p.x - (a.x + t * dx), p.y - (a.y + t * dy));
}

double instance_distance(const MapInstance& a, const MapInstance& b) {
  const auto dense = resample_polyline(a, 64).points;
  const auto& q = b.points;
  const std::size_t segs = b.closed() ? q.size() : q.size() - 1;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : dense)
    for (std::size_t s = 0; s < segs; ++s) best = std::min(best, point_segment_distance(p, q[s], q[(s + 1) % q.size()]));
  return best;
}

bool inside_margin(const BevGrid& g, const std::vector<Point2>& pts, double margin) {
  return std::all_of(pts.begin(), pts.end(), [&](Point2 p) {
    return p.x >= g.x_min + margin && p.x <= g.x_max - margin && p.y >= g.y_min + margin &&
           p.y <= g.y_max - margin;
  });
}

bool separated(const MapInstance& cand, const std::vector<MapInstance>& placed, double min_sep) {
  return std::all_of(placed.begin(), placed.end(),
                     [&](const MapInstance& o) { return instance_distance(cand, o) >= min_sep; });
}

MapInstance sample_line(Xoshiro256& rng, const SceneSpec& spec, Category cat) {
  const BevGrid& g = spec.grid;
  Point2 p{rng.uniform(g.x_min + spec.margin, g.x_max - spec.margin),
           rng.uniform(g.y_min + spec.margin, g.y_max - spec.margin)};
  Point2 dir = rational_unit(rng.uniform(-1.0, 1.0));
  if (rng.uniform() < 0.5) dir = {-dir.x, -dir.y};
  const double step = rng.uniform(spec.line_length.lo, spec.line_length.hi) / (kLineVertices - 1);
  const Point2 turn_a = rational_unit(rng.uniform(-spec.max_turn, spec.max_turn));
  const Point2 turn_b = rational_unit(rng.uniform(-spec.max_turn, spec.max_turn));
  MapInstance inst;
  inst.category = cat;
  inst.points.push_back(p);
  for (int i = 1; i < kLineVertices; ++i) {
    if (i > 1) dir = rotate(dir, i <= (kLineVertices - 1) / 2 ? turn_a : turn_b);
    p = {p.x + step * dir.x, p.y + step * dir.y};
    inst.points.push_back(p);
  }
  return inst;
}

double cross(Point2 o, Point2 a, Point2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

MapInstance sample_crossing(Xoshiro256& rng, const SceneSpec& spec) {
  const BevGrid& g = spec.grid;
  const Point2 c{rng.uniform(g.x_min + spec.margin, g.x_max - spec.margin),
                 rng.uniform(g.y_min + spec.margin, g.y_max - spec.margin)};
  const Point2 d = rational_unit(rng.uniform(-1.0, 1.0));
  const Point2 n{-d.y, d.x};
  const double hw = 0.5 * rng.uniform(spec.crossing_width.lo, spec.crossing_width.hi);
  const double hd = 0.5 * rng.uniform(spec.crossing_depth.lo, spec.crossing_depth.hi);
  const double sx[4] = {-1, 1, 1, -1};
  const double sy[4] = {-1, -1, 1, 1};
  MapInstance inst;
  inst.category = Category::ped();
  for (int k = 0; k < 4; ++k) {
    const double a = sx[k] * hw, b = sy[k] * hd;
    inst.points.push_back({c.x + a * n.x + b * d.x + rng.uniform(-spec.crossing_jitter, spec.crossing_jitter),
                           c.y + a * n.y + b * d.y + rng.uniform(-spec.crossing_jitter, spec.crossing_jitter)});
  }
  double area = 0.0;
  for (int k = 0; k < 4; ++k) area += cross({0, 0}, inst.points[k], inst.points[(k + 1) % 4]);
  if (area < 0.0) std::reverse(inst.points.begin(), inst.points.end());
  return inst;
}

bool convex_ccw(const std::vector<Point2>& q) {
  for (std::size_t k = 0; k < q.size(); ++k)
    if (cross(q[k], q[(k + 1) % q.size()], q[(k + 2) % q.size()]) <= 0.0) return false;
  return true;
}

// Separable [1 2 1] / 4 blur over [rows, cols, K] with zero padding.
std::vector<double> blur3(const std::vector<double>& in, std::size_t rows, std::size_t cols, std::size_t k) {
  std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
  auto at = [&](const std::vector<double>& a, long r, long c, std::size_t ch) {
    if (r < 0 || c < 0 || r >= static_cast<long>(rows) || c >= static_cast<long>(cols)) return 0.0;
    return a[(static_cast<std::size_t>(r) * cols + static_cast<std::size_t>(c)) * k + ch];
  };
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      for (std::size_t ch = 0; ch < k; ++ch) {
        const long rr = static_cast<long>(r), cc = static_cast<long>(c);
        tmp[(r * cols + c) * k + ch] = 0.25 * at(in, rr, cc - 1, ch) + 0.5 * at(in, rr, cc, ch) + 0.25 * at(in, rr, cc + 1, ch);
      }
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      for (std::size_t ch = 0; ch < k; ++ch) {
        const long rr = static_cast<long>(r), cc = static_cast<long>(c);
        out[(r * cols + c) * k + ch] = 0.25 * at(tmp, rr - 1, cc, ch) + 0.5 * at(tmp, rr, cc, ch) + 0.25 * at(tmp, rr + 1, cc, ch);
      }
  return out;
}

std::vector<double> embedding_matrix(std::uint64_t seed, std::size_t k, std::size_t c) {
  Xoshiro256 rng(seed);
  std::vector<double> m(k * c);
  for (auto& v : m) v = rng.uniform(-1.0, 1.0);
  return m;
}

// [pixels, K] x [K, C] plus seeded noise.
std::vector<double> embed(const std::vector<double>& raster, std::size_t k, const std::vector<double>& proj,
                          std::size_t c, double noise, std::uint64_t noise_seed) {
  const std::size_t pixels = raster.size() / k;
  std::vector<double> out(pixels * c, 0.0);
  for (std::size_t p = 0; p < pixels; ++p)
    for (std::size_t j = 0; j < k; ++j) {
      const double v = raster[p * k + j];
      if (v == 0.0) continue;
      for (std::size_t o = 0; o < c; ++o) out[p * c + o] += v * proj[j * c + o];
    }
  if (noise > 0.0) {
    Xoshiro256 rng(noise_seed);
    for (auto& v : out) v += noise * rng.normal();
  }
  return out;
}

}  // namespace

void validate_scene_spec(const SceneSpec& s) {
  validate_grid(s.grid);
  PERCMAP_REQUIRE(s.num_ped >= 0 && s.num_div >= 0 && s.num_bdr >= 0, "scene spec: counts must be >= 0");
  PERCMAP_REQUIRE(s.line_length.lo > 0.0 && s.line_length.hi >= s.line_length.lo, "scene spec: bad line_length");
  PERCMAP_REQUIRE(s.max_turn >= 0.0 && s.max_turn <= 1.0, "scene spec: max_turn must be in [0, 1]");
  PERCMAP_REQUIRE(s.crossing_width.lo > 0.0 && s.crossing_width.hi >= s.crossing_width.lo,
                  "scene spec: bad crossing_width");
  PERCMAP_REQUIRE(s.crossing_depth.lo > 0.0 && s.crossing_depth.hi >= s.crossing_depth.lo,
                  "scene spec: bad crossing_depth");
  PERCMAP_REQUIRE(s.crossing_jitter >= 0.0, "scene spec: crossing_jitter must be >= 0");
  PERCMAP_REQUIRE(s.margin >= 0.0 && 2.0 * s.margin < s.grid.x_max - s.grid.x_min &&
                      2.0 * s.margin < s.grid.y_max - s.grid.y_min,
                  "scene spec: margin leaves no room inside the grid");
  PERCMAP_REQUIRE(s.min_separation >= 0.0, "scene spec: min_separation must be >= 0");
  PERCMAP_REQUIRE(s.noise_bev >= 0.0 && s.noise_pv >= 0.0, "scene spec: noise must be >= 0");
  PERCMAP_REQUIRE(s.channels > 0 && s.pv_height > 0 && s.pv_width > 0, "scene spec: feature shape must be positive");
}

nlohmann::json to_json(const SceneSpec& s) {
  return {{"seed", s.seed},
          {"embed_seed", s.embed_seed},
          {"counts", {{"ped", s.num_ped}, {"div", s.num_div}, {"bdr", s.num_bdr}}},
          {"line_length", {s.line_length.lo, s.line_length.hi}},
          {"max_turn", s.max_turn},
          {"crossing_width", {s.crossing_width.lo, s.crossing_width.hi}},
          {"crossing_depth", {s.crossing_depth.lo, s.crossing_depth.hi}},
          {"crossing_jitter", s.crossing_jitter},
          {"margin", s.margin},
          {"min_separation", s.min_separation},
          {"noise_bev", s.noise_bev},
          {"noise_pv", s.noise_pv},
          {"channels", s.channels},
          {"pv_size", {s.pv_height, s.pv_width}},
          {"grid", to_json(s.grid)},
          {"rig", s.rig}};
}

SceneSpec scene_spec_from_json(const nlohmann::json& j) {
  SceneSpec s;
  try {
    auto range = [&](const char* key, Range& r) {
      if (!j.contains(key)) return;
      const auto& a = j.at(key);
      PERCMAP_REQUIRE(a.is_array() && a.size() == 2, std::string("scene spec: ") + key + " must be [lo, hi]");
      r = {a[0].get<double>(), a[1].get<double>()};
    };
    PERCMAP_REQUIRE(j.is_object(), "scene spec: must be a JSON object");
    static const std::set<std::string> known{"seed",    "embed_seed",      "counts",          "line_length",
                                             "max_turn", "crossing_width", "crossing_depth",  "crossing_jitter",
                                             "margin",  "min_separation",  "noise_bev",       "noise_pv",
                                             "channels", "pv_size",        "grid",            "rig"};
    for (const auto& [k, v] : j.items())
      PERCMAP_REQUIRE(known.count(k) == 1, "scene spec: unknown key '" + k + "'");
    s.seed = j.value("seed", s.seed);
    s.embed_seed = j.value("embed_seed", s.embed_seed);
    if (j.contains("counts")) {
      const auto& c = j.at("counts");
      for (const auto& [k, v] : c.items())
        PERCMAP_REQUIRE(k == "ped" || k == "div" || k == "bdr", "scene spec: unknown count '" + k + "'");
      s.num_ped = c.value("ped", s.num_ped);
      s.num_div = c.value("div", s.num_div);
      s.num_bdr = c.value("bdr", s.num_bdr);
    }
    range("line_length", s.line_length);
    range("crossing_width", s.crossing_width);
    range("crossing_depth", s.crossing_depth);
    s.max_turn = j.value("max_turn", s.max_turn);
    s.crossing_jitter = j.value("crossing_jitter", s.crossing_jitter);
    s.margin = j.value("margin", s.margin);
    s.min_separation = j.value("min_separation", s.min_separation);
    s.noise_bev = j.value("noise_bev", s.noise_bev);
    s.noise_pv = j.value("noise_pv", s.noise_pv);
    s.channels = j.value("channels", s.channels);
    if (j.contains("pv_size")) {
      s.pv_height = j.at("pv_size").at(0).get<int>();
      s.pv_width = j.at("pv_size").at(1).get<int>();
    }
    if (j.contains("grid")) s.grid = grid_from_json(j.at("grid"));
    s.rig = j.value("rig", s.rig);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("scene spec: ") + e.what());
  }
  validate_scene_spec(s);
  return s;
}

CameraRig resolve_rig(const std::string& rig) {
  if (rig == "toy") return CameraRig::toy();
  if (rig == "surround") return CameraRig::surround();
  return load_rig(rig);
}

VectorMap generate_map(const SceneSpec& spec) {
  validate_scene_spec(spec);
  Xoshiro256 rng(derive_seed(spec.seed, kMapStream));
  VectorMap map;
  auto place = [&](auto&& sample, const char* what) {
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
      MapInstance cand = sample();
      if (!inside_margin(spec.grid, cand.points, spec.margin)) continue;
      if (cand.closed() && !convex_ccw(cand.points)) continue;
      if (!separated(cand, map.instances, spec.min_separation)) continue;
      map.instances.push_back(std::move(cand));
      return;
    }
    throw ContractError(std::string("scene spec infeasible: could not place ") + what + " after " +
                        std::to_string(kMaxAttempts) + " attempts");
  };
  for (int i = 0; i < spec.num_ped; ++i) place([&] { return sample_crossing(rng, spec); }, "ped crossing");
  for (int i = 0; i < spec.num_div; ++i) place([&] { return sample_line(rng, spec, Category::div()); }, "divider");
  for (int i = 0; i < spec.num_bdr; ++i) place([&] { return sample_line(rng, spec, Category::bdr()); }, "boundary");
  return map;
}

SceneFeatures render_features(const VectorMap& gt, const CameraRig& rig, const BevGrid& grid, const SceneSpec& spec) {
  validate_grid(grid);
  validate_rig(rig);
  const std::size_t nc = kNumCategories;
  const std::size_t c = static_cast<std::size_t>(spec.channels);
  const std::size_t h = static_cast<std::size_t>(grid.height), w = static_cast<std::size_t>(grid.width);

  const RasterMask raster = rasterize_instances(gt, grid, RasterOptions{});
  const std::vector<double> bev_raster(raster.mask.data().begin(), raster.mask.data().end());
  const auto bev_proj = embedding_matrix(derive_seed(spec.embed_seed, kBevEmbed), nc, c);
  auto f_b = embed(blur3(bev_raster, h, w, nc), nc, bev_proj, c, spec.noise_bev, derive_seed(spec.seed, kBevNoise));

  const std::size_t n = rig.size();
  const std::size_t ph = static_cast<std::size_t>(spec.pv_height), pw = static_cast<std::size_t>(spec.pv_width);
  std::vector<double> canvas(n * ph * pw * nc, 0.0);
  for (const auto& inst : gt.instances) {
    if (inst.category.id < 0 || inst.category.id >= kNumCategories) continue;
    const double len = chain_length(inst.points, inst.closed());
    const auto samples = static_cast<std::size_t>(std::ceil(len / kPvSampleStep)) + 2;
    for (const auto& p : resample_polyline(inst, samples).points) {
      for (const auto& hit : visible_cameras(rig, {p.x, p.y, 0.0})) {
        const auto& cam = rig.cameras[hit.index];
        const auto col = std::min(pw - 1, static_cast<std::size_t>(hit.u * static_cast<double>(pw) / cam.image_width));
        const auto row = std::min(ph - 1, static_cast<std::size_t>(hit.v * static_cast<double>(ph) / cam.image_height));
        canvas[((hit.index * ph + row) * pw + col) * nc + static_cast<std::size_t>(inst.category.id)] = 1.0;
      }
    }
  }
  std::vector<double> blurred(canvas.size());
  const std::size_t view = ph * pw * nc;
  for (std::size_t v = 0; v < n; ++v) {
    const std::vector<double> one(canvas.begin() + static_cast<long>(v * view),
                                  canvas.begin() + static_cast<long>((v + 1) * view));
    const auto b = blur3(one, ph, pw, nc);
    std::copy(b.begin(), b.end(), blurred.begin() + static_cast<long>(v * view));
  }
  const auto pv_proj = embedding_matrix(derive_seed(spec.embed_seed, kPvEmbed), nc, c);
  auto f_p = embed(blurred, nc, pv_proj, c, spec.noise_pv, derive_seed(spec.seed, kPvNoise));

  return {Tensor::from_data({n, ph, pw, c}, std::move(f_p)), Tensor::from_data({h, w, c}, std::move(f_b))};
}

SceneBundle make_scene(const SceneSpec& spec, const std::string& frame_id) {
  SceneBundle s;
  s.spec = spec;
  s.rig = resolve_rig(spec.rig);
  s.gt = generate_map(spec);
  s.gt.frame_id = frame_id;
  auto feats = render_features(s.gt, s.rig, spec.grid, spec);
  s.f_p = feats.f_p;
  s.f_b = feats.f_b;
  return s;
}

void save_scene(const SceneBundle& scene, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
  const fs::path p(dir);
  save_map(scene.gt, (p / "gt.json").string());
  save_rig(scene.rig, (p / "rig.json").string());
  write_json_file((p / "spec.json").string(), to_json(scene.spec));
  save_checkpoint((p / "features.bin").string(), {{"f_p", scene.f_p}, {"f_b", scene.f_b}},
                  {{"frame_id", scene.gt.frame_id}});
}

SceneBundle load_scene(const std::string& dir) {
  const std::filesystem::path p(dir);
  SceneBundle s;
  const std::string spec_path = (p / "spec.json").string();
  try {
    s.spec = scene_spec_from_json(read_json_file(spec_path));
  } catch (const ContractError& e) {
    throw IoError(spec_path + ": " + e.what());
  }
  s.gt = load_map((p / "gt.json").string());
  s.rig = load_rig((p / "rig.json").string());
  const auto tensors = load_checkpoint((p / "features.bin").string());
  s.f_p = find_tensor(tensors, "f_p");
  s.f_b = find_tensor(tensors, "f_b");
  PERCMAP_REQUIRE(s.f_b.rank() == 3 && s.f_b.dim(0) == static_cast<std::size_t>(s.spec.grid.height) &&
                      s.f_b.dim(1) == static_cast<std::size_t>(s.spec.grid.width),
                  dir + ": BEV features do not match the scene grid");
  PERCMAP_REQUIRE(s.f_p.rank() == 4 && s.f_p.dim(0) == s.rig.size(), dir + ": PV features do not match the rig");
  return s;
}

}  // namespace percmap
