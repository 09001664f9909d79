#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "percmap/camera.hpp"
#include "percmap/map_core.hpp"
#include "percmap/tensor.hpp"

namespace percmap {

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  // Seeds the fixed channel embeddings; shared by every frame of a dataset so
  // the feature code is stable across frames.
  std::uint64_t embed_seed = 0x5EED;
  int num_ped = 1;
  int num_div = 2;
  int num_bdr = 2;
  Range line_length{12.0, 30.0};      // meters, dividers and boundaries
  double max_turn = 0.25;             // tan(half turn angle) per segment
  Range crossing_width{6.0, 10.0};    // across the crossing direction
  Range crossing_depth{3.0, 5.0};     // along the crossing direction
  double crossing_jitter = 0.3;       // per-corner, meters
  double margin = 1.0;                // keep-out band inside the grid edge
  double min_separation = 3.0;        // between vertices of same-class instances
  double noise_bev = 0.05;
  double noise_pv = 0.05;
  int channels = 16;
  int pv_height = 16;
  int pv_width = 16;
  BevGrid grid = BevGrid::toy();
  std::string rig = "toy";  // "toy", "surround" or a rig JSON path
};

void validate_scene_spec(const SceneSpec& spec);
nlohmann::json to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const nlohmann::json& j);
CameraRig resolve_rig(const std::string& rig);

// Dividers and boundaries are 7-vertex chains made of two constant-turn arcs;
// crossings are jittered convex quadrilaterals. Infeasible specs throw
// ContractError.
VectorMap generate_map(const SceneSpec& spec);

struct SceneFeatures {
  Tensor f_p;  // [N, pv_height, pv_width, C]
  Tensor f_b;  // [H, W, C]
};

// F_B: GT raster -> 3x3 binomial blur -> fixed channel embedding -> noise.
// F_P: dense GT samples projected into per-camera canvases at feature
// resolution, then the same blur / embedding / noise chain.
SceneFeatures render_features(const VectorMap& gt, const CameraRig& rig, const BevGrid& grid,
                              const SceneSpec& spec);

struct SceneBundle {
  SceneSpec spec;
  VectorMap gt;
  CameraRig rig;
  Tensor f_p;
  Tensor f_b;
};

SceneBundle make_scene(const SceneSpec& spec, const std::string& frame_id);

// Frame directory: gt.json, rig.json, features.bin, spec.json.
void save_scene(const SceneBundle& scene, const std::string& dir);
SceneBundle load_scene(const std::string& dir);

}  // namespace percmap
