#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "percmap/camera.hpp"
#include "percmap/checkpoint.hpp"
#include "percmap/map_core.hpp"
#include "percmap/ops.hpp"
#include "percmap/tensor.hpp"

namespace percmap {

struct ModelConfig {
  std::size_t num_instances = 50;   // N_m
  std::size_t num_points = 20;      // N_p
  std::size_t activated = 25;       // N_m^P, per view
  std::size_t channels = 16;        // C
  std::size_t pv_height = 16;       // H_p
  std::size_t pv_width = 16;        // W_p
  std::size_t down_layers = 2;      // depth of the BEV downsample stack
  BevGrid grid = BevGrid::toy();    // grid.downsample is d
  std::string rig = "toy";          // "toy", "surround" or a rig JSON path
  std::uint64_t seed = 0;
  std::string pooling = "mean";     // PV heatmap -> query embedding reduction
  double z_ground = 0.0;
  // Q_0 / E_0 and the reference logits are stored as table / gain. Plain
  // gradient descent then moves them gain^2 times faster than the shared
  // weights while the forward values and init ranges stay the same.
  double query_gain = 4.0;
  double ref_gain = 10.0;
  bool use_cia = true;
  bool use_dpe = true;

  // N_m = 10, N_m^P = 5 on the toy grid and rig.
  static ModelConfig toy();
};

void validate_model_config(const ModelConfig& cfg);
nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct CiaParams {
  Tensor act_w;  // [3,3,C,N_m^P]
  Tensor act_b;  // [N_m^P]
  Tensor lin_w;  // [C,C], applied per view
  Tensor lin_b;  // [C]
  Tensor mix_w;  // [N_m, N*N_m^P]
};

struct DpeParams {
  std::vector<Tensor> down_w;  // first layer stride d, the rest stride 1
  std::vector<Tensor> down_b;
  Tensor cat_w, cat_b;        // 3x3, C -> N_c
  Tensor pv_w, pv_b;          // 3x3, C -> N_c on F_P
  Tensor canvas_w, canvas_b;  // 3x3, N_c -> N_c on F_P^M
  Tensor embed_w, embed_b;    // 1x1, N_c -> C
  Tensor fuse_w, fuse_b;      // 1x1, 2C -> C
};

struct QuerySet {
  Tensor q0;  // [N_m*N_p, C]
  Tensor e0;  // [N_m*N_p, C]
};

struct DecoderParams {
  Tensor wk;     // [C,C]
  Tensor wv;     // [C,C]
  Tensor wvp;    // [C,C], positional part of the values
  Tensor w_pts;  // [C,2]
  Tensor b_pts;  // [2]
  Tensor ref;    // [N_m*N_p, 2] per-query reference logits, divided by the gain
  Tensor w_cls;  // [C,N_c]
  Tensor b_cls;  // [N_c]
};

// Where each downsampled BEV cell center (at z_ground) lands in each camera
// image. dst indexes [N, H_I, W_I]; src indexes cells of the [H/d, W/d] grid
// in row-major order.
struct BevProjection {
  Shape canvas_shape;  // [N, H_I, W_I, N_c]
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<ops::ScatterEntry> entries;
};

BevProjection compute_bev_projection(const CameraRig& rig, const BevGrid& grid, double z_ground);

// Fixed sine table of normalized cell-center coordinates, [H*W, C].
Tensor positional_table(const BevGrid& grid, std::size_t channels);

struct Model {
  ModelConfig config;
  CameraRig rig;
  CiaParams cia;
  DpeParams dpe;
  QuerySet queries;
  DecoderParams decoder;
  BevProjection projection;
  Tensor pos_table;
};

struct ParamSlot {
  std::string name;
  Tensor* tensor;
  bool active;  // belongs to an enabled module
};

std::vector<ParamSlot> param_slots(Model& model);
// Active parameters in a fixed order; handles share storage with the model.
std::vector<NamedTensor> parameters(const Model& model);
std::size_t num_parameters(const Model& model);

// Seeded uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; every tensor draws
// from a stream keyed by its name, so configurations that share a parameter
// start from identical values.
Model make_model(const ModelConfig& cfg, const CameraRig& rig);
Model make_model(const ModelConfig& cfg);
// Deep copy of the parameters (fresh leaves, no gradients).
Model clone_model(const Model& model);

void save_model(const Model& model, const std::string& path, const nlohmann::json& meta = nlohmann::json::object());
// Replaces the active parameters of `model` with the checkpoint's values.
void load_model_params(Model& model, const std::string& path);

// Q_In [N_m, C].
Tensor cia_forward(const Tensor& f_p, const CiaParams& params);

struct DpeOutput {
  Tensor e_i;         // [N_m*N_p, C]
  Tensor f_b_prime;   // [H,W,C]
  Tensor heatmap;     // [N,H_I,W_I,N_c] logits
  Tensor f_b_m;       // [1,H/d,W/d,C]
  Tensor canvas;      // F_P^M, [N,H_I,W_I,N_c]
};

DpeOutput dpe_forward(const Tensor& f_p, const Tensor& f_b, const BevProjection& projection, std::size_t downsample,
                      std::size_t num_queries, const DpeParams& params);

// Point logits are linear(h) + ref_gain * ref, mapped through a sigmoid to
// the grid ranges; class logits come from the mean of each instance's point
// features.
struct DecodeOutput {
  Tensor v_hat;  // [N_m,N_p,2]
  Tensor c_hat;  // [N_m,N_c] logits
};

DecodeOutput decode_stub(const Tensor& q, const Tensor& e, const Tensor& f_b_prime, const Tensor& pos_table,
                         const BevGrid& grid, std::size_t num_points, const DecoderParams& params,
                         double ref_gain = 1.0);

// query_gain * stored table.
Tensor effective_q0(const Model& model);
Tensor effective_e0(const Model& model);

struct ForwardResult {
  Tensor q_in;       // undefined without CIA
  Tensor q;
  Tensor e;
  Tensor f_b_prime;
  Tensor heatmap;    // undefined without DPE
  Tensor v_hat;
  Tensor c_hat;
};

// f_p [N,H_p,W_p,C], f_b [H,W,C].
ForwardResult forward(const Model& model, const Tensor& f_p, const Tensor& f_b);

}  // namespace percmap
