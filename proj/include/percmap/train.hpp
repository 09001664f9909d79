#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "percmap/losses.hpp"
#include "percmap/model.hpp"
#include "percmap/synth.hpp"
#include "percmap/targets.hpp"

namespace percmap {

struct TrainConfig {
  std::size_t steps = 2000;
  double lr = 0.005;
  bool use_ris = true;
  double sigma = 3.0;
  double line_width = 1.0;
  LossWeights weights;
  HeatmapFocalParams heatmap;
  MatchingParams matching;
  double ris_log_eps = 1e-6;
  std::size_t jobs = 1;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

// One frame's inputs and targets, ready for the loss.
struct FrameData {
  std::string frame_id;
  Tensor f_p;
  Tensor f_b;
  VectorMap gt;           // as stored
  VectorMap gt_resampled;  // N_p points per instance
  HeatmapTarget heatmap;
  RasterMask raster;
};

FrameData prepare_frame(const SceneBundle& scene, const ModelConfig& model_cfg, const TrainConfig& cfg);

struct LossBreakdown {
  double total = 0.0;
  double heatmap = 0.0;
  double ris = 0.0;
  double cls = 0.0;
  double pts = 0.0;
};

nlohmann::json to_json(const LossBreakdown& l);

// Total loss on one frame; the heatmap term is present only with DPE and the RIS
// term only with use_ris.
Tensor frame_loss(const Model& model, const FrameData& frame, const TrainConfig& cfg, LossBreakdown* parts = nullptr);

// Mean over frames of frame_loss; gradients of the active parameters are
// written into the model (previous gradients are discarded). Frames are
// spread over cfg.jobs workers; the reduction runs in frame order.
LossBreakdown loss_and_grad(Model& model, const std::vector<FrameData>& frames, const TrainConfig& cfg);

// Plain gradient descent. curve[k] is the loss at the parameters after k
// steps, so curve has steps + 1 entries. Non-finite values abort with
// NumericalError naming the step.
struct TrainResult {
  std::vector<LossBreakdown> curve;
};

using StepCallback = std::function<void(std::size_t step, const LossBreakdown& loss)>;

TrainResult train(Model& model, const std::vector<FrameData>& frames, const TrainConfig& cfg,
                  const StepCallback& on_step = {});

VectorMap predict(const Model& model, const FrameData& frame);

}  // namespace percmap
