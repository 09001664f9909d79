#include "percmap/train.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <thread>

#include "percmap/errors.hpp"

namespace percmap {

nlohmann::json to_json(const TrainConfig& c) {
  return {{"steps", c.steps},
          {"lr", c.lr},
          {"use_ris", c.use_ris},
          {"sigma", c.sigma},
          {"line_width", c.line_width},
          {"weights", {{"heatmap", c.weights.heatmap}, {"ris", c.weights.ris}}},
          {"heatmap_focal",
           {{"alpha", c.heatmap.alpha}, {"beta", c.heatmap.beta}, {"binarize_target", c.heatmap.binarize_target}}},
          {"matching",
           {{"cls_cost_weight", c.matching.cls_cost_weight},
            {"pts_cost_weight", c.matching.pts_cost_weight},
            {"focal_alpha", c.matching.focal_alpha},
            {"focal_gamma", c.matching.focal_gamma}}},
          {"ris_log_eps", c.ris_log_eps}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.steps = j.value("steps", c.steps);
    c.lr = j.value("lr", c.lr);
    c.use_ris = j.value("use_ris", c.use_ris);
    c.sigma = j.value("sigma", c.sigma);
    c.line_width = j.value("line_width", c.line_width);
    if (j.contains("weights")) {
      c.weights.heatmap = j["weights"].value("heatmap", c.weights.heatmap);
      c.weights.ris = j["weights"].value("ris", c.weights.ris);
    }
    if (j.contains("heatmap_focal")) {
      const auto& h = j["heatmap_focal"];
      c.heatmap.alpha = h.value("alpha", c.heatmap.alpha);
      c.heatmap.beta = h.value("beta", c.heatmap.beta);
      c.heatmap.binarize_target = h.value("binarize_target", c.heatmap.binarize_target);
    }
    if (j.contains("matching")) {
      const auto& m = j["matching"];
      c.matching.cls_cost_weight = m.value("cls_cost_weight", c.matching.cls_cost_weight);
      c.matching.pts_cost_weight = m.value("pts_cost_weight", c.matching.pts_cost_weight);
      c.matching.focal_alpha = m.value("focal_alpha", c.matching.focal_alpha);
      c.matching.focal_gamma = m.value("focal_gamma", c.matching.focal_gamma);
    }
    c.ris_log_eps = j.value("ris_log_eps", c.ris_log_eps);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("train config: ") + e.what());
  }
  PERCMAP_REQUIRE(std::isfinite(c.lr) && c.lr > 0.0, "train config: lr must be positive");
  PERCMAP_REQUIRE(c.sigma > 0.0, "train config: sigma must be positive");
  PERCMAP_REQUIRE(c.line_width >= 1.0, "train config: line_width must be >= 1");
  return c;
}

nlohmann::json to_json(const LossBreakdown& l) {
  return {{"total", l.total}, {"heatmap", l.heatmap}, {"ris", l.ris}, {"cls", l.cls}, {"pts", l.pts}};
}

FrameData prepare_frame(const SceneBundle& scene, const ModelConfig& mc, const TrainConfig& cfg) {
  FrameData f;
  f.frame_id = scene.gt.frame_id;
  f.f_p = scene.f_p;
  f.f_b = scene.f_b;
  f.gt = scene.gt;
  f.gt_resampled.frame_id = scene.gt.frame_id;
  for (const auto& inst : scene.gt.instances) f.gt_resampled.instances.push_back(resample_polyline(inst, mc.num_points));
  if (mc.use_dpe) f.heatmap = make_heatmap_target(scene.gt, scene.rig, cfg.sigma, mc.z_ground);
  if (cfg.use_ris) f.raster = rasterize_instances(scene.gt, mc.grid, RasterOptions{cfg.line_width, true});
  return f;
}

Tensor frame_loss(const Model& model, const FrameData& frame, const TrainConfig& cfg, LossBreakdown* parts) {
  const ForwardResult out = forward(model, frame.f_p, frame.f_b);
  LossComponents comp;
  if (out.heatmap.defined()) comp.heatmap = heatmap_loss(out.heatmap, frame.heatmap, cfg.heatmap);
  if (cfg.use_ris) {
    RisParams rp;
    rp.raster = RasterOptions{cfg.line_width, true};
    rp.log_eps = cfg.ris_log_eps;
    comp.ris = ris_loss(out.v_hat, out.c_hat, frame.raster, model.config.grid, rp);
  }
  const auto m = matching_losses(out.v_hat, out.c_hat, frame.gt_resampled, cfg.matching);
  comp.cls = m.cls;
  comp.pts = m.pts;
  Tensor total = total_loss(comp, cfg.weights);
  if (parts) {
    parts->total = total.item();
    parts->heatmap = comp.heatmap.defined() ? comp.heatmap.item() : 0.0;
    parts->ris = comp.ris.defined() ? comp.ris.item() : 0.0;
    parts->cls = comp.cls.item();
    parts->pts = comp.pts.item();
  }
  return total;
}

namespace {

// Gradient of one frame's loss with respect to the active parameters, flattened
// in parameter order.
std::vector<double> frame_gradient(Model& worker, const FrameData& frame, const TrainConfig& cfg, LossBreakdown& parts) {
  const auto params = parameters(worker);
  for (const auto& p : params) p.tensor.impl()->grad.assign(p.tensor.numel(), 0.0);
  backward(frame_loss(worker, frame, cfg, &parts));
  std::vector<double> g;
  for (const auto& p : params) g.insert(g.end(), p.tensor.grad().begin(), p.tensor.grad().end());
  return g;
}

}  // namespace

LossBreakdown loss_and_grad(Model& model, const std::vector<FrameData>& frames, const TrainConfig& cfg) {
  PERCMAP_REQUIRE(!frames.empty(), "training needs at least one frame");
  const std::size_t nf = frames.size();
  std::vector<std::vector<double>> grads(nf);
  std::vector<LossBreakdown> parts(nf);
  const std::size_t jobs = std::clamp<std::size_t>(cfg.jobs, 1, nf);
  if (jobs == 1) {
    for (std::size_t f = 0; f < nf; ++f) grads[f] = frame_gradient(model, frames[f], cfg, parts[f]);
  } else {
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j) {
      pool.emplace_back([&, j] {
        try {
          Model worker = clone_model(model);
          for (std::size_t f = j; f < nf; f += jobs) grads[f] = frame_gradient(worker, frames[f], cfg, parts[f]);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  const double inv = 1.0 / static_cast<double>(nf);
  std::vector<double> acc(grads[0].size(), 0.0);
  LossBreakdown mean;
  for (std::size_t f = 0; f < nf; ++f) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += grads[f][i];
    mean.total += parts[f].total;
    mean.heatmap += parts[f].heatmap;
    mean.ris += parts[f].ris;
    mean.cls += parts[f].cls;
    mean.pts += parts[f].pts;
  }
  mean.total *= inv;
  mean.heatmap *= inv;
  mean.ris *= inv;
  mean.cls *= inv;
  mean.pts *= inv;
  std::size_t off = 0;
  for (const auto& p : parameters(model)) {
    auto& g = p.tensor.impl()->grad;
    g.assign(p.tensor.numel(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = acc[off + i] * inv;
    off += g.size();
  }
  return mean;
}

TrainResult train(Model& model, const std::vector<FrameData>& frames, const TrainConfig& cfg,
                  const StepCallback& on_step) {
  TrainResult res;
  auto params = parameters(model);
  for (std::size_t step = 0;; ++step) {
    LossBreakdown loss;
    try {
      loss = loss_and_grad(model, frames, cfg);
    } catch (const NumericalError& e) {
      throw NumericalError("non-finite value at step " + std::to_string(step) + ": " + e.what());
    }
    if (!std::isfinite(loss.total))
      throw NumericalError("non-finite loss at step " + std::to_string(step));
    res.curve.push_back(loss);
    if (on_step) on_step(step, loss);
    if (step == cfg.steps) break;
    for (auto& p : params) {
      auto w = p.tensor.mutable_data();
      const auto g = p.tensor.grad();
      for (std::size_t i = 0; i < w.size(); ++i) {
        w[i] -= cfg.lr * g[i];
        if (!std::isfinite(w[i]))
          throw NumericalError("non-finite parameter " + p.name + " after step " + std::to_string(step));
      }
    }
  }
  return res;
}

VectorMap predict(const Model& model, const FrameData& frame) {
  const ForwardResult out = forward(model, frame.f_p.detach(), frame.f_b.detach());
  return predictions_to_map(out.v_hat, out.c_hat, frame.frame_id);
}

}  // namespace percmap
