#include "percmap/model.hpp"

#include <cmath>
#include <numbers>

#include "percmap/errors.hpp"
#include "percmap/rng.hpp"
#include "percmap/synth.hpp"

namespace percmap {
namespace {

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

Tensor init_uniform(std::uint64_t seed, const std::string& name, Shape shape, double bound) {
  Xoshiro256 rng(derive_seed(seed, name_hash(name)));
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(shape), std::move(data), true);
}

std::size_t image_scale(const CameraRig& rig, const ModelConfig& cfg) {
  PERCMAP_REQUIRE(rig.size() > 0, "model: rig has no cameras");
  const auto& c0 = rig.cameras.front();
  for (const auto& c : rig.cameras)
    PERCMAP_REQUIRE(c.image_height == c0.image_height && c.image_width == c0.image_width,
                    "model: all cameras must share one image size");
  const auto hi = static_cast<std::size_t>(c0.image_height), wi = static_cast<std::size_t>(c0.image_width);
  PERCMAP_REQUIRE(hi % cfg.pv_height == 0 && wi % cfg.pv_width == 0 && hi / cfg.pv_height == wi / cfg.pv_width,
                  "model: image size must be one integer multiple of the PV feature size");
  return hi / cfg.pv_height;
}

}  // namespace

ModelConfig ModelConfig::toy() {
  ModelConfig cfg;
  cfg.num_instances = 10;
  cfg.activated = 5;
  return cfg;
}

void validate_model_config(const ModelConfig& c) {
  validate_grid(c.grid);
  PERCMAP_REQUIRE(c.num_instances > 0 && c.num_points >= 2 && c.activated > 0 && c.channels > 0,
                  "model config: N_m, N_p, N_m^P and C must be positive (N_p >= 2)");
  PERCMAP_REQUIRE(c.pv_height > 0 && c.pv_width > 0, "model config: PV feature size must be positive");
  PERCMAP_REQUIRE(c.down_layers >= 1, "model config: down_layers must be >= 1");
  const auto d = static_cast<std::size_t>(c.grid.downsample);
  PERCMAP_REQUIRE(static_cast<std::size_t>(c.grid.height) % d == 0 && static_cast<std::size_t>(c.grid.width) % d == 0,
                  "model config: grid size must be divisible by the downsample factor");
  PERCMAP_REQUIRE(c.pooling == "mean", "model config: unsupported pooling mode '" + c.pooling + "'");
  PERCMAP_REQUIRE(std::isfinite(c.z_ground), "model config: z_ground must be finite");
  PERCMAP_REQUIRE(c.query_gain > 0.0 && c.ref_gain > 0.0, "model config: gains must be positive");
}

nlohmann::json to_json(const ModelConfig& c) {
  return {{"num_instances", c.num_instances},
          {"num_points", c.num_points},
          {"activated", c.activated},
          {"channels", c.channels},
          {"pv_size", {c.pv_height, c.pv_width}},
          {"down_layers", c.down_layers},
          {"grid", to_json(c.grid)},
          {"rig", c.rig},
          {"seed", c.seed},
          {"pooling", c.pooling},
          {"z_ground", c.z_ground},
          {"query_gain", c.query_gain},
          {"ref_gain", c.ref_gain},
          {"use_cia", c.use_cia},
          {"use_dpe", c.use_dpe}};
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c = ModelConfig::toy();
  try {
    c.num_instances = j.value("num_instances", c.num_instances);
    c.num_points = j.value("num_points", c.num_points);
    c.activated = j.value("activated", c.activated);
    c.channels = j.value("channels", c.channels);
    if (j.contains("pv_size")) {
      c.pv_height = j.at("pv_size").at(0).get<std::size_t>();
      c.pv_width = j.at("pv_size").at(1).get<std::size_t>();
    }
    c.down_layers = j.value("down_layers", c.down_layers);
    if (j.contains("grid")) c.grid = grid_from_json(j.at("grid"));
    c.rig = j.value("rig", c.rig);
    c.seed = j.value("seed", c.seed);
    c.pooling = j.value("pooling", c.pooling);
    c.z_ground = j.value("z_ground", c.z_ground);
    c.query_gain = j.value("query_gain", c.query_gain);
    c.ref_gain = j.value("ref_gain", c.ref_gain);
    c.use_cia = j.value("use_cia", c.use_cia);
    c.use_dpe = j.value("use_dpe", c.use_dpe);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(std::string("model config: ") + e.what());
  }
  validate_model_config(c);
  return c;
}

BevProjection compute_bev_projection(const CameraRig& rig, const BevGrid& grid, double z_ground) {
  validate_rig(rig);
  const auto d = static_cast<std::size_t>(grid.downsample);
  BevProjection p;
  p.rows = static_cast<std::size_t>(grid.height) / d;
  p.cols = static_cast<std::size_t>(grid.width) / d;
  const auto hi = static_cast<std::size_t>(rig.cameras.front().image_height);
  const auto wi = static_cast<std::size_t>(rig.cameras.front().image_width);
  p.canvas_shape = {rig.size(), hi, wi, static_cast<std::size_t>(kNumCategories)};
  const double cw = (grid.x_max - grid.x_min) / static_cast<double>(p.cols);
  const double ch = (grid.y_max - grid.y_min) / static_cast<double>(p.rows);
  for (std::size_t n = 0; n < rig.size(); ++n) {
    const auto& cam = rig.cameras[n];
    for (std::size_t r = 0; r < p.rows; ++r)
      for (std::size_t c = 0; c < p.cols; ++c) {
        const Point3 pt{grid.x_min + (static_cast<double>(c) + 0.5) * cw,
                        grid.y_min + (static_cast<double>(r) + 0.5) * ch, z_ground};
        const auto pix = project(cam, pt);
        if (!pix || !inside_image(cam, pix->u, pix->v)) continue;
        const auto u = static_cast<std::size_t>(std::floor(pix->u));
        const auto v = static_cast<std::size_t>(std::floor(pix->v));
        p.entries.push_back({(n * hi + v) * wi + u, r * p.cols + c});
      }
  }
  return p;
}

Tensor positional_table(const BevGrid& grid, std::size_t channels) {
  const auto h = static_cast<std::size_t>(grid.height), w = static_cast<std::size_t>(grid.width);
  const std::size_t half = channels / 2;
  std::vector<double> data(h * w * channels);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c)
      for (std::size_t k = 0; k < channels; ++k) {
        const bool use_x = k < half;
        const std::size_t j = use_x ? k : k - half;
        const double n = use_x ? (static_cast<double>(c) + 0.5) / static_cast<double>(w)
                               : (static_cast<double>(r) + 0.5) / static_cast<double>(h);
        const double arg = std::numbers::pi * std::ldexp(1.0, static_cast<int>(j / 2)) * n;
        data[(r * w + c) * channels + k] = (j % 2 == 0) ? std::sin(arg) : std::cos(arg);
      }
  return Tensor::from_data({h * w, channels}, std::move(data));
}

std::vector<ParamSlot> param_slots(Model& m) {
  const bool cia = m.config.use_cia, dpe = m.config.use_dpe;
  std::vector<ParamSlot> s{
      {"query.q0", &m.queries.q0, true},   {"query.e0", &m.queries.e0, true},
      {"cia.act_w", &m.cia.act_w, cia},    {"cia.act_b", &m.cia.act_b, cia},
      {"cia.lin_w", &m.cia.lin_w, cia},    {"cia.lin_b", &m.cia.lin_b, cia},
      {"cia.mix_w", &m.cia.mix_w, cia},
  };
  for (std::size_t i = 0; i < m.dpe.down_w.size(); ++i) {
    s.push_back({"dpe.down" + std::to_string(i) + "_w", &m.dpe.down_w[i], dpe});
    s.push_back({"dpe.down" + std::to_string(i) + "_b", &m.dpe.down_b[i], dpe});
  }
  const std::vector<ParamSlot> rest{
      {"dpe.cat_w", &m.dpe.cat_w, dpe},       {"dpe.cat_b", &m.dpe.cat_b, dpe},
      {"dpe.pv_w", &m.dpe.pv_w, dpe},         {"dpe.pv_b", &m.dpe.pv_b, dpe},
      {"dpe.canvas_w", &m.dpe.canvas_w, dpe}, {"dpe.canvas_b", &m.dpe.canvas_b, dpe},
      {"dpe.embed_w", &m.dpe.embed_w, dpe},   {"dpe.embed_b", &m.dpe.embed_b, dpe},
      {"dpe.fuse_w", &m.dpe.fuse_w, dpe},     {"dpe.fuse_b", &m.dpe.fuse_b, dpe},
      {"dec.wk", &m.decoder.wk, true},        {"dec.wv", &m.decoder.wv, true},
      {"dec.wvp", &m.decoder.wvp, true},      {"dec.w_pts", &m.decoder.w_pts, true},
      {"dec.b_pts", &m.decoder.b_pts, true},  {"dec.ref", &m.decoder.ref, true},
      {"dec.w_cls", &m.decoder.w_cls, true},
      {"dec.b_cls", &m.decoder.b_cls, true},
  };
  s.insert(s.end(), rest.begin(), rest.end());
  return s;
}

std::vector<NamedTensor> parameters(const Model& model) {
  std::vector<NamedTensor> out;
  for (const auto& slot : param_slots(const_cast<Model&>(model)))
    if (slot.active) out.push_back({slot.name, *slot.tensor});
  return out;
}

std::size_t num_parameters(const Model& model) {
  std::size_t n = 0;
  for (const auto& p : parameters(model)) n += p.tensor.numel();
  return n;
}

Model make_model(const ModelConfig& cfg, const CameraRig& rig) {
  validate_model_config(cfg);
  validate_rig(rig);
  image_scale(rig, cfg);
  Model m;
  m.config = cfg;
  m.rig = rig;
  const std::size_t c = cfg.channels, p = cfg.activated, nm = cfg.num_instances;
  const std::size_t nq = cfg.num_instances * cfg.num_points, nc = kNumCategories;
  const std::size_t nviews = rig.size();
  auto u = [&](const std::string& name, Shape shape, double fan_in) {
    return init_uniform(cfg.seed, name, std::move(shape), 1.0 / std::sqrt(fan_in));
  };
  const double k3 = 9.0 * static_cast<double>(c);
  const auto cd = static_cast<double>(c);

  // Tables are stored divided by their gain; the effective init is unchanged.
  m.queries.q0 = init_uniform(cfg.seed, "query.q0", {nq, c}, 1.0 / (std::sqrt(cd) * cfg.query_gain));
  m.queries.e0 = init_uniform(cfg.seed, "query.e0", {nq, c}, 1.0 / (std::sqrt(cd) * cfg.query_gain));

  m.cia.act_w = u("cia.act_w", {3, 3, c, p}, k3);
  m.cia.act_b = u("cia.act_b", {p}, k3);
  m.cia.lin_w = u("cia.lin_w", {c, c}, cd);
  m.cia.lin_b = u("cia.lin_b", {c}, cd);
  m.cia.mix_w = u("cia.mix_w", {nm, nviews * p}, static_cast<double>(nviews * p));

  for (std::size_t i = 0; i < cfg.down_layers; ++i) {
    const std::string base = "dpe.down" + std::to_string(i);
    m.dpe.down_w.push_back(u(base + "_w", {3, 3, c, c}, k3));
    m.dpe.down_b.push_back(u(base + "_b", {c}, k3));
  }
  m.dpe.cat_w = u("dpe.cat_w", {3, 3, c, nc}, k3);
  m.dpe.cat_b = u("dpe.cat_b", {nc}, k3);
  m.dpe.pv_w = u("dpe.pv_w", {3, 3, c, nc}, k3);
  m.dpe.pv_b = u("dpe.pv_b", {nc}, k3);
  m.dpe.canvas_w = u("dpe.canvas_w", {3, 3, nc, nc}, 9.0 * nc);
  m.dpe.canvas_b = u("dpe.canvas_b", {nc}, 9.0 * nc);
  m.dpe.embed_w = u("dpe.embed_w", {1, 1, nc, c}, static_cast<double>(nc));
  m.dpe.embed_b = u("dpe.embed_b", {c}, static_cast<double>(nc));
  m.dpe.fuse_w = u("dpe.fuse_w", {1, 1, 2 * c, c}, 2.0 * cd);
  m.dpe.fuse_b = u("dpe.fuse_b", {c}, 2.0 * cd);

  m.decoder.wk = u("dec.wk", {c, c}, cd);
  m.decoder.wv = u("dec.wv", {c, c}, cd);
  m.decoder.wvp = u("dec.wvp", {c, c}, cd);
  m.decoder.w_pts = u("dec.w_pts", {c, 2}, cd);
  m.decoder.b_pts = u("dec.b_pts", {2}, cd);
  m.decoder.ref = init_uniform(cfg.seed, "dec.ref", {nq, 2}, 1.0 / cfg.ref_gain);
  m.decoder.w_cls = u("dec.w_cls", {c, nc}, cd);
  m.decoder.b_cls = u("dec.b_cls", {nc}, cd);

  m.projection = compute_bev_projection(rig, cfg.grid, cfg.z_ground);
  m.pos_table = positional_table(cfg.grid, c);
  return m;
}

Model make_model(const ModelConfig& cfg) { return make_model(cfg, resolve_rig(cfg.rig)); }

Model clone_model(const Model& model) {
  Model m = model;
  for (auto& slot : param_slots(m)) {
    Tensor copy = slot.tensor->detach();
    copy.set_requires_grad(true);
    *slot.tensor = copy;
  }
  return m;
}

void save_model(const Model& model, const std::string& path, const nlohmann::json& meta) {
  nlohmann::json full = meta;
  full["model_config"] = to_json(model.config);
  save_checkpoint(path, parameters(model), full);
}

void load_model_params(Model& model, const std::string& path) {
  const auto tensors = load_checkpoint(path);
  for (auto& slot : param_slots(model)) {
    if (!slot.active) continue;
    const Tensor& src = find_tensor(tensors, slot.name);
    PERCMAP_REQUIRE(src.shape() == slot.tensor->shape(),
                    path + ": parameter " + slot.name + " has shape " + shape_str(src.shape()) + ", expected " +
                        shape_str(slot.tensor->shape()));
    auto dst = slot.tensor->mutable_data();
    std::copy(src.data().begin(), src.data().end(), dst.begin());
  }
}

Tensor cia_forward(const Tensor& f_p, const CiaParams& prm) {
  PERCMAP_REQUIRE(f_p.defined() && f_p.rank() == 4, "cia_forward: F_P must be [N,H_p,W_p,C]");
  const std::size_t n = f_p.dim(0), hw = f_p.dim(1) * f_p.dim(2), c = f_p.dim(3);
  const std::size_t p = prm.act_w.dim(3);
  PERCMAP_REQUIRE(prm.mix_w.dim(1) == n * p, "cia_forward: mixing weights expect " +
                                                 std::to_string(prm.mix_w.dim(1)) + " activated features, got " +
                                                 std::to_string(n * p));
  const Tensor act = ops::sigmoid(ops::conv2d(f_p, prm.act_w, prm.act_b, 1, 1));
  const Tensor f_in = ops::transpose_last2(ops::reshape(act, {n, hw, p}));
  const Tensor raw = ops::matmul(f_in, ops::reshape(f_p, {n, hw, c}));
  const Tensor lin = ops::linear(raw, prm.lin_w, prm.lin_b);
  return ops::matmul(prm.mix_w, ops::reshape(lin, {n * p, c}));
}

DpeOutput dpe_forward(const Tensor& f_p, const Tensor& f_b, const BevProjection& proj, std::size_t d,
                      std::size_t num_queries, const DpeParams& prm) {
  PERCMAP_REQUIRE(f_p.defined() && f_p.rank() == 4, "dpe_forward: F_P must be [N,H_p,W_p,C]");
  PERCMAP_REQUIRE(f_b.defined() && f_b.rank() == 3, "dpe_forward: F_B must be [H,W,C]");
  PERCMAP_REQUIRE(!prm.down_w.empty() && prm.down_w.size() == prm.down_b.size(), "dpe_forward: empty conv stack");
  const std::size_t h = f_b.dim(0), w = f_b.dim(1), c = f_b.dim(2);
  PERCMAP_REQUIRE(d >= 1 && h % d == 0 && w % d == 0 && h / d == proj.rows && w / d == proj.cols,
                  "dpe_forward: BEV grid, downsample factor and projection disagree");
  PERCMAP_REQUIRE(proj.canvas_shape.size() == 4 && proj.canvas_shape[0] == f_p.dim(0),
                  "dpe_forward: projection and F_P disagree on the number of views");
  const std::size_t hi = proj.canvas_shape[1], wi = proj.canvas_shape[2];
  PERCMAP_REQUIRE(hi % f_p.dim(1) == 0 && wi % f_p.dim(2) == 0 && hi / f_p.dim(1) == wi / f_p.dim(2),
                  "dpe_forward: image size must be one integer multiple of the PV feature size");

  DpeOutput out;
  const Tensor fb4 = ops::reshape(f_b, {1, h, w, c});
  Tensor x = fb4;
  for (std::size_t i = 0; i < prm.down_w.size(); ++i) {
    x = ops::conv2d(x, prm.down_w[i], prm.down_b[i], i == 0 ? d : 1, 1);
    if (i + 1 < prm.down_w.size()) x = ops::softplus(x);
  }
  out.f_b_m = x;

  const Tensor cat = ops::conv2d(out.f_b_m, prm.cat_w, prm.cat_b, 1, 1);
  const std::size_t nc = cat.dim(3);
  out.canvas = ops::scatter_max(ops::reshape(cat, {proj.rows * proj.cols, nc}), proj.canvas_shape, proj.entries);

  const Tensor pv = ops::upsample_nearest(ops::conv2d(f_p, prm.pv_w, prm.pv_b, 1, 1), hi / f_p.dim(1));
  out.heatmap = ops::add(pv, ops::conv2d(out.canvas, prm.canvas_w, prm.canvas_b, 1, 1));

  const Tensor emb = ops::conv2d(out.heatmap, prm.embed_w, prm.embed_b, 1, 0);
  out.e_i = ops::broadcast_rows(ops::mean_axis(ops::mean_pool_spatial(emb), 0), num_queries);

  const Tensor fused =
      ops::conv2d(ops::concat(fb4, ops::upsample_nearest(out.f_b_m, d), 3), prm.fuse_w, prm.fuse_b, 1, 0);
  out.f_b_prime = ops::reshape(fused, {h, w, fused.dim(3)});
  return out;
}

DecodeOutput decode_stub(const Tensor& q, const Tensor& e, const Tensor& f_b_prime, const Tensor& pos,
                         const BevGrid& grid, std::size_t num_points, const DecoderParams& prm, double ref_gain) {
  PERCMAP_REQUIRE(q.defined() && e.defined() && q.shape() == e.shape() && q.rank() == 2,
                  "decode_stub: Q and E must both be [N_m*N_p, C]");
  PERCMAP_REQUIRE(num_points > 0 && q.dim(0) % num_points == 0, "decode_stub: query count not a multiple of N_p");
  PERCMAP_REQUIRE(f_b_prime.defined() && f_b_prime.rank() == 3 && f_b_prime.dim(2) == q.dim(1),
                  "decode_stub: F_B' must be [H,W,C]");
  const std::size_t c = q.dim(1), cells = f_b_prime.dim(0) * f_b_prime.dim(1);
  PERCMAP_REQUIRE(pos.defined() && pos.shape() == Shape({cells, c}), "decode_stub: positional table shape mismatch");
  const std::size_t nm = q.dim(0) / num_points;

  const Tensor h0 = ops::add(q, e);
  const Tensor f = ops::reshape(f_b_prime, {cells, c});
  const Tensor k = ops::add(ops::linear(f, prm.wk, Tensor{}), pos);
  const Tensor v = ops::add(ops::linear(f, prm.wv, Tensor{}), ops::linear(pos, prm.wvp, Tensor{}));
  const Tensor logits = ops::scale(ops::matmul(h0, ops::transpose_last2(k)), 1.0 / std::sqrt(static_cast<double>(c)));
  const Tensor h = ops::add(ops::matmul(ops::softmax_rows(logits), v), h0);

  const double scale[2] = {grid.x_max - grid.x_min, grid.y_max - grid.y_min};
  const double offset[2] = {grid.x_min, grid.y_min};
  const Tensor unit = ops::sigmoid(ops::add(ops::linear(h, prm.w_pts, prm.b_pts), ops::scale(prm.ref, ref_gain)));
  DecodeOutput out;
  out.v_hat = ops::reshape(ops::column_affine(unit, scale, offset), {nm, num_points, 2});
  out.c_hat = ops::linear(ops::mean_axis(ops::reshape(h, {nm, num_points, c}), 1), prm.w_cls, prm.b_cls);
  return out;
}

Tensor effective_q0(const Model& m) { return ops::scale(m.queries.q0, m.config.query_gain); }
Tensor effective_e0(const Model& m) { return ops::scale(m.queries.e0, m.config.query_gain); }

ForwardResult forward(const Model& m, const Tensor& f_p, const Tensor& f_b) {
  const auto& cfg = m.config;
  PERCMAP_REQUIRE(f_p.defined() && f_p.rank() == 4 && f_p.dim(0) == m.rig.size() && f_p.dim(1) == cfg.pv_height &&
                      f_p.dim(2) == cfg.pv_width && f_p.dim(3) == cfg.channels,
                  "forward: F_P shape " + (f_p.defined() ? shape_str(f_p.shape()) : std::string("<none>")) +
                      " does not match the model config");
  PERCMAP_REQUIRE(f_b.defined() && f_b.shape() == Shape({static_cast<std::size_t>(cfg.grid.height),
                                                        static_cast<std::size_t>(cfg.grid.width), cfg.channels}),
                  "forward: F_B shape " + (f_b.defined() ? shape_str(f_b.shape()) : std::string("<none>")) +
                      " does not match the model config");
  ForwardResult r;
  const Tensor q0 = effective_q0(m), e0 = effective_e0(m);
  r.q = q0;
  if (cfg.use_cia) {
    r.q_in = cia_forward(f_p, m.cia);
    r.q = ops::add(q0, ops::repeat_rows(r.q_in, cfg.num_points));
  }
  r.e = e0;
  r.f_b_prime = f_b;
  if (cfg.use_dpe) {
    const auto dpe = dpe_forward(f_p, f_b, m.projection, static_cast<std::size_t>(cfg.grid.downsample),
                                 cfg.num_instances * cfg.num_points, m.dpe);
    r.e = ops::add(e0, dpe.e_i);
    r.f_b_prime = dpe.f_b_prime;
    r.heatmap = dpe.heatmap;
  }
  const auto dec = decode_stub(r.q, r.e, r.f_b_prime, m.pos_table, cfg.grid, cfg.num_points, m.decoder, cfg.ref_gain);
  r.v_hat = dec.v_hat;
  r.c_hat = dec.c_hat;
  return r;
}

}  // namespace percmap
