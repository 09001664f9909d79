#include "percmap/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

#include "percmap/checkpoint.hpp"
#include "percmap/errors.hpp"
#include "percmap/eval.hpp"
#include "percmap/json_io.hpp"
#include "percmap/model.hpp"
#include "percmap/rng.hpp"
#include "percmap/synth.hpp"
#include "percmap/targets.hpp"
#include "percmap/train.hpp"
#include "percmap/version.hpp"

namespace percmap {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Globals {
  std::uint64_t seed = 0;
  std::string config_path;
  std::size_t jobs = 1;
  bool force = false;
};

struct Settings {
  SceneSpec scene;
  ModelConfig model = ModelConfig::toy();
  TrainConfig train;
  EvalConfig eval;
};

Settings load_settings(const Globals& g) {
  Settings s;
  if (g.config_path.empty()) return s;
  const json j = read_json_file(g.config_path);
  PERCMAP_REQUIRE(j.is_object(), g.config_path + ": config must be a JSON object");
  try {
    if (j.contains("scene")) s.scene = scene_spec_from_json(j.at("scene"));
    if (j.contains("model")) s.model = model_config_from_json(j.at("model"));
    if (j.contains("train")) s.train = train_config_from_json(j.at("train"));
    if (j.contains("eval")) s.eval = eval_config_from_json(j.at("eval"));
  } catch (const ContractError& e) {
    throw ContractError(g.config_path + ": " + e.what());
  }
  return s;
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%04zu", i);
  return buf;
}

// Creates `dir`, refusing to reuse a non-empty directory unless forced.
void prepare_output(const std::string& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir, ec) && !fs::is_empty(dir, ec) && !force)
    throw IoError("output directory " + dir + " is not empty (use --force to overwrite)");
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

void make_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError("cannot create directory " + p.string() + ": " + ec.message());
}

void write_run_config(const std::string& dir, const std::string& command, const Globals& g, const Settings& s,
                      const json& args) {
  json rc = {{"version", kVersion},
             {"command", command},
             {"seed", g.seed},
             {"args", args},
             {"scene", to_json(s.scene)},
             {"model", to_json(s.model)},
             {"train", to_json(s.train)},
             {"eval", to_json(s.eval)}};
  write_json_file((fs::path(dir) / "run_config.json").string(), rc);
  write_text_file((fs::path(dir) / "VERSION").string(), std::string("percmap ") + kVersion + "\n");
}

// Frame directory names of a scene set: manifest order if present, otherwise
// every frame_* subdirectory in lexicographic order.
std::vector<std::string> list_frames(const std::string& dir) {
  const fs::path manifest = fs::path(dir) / "manifest.json";
  if (fs::exists(manifest)) {
    const json m = read_json_file(manifest.string());
    try {
      return m.at("frames").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
      throw IoError(manifest.string() + ": " + e.what());
    }
  }
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("not a directory: " + dir);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string n = e.path().filename().string();
    if (e.is_directory() && n.rfind("frame_", 0) == 0) names.push_back(n);
  }
  std::sort(names.begin(), names.end());
  return names;
}

std::string csv_double(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

std::vector<FrameData> load_frames(const std::string& in, std::size_t limit, const ModelConfig& mc,
                                   const TrainConfig& tc) {
  const auto names = list_frames(in);
  PERCMAP_REQUIRE(!names.empty(), "no frames found in " + in);
  const std::size_t n = limit == 0 ? names.size() : std::min(limit, names.size());
  std::vector<FrameData> frames;
  for (std::size_t i = 0; i < n; ++i) {
    SceneBundle scene = load_scene((fs::path(in) / names[i]).string());
    if (scene.gt.frame_id.empty()) scene.gt.frame_id = names[i];
    PERCMAP_REQUIRE(scene.spec.grid == mc.grid, names[i] + ": scene grid differs from the model grid");
    frames.push_back(prepare_frame(scene, mc, tc));
    frames.back().frame_id = names[i];
  }
  return frames;
}

Model build_model(const ModelConfig& mc, const std::string& rig_dir_hint) {
  // Scenes carry their own rig; prefer it so model and data agree.
  const fs::path rig_file = fs::path(rig_dir_hint) / "rig.json";
  if (!rig_dir_hint.empty() && fs::exists(rig_file)) return make_model(mc, load_rig(rig_file.string()));
  return make_model(mc);
}

// --- gen ---------------------------------------------------------------------

int cmd_gen(const Globals& g, const std::string& out, std::size_t frames, std::ostream& os) {
  Settings s = load_settings(g);
  validate_scene_spec(s.scene);
  resolve_rig(s.scene.rig);
  prepare_output(out, g.force);
  std::vector<std::string> names(frames);
  for (std::size_t i = 0; i < frames; ++i) names[i] = frame_name(i);

  auto work = [&](std::size_t i) {
    SceneSpec spec = s.scene;
    spec.seed = derive_seed(g.seed, i);
    save_scene(make_scene(spec, names[i]), (fs::path(out) / names[i]).string());
  };
  const std::size_t jobs = std::clamp<std::size_t>(g.jobs, 1, std::max<std::size_t>(frames, 1));
  if (jobs == 1) {
    for (std::size_t i = 0; i < frames; ++i) work(i);
  } else {
    std::vector<std::exception_ptr> errors(jobs);
    std::vector<std::thread> pool;
    for (std::size_t j = 0; j < jobs; ++j)
      pool.emplace_back([&, j] {
        try {
          for (std::size_t i = j; i < frames; i += jobs) work(i);
        } catch (...) {
          errors[j] = std::current_exception();
        }
      });
    for (auto& t : pool) t.join();
    for (const auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  write_json_file((fs::path(out) / "manifest.json").string(),
                  {{"version", kVersion}, {"num_frames", frames}, {"frames", names}});
  write_run_config(out, "gen", g, s, {{"frames", frames}});
  os << "wrote " << frames << " frame(s) to " << out << "\n";
  return 0;
}

// --- targets -----------------------------------------------------------------

int cmd_targets(const Globals& g, const std::string& in, const std::string& out, double sigma, double line_width,
                std::ostream& os) {
  Settings s = load_settings(g);
  PERCMAP_REQUIRE(sigma > 0.0, "sigma must be positive");
  PERCMAP_REQUIRE(line_width >= 1.0, "line width must be >= 1");
  s.train.sigma = sigma;
  s.train.line_width = line_width;
  const auto names = list_frames(in);
  prepare_output(out, g.force);
  for (const auto& name : names) {
    const fs::path src = fs::path(in) / name;
    const VectorMap gt = load_map((src / "gt.json").string());
    const CameraRig rig = load_rig((src / "rig.json").string());
    SceneSpec spec;
    const std::string spec_path = (src / "spec.json").string();
    try {
      spec = scene_spec_from_json(read_json_file(spec_path));
    } catch (const ContractError& e) {
      throw IoError(spec_path + ": " + e.what());
    }
    const HeatmapTarget heat = make_heatmap_target(gt, rig, sigma, s.model.z_ground);
    const RasterMask raster = rasterize_instances(gt, spec.grid, RasterOptions{line_width, true});
    const json meta = {{"frame_id", name},
                       {"sigma", sigma},
                       {"line_width", line_width},
                       {"z_ground", s.model.z_ground},
                       {"grid", to_json(spec.grid)},
                       {"rig_hash", rig_hash(rig)}};
    const fs::path dst = fs::path(out) / name;
    make_dir(dst);
    save_checkpoint((dst / "targets.bin").string(), {{"heatmap", heat.heatmap}, {"raster", raster.mask}}, meta);
    write_json_file((dst / "targets.json").string(), meta);
  }
  write_json_file((fs::path(out) / "manifest.json").string(),
                  {{"version", kVersion}, {"num_frames", names.size()}, {"frames", names}});
  write_run_config(out, "targets", g, s, {{"in", in}, {"sigma", sigma}, {"line_width", line_width}});
  os << "wrote targets for " << names.size() << " frame(s) to " << out << "\n";
  return 0;
}

// --- forward -----------------------------------------------------------------

int cmd_forward(const Globals& g, const std::string& in, const std::string& out, const std::string& checkpoint,
                std::ostream& os) {
  Settings s = load_settings(g);
  s.model.seed = g.seed;
  if (!checkpoint.empty()) {
    json meta;
    load_checkpoint(checkpoint, &meta);
    if (meta.contains("model_config")) s.model = model_config_from_json(meta["model_config"]);
  }
  const auto names = list_frames(in);
  PERCMAP_REQUIRE(!names.empty(), "no frames found in " + in);
  prepare_output(out, g.force);
  Model model = build_model(s.model, (fs::path(in) / names.front()).string());
  if (!checkpoint.empty()) load_model_params(model, checkpoint);
  const auto frames = load_frames(in, 0, s.model, TrainConfig{});
  for (const auto& f : frames) {
    const fs::path dst = fs::path(out) / f.frame_id;
    make_dir(dst);
    save_map(predict(model, f), (dst / "pred.json").string());
  }
  write_json_file((fs::path(out) / "manifest.json").string(),
                  {{"version", kVersion}, {"num_frames", names.size()}, {"frames", names}});
  write_run_config(out, "forward", g, s, {{"in", in}, {"checkpoint", checkpoint}});
  os << "wrote predictions for " << frames.size() << " frame(s) to " << out << "\n";
  return 0;
}

// --- train-toy ---------------------------------------------------------------

EvalReport evaluate_frames(const Model& model, const std::vector<FrameData>& frames, const EvalConfig& cfg) {
  std::vector<FramePair> pairs;
  for (const auto& f : frames) pairs.push_back({predict(model, f), f.gt});
  return evaluate(pairs, cfg);
}

void write_curve(const std::string& path, const std::vector<LossBreakdown>& curve) {
  std::ostringstream ss;
  ss << "step,total,heatmap,ris,cls,pts\n";
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const auto& l = curve[i];
    ss << i << ',' << csv_double(l.total) << ',' << csv_double(l.heatmap) << ',' << csv_double(l.ris) << ','
       << csv_double(l.cls) << ',' << csv_double(l.pts) << '\n';
  }
  write_text_file(path, ss.str());
}

int cmd_train_toy(const Globals& g, const std::string& in, const std::string& out, std::size_t steps, double lr,
                  std::size_t num_frames, std::ostream& os, std::ostream& es) {
  Settings s = load_settings(g);
  s.model.seed = g.seed;
  s.train.steps = steps;
  s.train.lr = lr;
  s.train.jobs = g.jobs;
  PERCMAP_REQUIRE(lr > 0.0, "lr must be positive");
  PERCMAP_REQUIRE(num_frames >= 1, "train-toy needs at least one frame");
  const auto names = list_frames(in);
  PERCMAP_REQUIRE(!names.empty(), "no frames found in " + in);
  prepare_output(out, g.force);
  write_run_config(out, "train-toy", g, s, {{"in", in}, {"steps", steps}, {"lr", lr}, {"frames", num_frames}});

  Model model = build_model(s.model, (fs::path(in) / names.front()).string());
  const auto frames = load_frames(in, num_frames, s.model, s.train);
  save_model(model, (fs::path(out) / "checkpoint_init.bin").string(), {{"step", 0}});

  const TrainResult res = train(model, frames, s.train, [&](std::size_t step, const LossBreakdown& l) {
    if (step % 100 == 0 || step == steps)
      es << "step " << step << " loss " << csv_double(l.total) << "\n";
  });
  write_curve((fs::path(out) / "loss_curve.csv").string(), res.curve);
  save_model(model, (fs::path(out) / "checkpoint_final.bin").string(), {{"step", steps}});

  const EvalReport report = evaluate_frames(model, frames, s.eval);
  for (const auto& f : frames) {
    const fs::path dst = fs::path(out) / "pred" / f.frame_id;
    make_dir(dst);
    save_map(predict(model, f), (dst / "pred.json").string());
  }
  write_json_file((fs::path(out) / "report.json").string(), to_json(report));
  const double init = res.curve.front().total, fin = res.curve.back().total;
  const json summary = {{"steps", steps},
                        {"lr", lr},
                        {"frames", frames.size()},
                        {"num_parameters", num_parameters(model)},
                        {"initial_loss", to_json(res.curve.front())},
                        {"final_loss", to_json(res.curve.back())},
                        {"loss_ratio", init > 0.0 ? fin / init : 0.0},
                        {"mAP", report.map},
                        {"mAP_T", report.map_tight}};
  write_json_file((fs::path(out) / "summary.json").string(), summary);
  os << "initial loss " << csv_double(init) << ", final loss " << csv_double(fin) << ", mAP " << report.map
     << ", mAP_T " << report.map_tight << "\n";
  return 0;
}

// --- eval --------------------------------------------------------------------

int cmd_eval(const Globals& g, const std::string& pred_dir, const std::string& gt_dir, const std::string& out,
             std::ostream& os, std::ostream& es) {
  Settings s = load_settings(g);
  const auto names = list_frames(gt_dir);
  std::vector<FramePair> pairs;
  std::vector<std::string> warnings;
  for (const auto& name : names) {
    FramePair p;
    p.gt = load_map((fs::path(gt_dir) / name / "gt.json").string());
    const fs::path pred = fs::path(pred_dir) / name / "pred.json";
    const fs::path pred_gt = fs::path(pred_dir) / name / "gt.json";
    if (fs::exists(pred)) {
      p.pred = load_map(pred.string());
    } else if (fs::exists(pred_gt)) {
      p.pred = load_map(pred_gt.string());
    } else {
      warnings.push_back("missing predictions for " + name + "; counted as empty");
      p.pred.frame_id = name;
    }
    pairs.push_back(std::move(p));
  }
  EvalReport report = evaluate(pairs, s.eval);
  for (const auto& w : warnings) {
    es << "warning: " << w << "\n";
    report.diagnostics.push_back(w);
  }
  prepare_output(out, g.force);
  write_json_file((fs::path(out) / "report.json").string(), to_json(report));
  write_text_file((fs::path(out) / "report.csv").string(), to_csv(report));
  write_run_config(out, "eval", g, s, {{"pred", pred_dir}, {"gt", gt_dir}});
  os << "mAP " << report.map << " mAP_T " << report.map_tight << " over " << names.size() << " frame(s)\n";
  return 0;
}

// --- ablate ------------------------------------------------------------------

struct Cell {
  std::string name;
  bool cia = false;
  bool dpe = false;
  bool ris = false;
};

Cell parse_cell(const std::string& name) {
  Cell c{name};
  if (name == "stub") return c;
  std::stringstream ss(name);
  std::string tok;
  while (std::getline(ss, tok, '+')) {
    if (tok == "cia") {
      c.cia = true;
    } else if (tok == "dpe") {
      c.dpe = true;
    } else if (tok == "ris") {
      c.ris = true;
    } else {
      throw ContractError("unknown ablation cell '" + name + "' (use stub or a '+' list of cia, dpe, ris)");
    }
  }
  return c;
}

int cmd_ablate(const Globals& g, const std::string& in, const std::string& out, std::size_t steps, double lr,
               std::size_t num_frames, const std::string& matrix, std::ostream& os, std::ostream& es) {
  Settings s = load_settings(g);
  s.model.seed = g.seed;
  s.train.steps = steps;
  s.train.lr = lr;
  s.train.jobs = g.jobs;
  std::vector<Cell> cells;
  {
    std::stringstream ss(matrix);
    std::string tok;
    while (std::getline(ss, tok, ',')) cells.push_back(parse_cell(tok));
  }
  PERCMAP_REQUIRE(!cells.empty(), "ablation matrix is empty");
  const auto names = list_frames(in);
  PERCMAP_REQUIRE(!names.empty(), "no frames found in " + in);
  // Existing cell results are reused, so a non-empty directory is accepted.
  make_dir(fs::path(out) / "cells");
  write_run_config(out, "ablate", g, s,
                   {{"in", in}, {"steps", steps}, {"lr", lr}, {"frames", num_frames}, {"matrix", matrix}});

  json rows = json::array();
  for (const auto& cell : cells) {
    ModelConfig mc = s.model;
    mc.use_cia = cell.cia;
    mc.use_dpe = cell.dpe;
    TrainConfig tc = s.train;
    tc.use_ris = cell.ris;
    const json key = {{"model", to_json(mc)}, {"train", to_json(tc)}, {"in", in}, {"frames", num_frames}};
    const fs::path cell_path = fs::path(out) / "cells" / (cell.name + ".json");
    if (fs::exists(cell_path) && !g.force) {
      const json prev = read_json_file(cell_path.string());
      if (prev.value("key", json()) == key) {
        es << "cell " << cell.name << ": reusing " << cell_path.string() << "\n";
        rows.push_back(prev.at("row"));
        continue;
      }
    }
    es << "cell " << cell.name << ": training\n";
    Model model = build_model(mc, (fs::path(in) / names.front()).string());
    const auto frames = load_frames(in, num_frames, mc, tc);
    const TrainResult res = train(model, frames, tc);
    const EvalReport rep = evaluate_frames(model, frames, s.eval);
    const auto& first = res.curve.front();
    const auto& last = res.curve.back();
    const json row = {{"name", cell.name},
                      {"use_cia", cell.cia},
                      {"use_dpe", cell.dpe},
                      {"use_ris", cell.ris},
                      {"initial_total", first.total},
                      {"final_total", last.total},
                      {"initial_matching", first.cls + first.pts},
                      {"final_matching", last.cls + last.pts},
                      {"mAP", rep.map},
                      {"mAP_T", rep.map_tight}};
    // Write then rename so an interrupted run never leaves a partial cell.
    const fs::path tmp = cell_path.string() + ".tmp";
    write_json_file(tmp.string(), {{"key", key}, {"row", row}});
    std::error_code ec;
    fs::rename(tmp, cell_path, ec);
    if (ec) throw IoError("cannot write " + cell_path.string() + ": " + ec.message());
    rows.push_back(row);
  }

  std::ostringstream csv, md;
  csv << "name,use_cia,use_dpe,use_ris,initial_total,final_total,initial_matching,final_matching,mAP,mAP_T\n";
  md << "| config | CIA | DPE | RIS | final total | final L_cls+L_pts | mAP | mAP_T |\n";
  md << "|---|---|---|---|---|---|---|---|\n";
  for (const auto& r : rows) {
    csv << r["name"].get<std::string>() << ',' << r["use_cia"].get<bool>() << ',' << r["use_dpe"].get<bool>() << ','
        << r["use_ris"].get<bool>() << ',' << csv_double(r["initial_total"]) << ',' << csv_double(r["final_total"])
        << ',' << csv_double(r["initial_matching"]) << ',' << csv_double(r["final_matching"]) << ','
        << csv_double(r["mAP"]) << ',' << csv_double(r["mAP_T"]) << '\n';
    auto mark = [&](const char* k) { return r[k].get<bool>() ? "x" : ""; };
    md << "| " << r["name"].get<std::string>() << " | " << mark("use_cia") << " | " << mark("use_dpe") << " | "
       << mark("use_ris") << " | " << std::fixed << std::setprecision(4) << r["final_total"].get<double>() << " | "
       << r["final_matching"].get<double>() << " | " << std::setprecision(3) << r["mAP"].get<double>() << " | "
       << r["mAP_T"].get<double>() << " |\n";
    md.unsetf(std::ios::floatfield);
  }
  write_json_file((fs::path(out) / "ablation.json").string(), {{"rows", rows}});
  write_text_file((fs::path(out) / "ablation.csv").string(), csv.str());
  write_text_file((fs::path(out) / "ablation.md").string(), md.str());
  os << md.str();
  return 0;
}

// --- report ------------------------------------------------------------------

int cmd_report(const std::string& in, const std::string& out_file, std::ostream& os) {
  const fs::path dir(in);
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("not a directory: " + in);
  std::ostringstream md;
  md << "# percmap report: " << in << "\n\n";
  if (fs::exists(dir / "run_config.json")) {
    const json rc = read_json_file((dir / "run_config.json").string());
    md << "command `" << rc.value("command", std::string("?")) << "`, version " << rc.value("version", std::string("?"))
       << ", seed " << rc.value("seed", std::uint64_t{0}) << "\n\n";
  }
  if (fs::exists(dir / "summary.json")) {
    const json sm = read_json_file((dir / "summary.json").string());
    md << "## Training\n\n";
    md << "- steps: " << sm["steps"] << ", lr: " << sm["lr"] << ", frames: " << sm["frames"] << "\n";
    md << "- loss: " << sm["initial_loss"]["total"] << " -> " << sm["final_loss"]["total"] << " (ratio "
       << sm["loss_ratio"] << ")\n\n";
  }
  if (fs::exists(dir / "report.json")) {
    const json rep = read_json_file((dir / "report.json").string());
    md << "## Evaluation\n\n| category | #GT | #pred | AP (coarse) | AP (tight) |\n|---|---|---|---|---|\n";
    for (const auto& c : rep["categories"]) {
      md << "| " << c["category"].get<std::string>() << (c["excluded"].get<bool>() ? " (excluded)" : "") << " | "
         << c["num_gt"] << " | " << c["num_pred"] << " | " << std::fixed << std::setprecision(3)
         << c["ap_coarse"].get<double>() << " | " << c["ap_tight"].get<double>() << " |\n";
      md.unsetf(std::ios::floatfield);
    }
    md << "\nmAP " << std::fixed << std::setprecision(3) << rep["mAP"].get<double>() << ", mAP_T "
       << rep["mAP_T"].get<double>() << "\n\n";
    md.unsetf(std::ios::floatfield);
  }
  if (fs::exists(dir / "ablation.md")) md << "## Ablation\n\n" << read_text_file((dir / "ablation.md").string()) << "\n";
  if (!out_file.empty()) write_text_file(out_file, md.str());
  os << md.str();
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"percmap: vectorized HD-map toolkit on synthetic scenes", "percmap"};
  app.set_version_flag("--version", std::string("percmap ") + kVersion);
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Base seed")->capture_default_str();
  app.add_option("--config", g.config_path, "JSON config with scene/model/train/eval sections");
  app.add_option("--jobs", g.jobs, "Worker threads")->capture_default_str()->check(CLI::PositiveNumber);
  app.add_flag("--force", g.force, "Overwrite existing outputs");

  std::string in, out_dir, pred, gt, checkpoint, matrix = "stub,cia,dpe,ris", report_out;
  std::size_t frames = 1, steps = 2000, ablate_steps = 100, ablate_frames = 20;
  double lr = TrainConfig{}.lr, sigma = 3.0, line_width = 1.0;

  auto* gen = app.add_subcommand("gen", "Generate synthetic scene bundles");
  gen->add_option("--out", out_dir, "Output directory")->required();
  gen->add_option("--frames", frames, "Number of frames")->capture_default_str();

  auto* targets = app.add_subcommand("targets", "Materialize heatmap and raster targets");
  targets->add_option("--in", in, "Scene directory")->required();
  targets->add_option("--out", out_dir, "Output directory")->required();
  targets->add_option("--sigma", sigma, "Gaussian sigma in pixels")->capture_default_str();
  targets->add_option("--line-width", line_width, "Raster line width in cells")->capture_default_str();

  auto* fwd = app.add_subcommand("forward", "Run the model on every frame and write predictions");
  fwd->add_option("--in", in, "Scene directory")->required();
  fwd->add_option("--out", out_dir, "Output directory")->required();
  fwd->add_option("--checkpoint", checkpoint, "Parameter checkpoint (default: fresh init)");

  auto* tr = app.add_subcommand("train-toy", "Gradient-descent overfit on a few frames");
  tr->add_option("--in", in, "Scene directory")->required();
  tr->add_option("--out", out_dir, "Output directory")->required();
  tr->add_option("--steps", steps, "Gradient steps")->capture_default_str();
  tr->add_option("--lr", lr, "Learning rate")->capture_default_str();
  tr->add_option("--frames", frames, "Number of leading frames to train on")->capture_default_str();

  auto* ev = app.add_subcommand("eval", "Chamfer-distance AP evaluation");
  ev->add_option("--pred", pred, "Prediction directory (frame_*/pred.json, else frame_*/gt.json)")->required();
  ev->add_option("--gt", gt, "Ground-truth scene directory")->required();
  ev->add_option("--out", out_dir, "Output directory")->required();

  auto* ab = app.add_subcommand("ablate", "Train and evaluate a matrix of module configurations");
  ab->add_option("--in", in, "Scene directory")->required();
  ab->add_option("--out", out_dir, "Output directory (existing cells are resumed)")->required();
  ab->add_option("--steps", ablate_steps, "Gradient steps per cell")->capture_default_str();
  ab->add_option("--lr", lr, "Learning rate")->capture_default_str();
  ab->add_option("--frames", ablate_frames, "Number of leading frames")->capture_default_str();
  ab->add_option("--matrix", matrix, "Comma-separated cells: stub or '+' lists of cia, dpe, ris")
      ->capture_default_str();

  auto* rep = app.add_subcommand("report", "Summarize an output directory as Markdown");
  rep->add_option("--in", in, "Output directory of another command")->required();
  rep->add_option("--out", report_out, "Also write the Markdown to this file");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << "percmap " << kVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_gen(g, out_dir, frames, out);
    if (targets->parsed()) return cmd_targets(g, in, out_dir, sigma, line_width, out);
    if (fwd->parsed()) return cmd_forward(g, in, out_dir, checkpoint, out);
    if (tr->parsed()) return cmd_train_toy(g, in, out_dir, steps, lr, frames, out, err);
    if (ev->parsed()) return cmd_eval(g, pred, gt, out_dir, out, err);
    if (ab->parsed()) return cmd_ablate(g, in, out_dir, ablate_steps, lr, ablate_frames, matrix, out, err);
    if (rep->parsed()) return cmd_report(in, report_out, out);
  } catch (const ContractError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}

}  // namespace percmap
