#include "percmap/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "percmap/errors.hpp"
#include "percmap/hungarian.hpp"

namespace percmap {

void validate_eval_config(const EvalConfig& cfg) {
  for (const auto* set : {&cfg.thresholds_coarse, &cfg.thresholds_tight}) {
    PERCMAP_REQUIRE(!set->empty(), "threshold set must be non-empty");
    for (std::size_t i = 0; i < set->size(); ++i) {
      PERCMAP_REQUIRE((*set)[i] > 0.0, "thresholds must be positive");
      PERCMAP_REQUIRE(i == 0 || (*set)[i] > (*set)[i - 1], "thresholds must be strictly increasing");
    }
  }
  PERCMAP_REQUIRE(cfg.n_eval_points >= 2, "n_eval_points must be >= 2");
  PERCMAP_REQUIRE(!cfg.categories.empty(), "at least one category is required");
}

nlohmann::json to_json(const EvalConfig& cfg) {
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : cfg.categories) cats.push_back(c.name());
  return {{"thresholds_coarse", cfg.thresholds_coarse},
          {"thresholds_tight", cfg.thresholds_tight},
          {"n_eval_points", cfg.n_eval_points},
          {"categories", cats},
          {"matching", cfg.mode == MatchMode::kGreedy ? "greedy" : "hungarian"},
          {"interpolation", "all-point"}};
}

EvalConfig eval_config_from_json(const nlohmann::json& j) {
  EvalConfig cfg;
  if (j.contains("thresholds_coarse")) cfg.thresholds_coarse = j["thresholds_coarse"].get<std::vector<double>>();
  if (j.contains("thresholds_tight")) cfg.thresholds_tight = j["thresholds_tight"].get<std::vector<double>>();
  cfg.n_eval_points = j.value("n_eval_points", cfg.n_eval_points);
  if (j.contains("categories")) {
    cfg.categories.clear();
    for (const auto& c : j["categories"]) {
      cfg.categories.push_back(c.is_string() ? Category::from_name(c.get<std::string>())
                                             : Category::from_id(c.get<int>()));
    }
  }
  const std::string mode = j.value("matching", std::string("greedy"));
  if (mode == "greedy") {
    cfg.mode = MatchMode::kGreedy;
  } else if (mode == "hungarian") {
    cfg.mode = MatchMode::kHungarian;
  } else {
    throw ContractError("unknown matching mode '" + mode + "'");
  }
  validate_eval_config(cfg);
  return cfg;
}

double chamfer_distance_points(const std::vector<Point2>& a, const std::vector<Point2>& b) {
  PERCMAP_REQUIRE(!a.empty() && !b.empty(), "chamfer distance of empty point set");
  auto directed = [](const std::vector<Point2>& from, const std::vector<Point2>& to) {
    double acc = 0.0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) best = std::min(best, std::hypot(p.x - q.x, p.y - q.y));
      acc += best;
    }
    return acc / static_cast<double>(from.size());
  };
  return 0.5 * (directed(a, b) + directed(b, a));
}

double chamfer_distance(const MapInstance& a, const MapInstance& b, std::size_t n) {
  return chamfer_distance_points(resample_polyline(a, n).points, resample_polyline(b, n).points);
}

double average_precision(std::span<const char> tp, std::size_t num_gt) {
  if (num_gt == 0) return 0.0;
  const std::size_t n = tp.size();
  std::vector<double> precision(n);
  std::size_t hits = 0;
  for (std::size_t k = 0; k < n; ++k) {
    hits += tp[k] ? 1 : 0;
    precision[k] = static_cast<double>(hits) / static_cast<double>(k + 1);
  }
  // Running max from the tail gives the interpolated precision; the sum then
  // runs in rank order.
  for (std::size_t k = n; k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k)
    if (tp[k]) acc += precision[k];
  return acc / static_cast<double>(num_gt);
}

namespace {

struct RankedPred {
  double confidence;
  std::size_t frame;
  std::size_t index;  // position in the frame's VectorMap
  std::size_t local;  // position among the frame's predictions of this category
};

struct FrameCategory {
  std::vector<std::vector<Point2>> preds;
  std::vector<std::size_t> pred_index;
  std::vector<double> pred_conf;
  std::vector<std::vector<Point2>> gts;
  std::vector<double> cd;  // preds x gts
};

// TP flags for one frame's predictions (local order), given the order in
// which they are visited.
std::vector<char> match_frame(const FrameCategory& fc, std::span<const std::size_t> visit, double thr,
                              MatchMode mode) {
  const std::size_t np = fc.preds.size(), ng = fc.gts.size();
  std::vector<char> tp(np, 0);
  if (np == 0 || ng == 0) return tp;
  if (mode == MatchMode::kGreedy) {
    std::vector<char> used(ng, 0);
    for (std::size_t i : visit) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_j = ng;
      for (std::size_t j = 0; j < ng; ++j) {
        if (!used[j] && fc.cd[i * ng + j] < best) {
          best = fc.cd[i * ng + j];
          best_j = j;
        }
      }
      if (best_j < ng && best < thr) {
        tp[i] = 1;
        used[best_j] = 1;
      }
    }
    return tp;
  }
  // Hungarian: valid pairs cost cd - big, invalid pairs 0, so the optimum
  // maximizes the number of valid pairs and then minimizes their distance.
  const double big = 1e6;
  std::vector<double> cost(np * ng, 0.0);
  for (std::size_t i = 0; i < np; ++i)
    for (std::size_t j = 0; j < ng; ++j)
      if (fc.cd[i * ng + j] < thr) cost[i * ng + j] = fc.cd[i * ng + j] - big;
  const auto assign = solve_assignment(cost, np, ng);
  for (std::size_t i = 0; i < np; ++i) {
    const int j = assign[i];
    if (j >= 0 && fc.cd[i * ng + static_cast<std::size_t>(j)] < thr) tp[i] = 1;
  }
  return tp;
}

ThresholdResult evaluate_threshold(const std::vector<FrameCategory>& frames, const std::vector<RankedPred>& ranked,
                                   std::size_t num_gt, double thr, MatchMode mode) {
  // Per-frame visit order follows the global ranking.
  std::vector<std::vector<std::size_t>> visit(frames.size());
  for (const auto& r : ranked) visit[r.frame].push_back(r.local);
  std::vector<std::vector<char>> tp_frame(frames.size());
  for (std::size_t f = 0; f < frames.size(); ++f) tp_frame[f] = match_frame(frames[f], visit[f], thr, mode);

  std::vector<char> tp(ranked.size());
  ThresholdResult res;
  res.threshold = thr;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    tp[k] = tp_frame[ranked[k].frame][ranked[k].local];
    (tp[k] ? res.tp : res.fp) += 1;
  }
  res.ap = average_precision(tp, num_gt);
  return res;
}

double mean_ap(const std::vector<ThresholdResult>& rs) {
  double acc = 0.0;
  for (const auto& r : rs) acc += r.ap;
  return acc / static_cast<double>(rs.size());
}

}  // namespace

EvalReport evaluate(std::span<const FramePair> frames, const EvalConfig& cfg) {
  validate_eval_config(cfg);
  EvalReport report;
  report.config = cfg;
  report.num_frames = frames.size();

  double sum_coarse = 0.0, sum_tight = 0.0;
  std::size_t counted = 0;
  for (const Category& cat : cfg.categories) {
    CategoryResult cr;
    cr.category = cat;
    std::vector<FrameCategory> fcs(frames.size());
    std::vector<RankedPred> ranked;
    for (std::size_t f = 0; f < frames.size(); ++f) {
      FrameCategory& fc = fcs[f];
      const auto& preds = frames[f].pred.instances;
      for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i].category.id != cat.id) continue;
        validate_instance(preds[i]);
        ranked.push_back({preds[i].confidence, f, i, fc.preds.size()});
        fc.preds.push_back(resample_polyline(preds[i], cfg.n_eval_points).points);
        fc.pred_index.push_back(i);
        fc.pred_conf.push_back(preds[i].confidence);
      }
      for (const auto& g : frames[f].gt.instances) {
        if (g.category.id != cat.id) continue;
        validate_instance(g);
        fc.gts.push_back(resample_polyline(g, cfg.n_eval_points).points);
      }
      fc.cd.resize(fc.preds.size() * fc.gts.size());
      for (std::size_t i = 0; i < fc.preds.size(); ++i)
        for (std::size_t j = 0; j < fc.gts.size(); ++j)
          fc.cd[i * fc.gts.size() + j] = chamfer_distance_points(fc.preds[i], fc.gts[j]);
      cr.num_gt += fc.gts.size();
      cr.num_pred += fc.preds.size();
    }
    std::sort(ranked.begin(), ranked.end(), [](const RankedPred& a, const RankedPred& b) {
      if (a.confidence != b.confidence) return a.confidence > b.confidence;
      if (a.frame != b.frame) return a.frame < b.frame;
      return a.index < b.index;
    });

    if (cr.num_gt == 0 && cr.num_pred == 0) {
      cr.excluded = true;
      report.diagnostics.push_back("category " + cat.name() + " excluded: no ground truth and no predictions");
    }
    for (double thr : cfg.thresholds_coarse)
      cr.coarse.push_back(evaluate_threshold(fcs, ranked, cr.num_gt, thr, cfg.mode));
    for (double thr : cfg.thresholds_tight)
      cr.tight.push_back(evaluate_threshold(fcs, ranked, cr.num_gt, thr, cfg.mode));
    cr.ap_coarse = mean_ap(cr.coarse);
    cr.ap_tight = mean_ap(cr.tight);
    if (!cr.excluded) {
      sum_coarse += cr.ap_coarse;
      sum_tight += cr.ap_tight;
      ++counted;
    }
    report.categories.push_back(std::move(cr));
  }
  if (counted > 0) {
    report.map = sum_coarse / static_cast<double>(counted);
    report.map_tight = sum_tight / static_cast<double>(counted);
  } else {
    report.diagnostics.push_back("all categories excluded; mAP reported as 0");
  }
  return report;
}

EvalReport evaluate(const VectorMap& preds, const VectorMap& gts, const EvalConfig& cfg) {
  const FramePair pair{preds, gts};
  return evaluate(std::span<const FramePair>(&pair, 1), cfg);
}

nlohmann::json to_json(const EvalReport& r) {
  auto rows = [](const std::vector<ThresholdResult>& rs) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& t : rs) out.push_back({{"threshold", t.threshold}, {"ap", t.ap}, {"tp", t.tp}, {"fp", t.fp}});
    return out;
  };
  nlohmann::json cats = nlohmann::json::array();
  for (const auto& c : r.categories) {
    cats.push_back({{"category", c.category.name()},
                    {"num_gt", c.num_gt},
                    {"num_pred", c.num_pred},
                    {"excluded", c.excluded},
                    {"coarse", rows(c.coarse)},
                    {"tight", rows(c.tight)},
                    {"ap_coarse", c.ap_coarse},
                    {"ap_tight", c.ap_tight}});
  }
  return {{"config", to_json(r.config)}, {"num_frames", r.num_frames}, {"categories", cats},
          {"mAP", r.map},                {"mAP_T", r.map_tight},       {"diagnostics", r.diagnostics}};
}

std::string to_csv(const EvalReport& r) {
  std::ostringstream ss;
  ss.precision(17);
  ss << "category,threshold_set,threshold,ap,tp,fp\n";
  for (const auto& c : r.categories) {
    for (const auto& t : c.coarse)
      ss << c.category.name() << ",coarse," << t.threshold << ',' << t.ap << ',' << t.tp << ',' << t.fp << '\n';
    for (const auto& t : c.tight)
      ss << c.category.name() << ",tight," << t.threshold << ',' << t.ap << ',' << t.tp << ',' << t.fp << '\n';
    ss << c.category.name() << ",coarse,mean," << c.ap_coarse << ",,\n";
    ss << c.category.name() << ",tight,mean," << c.ap_tight << ",,\n";
  }
  ss << "all,coarse,mAP," << r.map << ",,\n";
  ss << "all,tight,mAP_T," << r.map_tight << ",,\n";
  return ss.str();
}

}  // namespace percmap
