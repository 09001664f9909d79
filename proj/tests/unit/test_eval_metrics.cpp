#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "oracles.hpp"
#include "percmap/errors.hpp"
#include "percmap/eval.hpp"
#include "suites.hpp"

using namespace percmap;

namespace {

const CategoryResult& cat_of(const EvalReport& r, const Category& c) {
  for (const auto& x : r.categories)
    if (x.category == c) return x;
  throw std::runtime_error("category missing");
}

VectorMap shifted(VectorMap m, double dx, double dy) {
  for (auto& inst : m.instances)
    for (auto& p : inst.points) {
      p.x += dx;
      p.y += dy;
    }
  return m;
}

}  // namespace

TEST_CASE("chamfer distance closed forms") {
  const MapInstance a{{{0, 0}, {0, 10}}, Category::div(), 1.0};
  const MapInstance b{{{0.3, 0}, {0.3, 10}}, Category::div(), 1.0};
  CHECK(chamfer_distance(a, a, 100) == 0.0);
  CHECK(chamfer_distance(a, b, 100) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(chamfer_distance(a, b, 100) == chamfer_distance(b, a, 100));
}

TEST_CASE("chamfer distance matches the double loop on random chains") {
  Xoshiro256 rng(13);
  for (int i = 0; i < 100; ++i) {
    MapInstance a{{}, Category::div(), 1.0}, b{{}, Category::ped(), 1.0};
    for (int k = 0; k < 5; ++k) {
      a.points.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10)});
      b.points.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10)});
    }
    const std::size_t n = 10 + rng.below(90);
    const double want = oracle::chamfer_loop(resample_polyline(a, n).points, resample_polyline(b, n).points);
    CHECK(std::fabs(chamfer_distance(a, b, n) - want) < 1e-12);
  }
}

TEST_CASE("average precision on a hand-ranked list") {
  const std::vector<char> tp{1, 0, 1, 1, 0};
  // precisions at TP ranks: 1, 2/3, 3/4 -> envelope 1, 3/4, 3/4
  CHECK(average_precision(tp, 4) == doctest::Approx((1.0 + 0.75 + 0.75) / 4.0).epsilon(1e-15));
  CHECK(average_precision(std::vector<char>{}, 3) == 0.0);
  CHECK(average_precision(std::vector<char>{0, 0}, 2) == 0.0);
}

TEST_CASE("identical predictions score one at every threshold") {
  const auto r = suites::identical_fixture_map();
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("missing predictions give zero AP; absent categories are excluded") {
  VectorMap gt;
  gt.instances.push_back({{{0, 0}, {0, 5}}, Category::div(), 1.0});
  gt.instances.push_back({{{3, 0}, {3, 5}}, Category::div(), 1.0});
  const auto r = evaluate(VectorMap{}, gt, EvalConfig{});
  const auto& div = cat_of(r, Category::div());
  CHECK_FALSE(div.excluded);
  for (const auto& t : div.coarse) CHECK(t.ap == 0.0);
  CHECK(cat_of(r, Category::ped()).excluded);
  CHECK(cat_of(r, Category::bdr()).excluded);
  CHECK(r.map == 0.0);
  CHECK_FALSE(r.diagnostics.empty());
}

TEST_CASE("greedy evaluator equals the exhaustive oracle") {
  const auto r = suites::evaluator_oracle(40, 23);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("three GT and four predictions against the oracle in both modes") {
  VectorMap gt, pred;
  gt.instances.push_back({{{0, 0}, {0, 10}}, Category::div(), 1.0});
  gt.instances.push_back({{{1, 0}, {1, 10}}, Category::div(), 1.0});
  gt.instances.push_back({{{5, 0}, {5, 10}}, Category::div(), 1.0});
  pred.instances.push_back({{{0.4, 0}, {0.4, 10}}, Category::div(), 0.9});
  pred.instances.push_back({{{0.6, 0}, {0.6, 10}}, Category::div(), 0.8});
  pred.instances.push_back({{{5.2, 0}, {5.2, 10}}, Category::div(), 0.7});
  pred.instances.push_back({{{9, 0}, {9, 10}}, Category::div(), 0.95});
  const std::vector<FramePair> frames{{pred, gt}};
  for (const MatchMode mode : {MatchMode::kGreedy, MatchMode::kHungarian}) {
    EvalConfig cfg;
    cfg.mode = mode;
    const auto r = evaluate(frames, cfg);
    const auto& div = cat_of(r, Category::div());
    const auto want = oracle::brute_ap(frames, Category::div(), cfg.thresholds_coarse, cfg.n_eval_points, mode);
    for (std::size_t k = 0; k < want.size(); ++k) CHECK(div.coarse[k].ap == want[k]);
  }
}

TEST_CASE("evaluation invariants: order, translation, threshold monotonicity") {
  Xoshiro256 rng(19);
  for (int trial = 0; trial < 30; ++trial) {
    const VectorMap gt = oracle::random_map(rng, 3, false);
    VectorMap pred = oracle::random_map(rng, 4, true);
    // Distinct confidences so ordering is fully determined by rank.
    for (std::size_t i = 0; i < pred.instances.size(); ++i) pred.instances[i].confidence = 0.05 + 0.9 * rng.uniform();
    EvalConfig cfg;
    cfg.thresholds_coarse = {0.5, 1.0, 1.5, 3.0, 6.0};
    const auto base = evaluate(pred, gt, cfg);

    VectorMap rev = pred;
    std::reverse(rev.instances.begin(), rev.instances.end());
    const auto r_rev = evaluate(rev, gt, cfg);
    const double dx = rng.uniform(-50, 50), dy = rng.uniform(-50, 50);
    const auto r_tr = evaluate(shifted(pred, dx, dy), shifted(gt, dx, dy), cfg);
    for (std::size_t c = 0; c < base.categories.size(); ++c) {
      const auto& a = base.categories[c];
      for (std::size_t k = 0; k < a.coarse.size(); ++k) {
        CHECK(r_rev.categories[c].coarse[k].ap == a.coarse[k].ap);
        CHECK(std::fabs(r_tr.categories[c].coarse[k].ap - a.coarse[k].ap) < 1e-12);
        if (k > 0) CHECK(a.coarse[k].ap >= a.coarse[k - 1].ap);
        CHECK(a.coarse[k].ap >= 0.0);
        CHECK(a.coarse[k].ap <= 1.0);
      }
    }
  }
}

TEST_CASE("eval config validation and report serialization") {
  EvalConfig bad;
  bad.thresholds_coarse = {1.0, 0.5};
  CHECK_THROWS_AS(validate_eval_config(bad), ContractError);
  bad = EvalConfig{};
  bad.thresholds_tight = {0.0, 0.5};
  CHECK_THROWS_AS(validate_eval_config(bad), ContractError);
  const EvalConfig cfg;
  CHECK(to_json(eval_config_from_json(to_json(cfg))) == to_json(cfg));

  VectorMap gt;
  gt.instances.push_back({{{0, 0}, {0, 5}}, Category::bdr(), 1.0});
  const auto r = evaluate(gt, gt, cfg);
  const auto j = to_json(r);
  CHECK(j["mAP"] == 1.0);
  CHECK(j["mAP_T"] == 1.0);
  const std::string csv = to_csv(r);
  CHECK(csv.find("bdr") != std::string::npos);
  CHECK(std::count(csv.begin(), csv.end(), '\n') >= 7);
}
