#include <doctest.h>

#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "percmap/errors.hpp"
#include "percmap/map_core.hpp"
#include "suites.hpp"

using namespace percmap;

namespace {

MapInstance chain(std::vector<Point2> pts, Category cat = Category::div()) { return {std::move(pts), cat, 1.0}; }

}  // namespace

TEST_CASE("categories have stable ids and closure") {
  CHECK(Category::ped().id == 0);
  CHECK(Category::div().id == 1);
  CHECK(Category::bdr().id == 2);
  CHECK(Category::ped().is_closed);
  CHECK_FALSE(Category::div().is_closed);
  CHECK_FALSE(Category::bdr().is_closed);
  for (int id = 0; id < kNumCategories; ++id) CHECK(Category::from_name(Category::from_id(id).name()).id == id);
  CHECK(Category::from_id(7).id == 7);
  CHECK_THROWS_AS(Category::from_name("lane"), ContractError);
  CHECK_THROWS_AS(Category::from_id(-1), ContractError);
}

TEST_CASE("instance validation") {
  CHECK_NOTHROW(validate_instance(chain({{0, 0}, {1, 1}})));
  CHECK_THROWS_AS(validate_instance(chain({{0, 0}})), ContractError);
  CHECK_THROWS_AS(validate_instance(chain({{0, 0}, {std::nan(""), 1}})), ContractError);
  MapInstance m = chain({{0, 0}, {1, 1}});
  m.confidence = 1.5;
  CHECK_THROWS_AS(validate_instance(m), ContractError);
}

TEST_CASE("resample: straight segment subdivides uniformly") {
  const auto r = resample_polyline(chain({{0, 0}, {0, 3}}), 4);
  REQUIRE(r.points.size() == 4);
  for (int k = 0; k < 4; ++k) {
    CHECK(r.points[k].x == 0.0);
    CHECK(r.points[k].y == doctest::Approx(k).epsilon(1e-15));
  }
}

TEST_CASE("resample: equispaced input is a fixed point") {
  const MapInstance in = chain({{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}});
  const auto r = resample_polyline(in, 5);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(std::fabs(r.points[k].x - in.points[k].x) < 1e-12);
    CHECK(std::fabs(r.points[k].y - in.points[k].y) < 1e-12);
  }
}

TEST_CASE("resample: L-shaped chain matches the arclength walk") {
  const MapInstance in = chain({{0, 0}, {0, 2}, {2, 2}});
  const auto r = resample_polyline(in, 5);
  const auto walk = oracle::resample_walk(in.points, false, 5);
  const std::vector<Point2> exact{{0, 0}, {0, 1}, {0, 2}, {1, 2}, {2, 2}};
  REQUIRE(walk.size() == 5);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(std::hypot(r.points[k].x - walk[k].x, r.points[k].y - walk[k].y) < 1e-4);
    CHECK(std::hypot(r.points[k].x - exact[k].x, r.points[k].y - exact[k].y) < 1e-12);
  }
}

TEST_CASE("resample: random chains match the arclength walk") {
  Xoshiro256 rng(11);
  for (int i = 0; i < 50; ++i) {
    const bool closed = rng.below(2);
    MapInstance in = chain({}, closed ? Category::ped() : Category::bdr());
    for (std::size_t k = 0, n = 3 + rng.below(5); k < n; ++k)
      in.points.push_back({rng.uniform(-10, 10), rng.uniform(-10, 10)});
    const std::size_t n = 2 + rng.below(30);
    const auto r = resample_polyline(in, n);
    const auto walk = oracle::resample_walk(in.points, closed, n);
    REQUIRE(walk.size() == n);
    const double tol = 2.0 * chain_length(in.points, closed) / 100000.0;
    for (std::size_t k = 0; k < n; ++k)
      CHECK(std::hypot(r.points[k].x - walk[k].x, r.points[k].y - walk[k].y) <= tol);
  }
}

TEST_CASE("resample: closed chains traverse the closing edge") {
  const MapInstance sq = chain({{0, 0}, {2, 0}, {2, 2}, {0, 2}}, Category::ped());
  const auto r = resample_polyline(sq, 8);
  const std::vector<Point2> want{{0, 0}, {1, 0}, {2, 0}, {2, 1}, {2, 2}, {1, 2}, {0, 2}, {0, 1}};
  for (std::size_t k = 0; k < 8; ++k) {
    CHECK(r.points[k].x == doctest::Approx(want[k].x).epsilon(1e-15));
    CHECK(r.points[k].y == doctest::Approx(want[k].y).epsilon(1e-15));
  }
}

TEST_CASE("resample: open endpoints kept, zero length collapses, bad args rejected") {
  const MapInstance in = chain({{1, 2}, {4, 6}, {-3, 0.5}});
  const auto r = resample_polyline(in, 7);
  CHECK(r.points.front() == in.points.front());
  CHECK(r.points.back() == in.points.back());
  const auto z = resample_polyline(chain({{3, 3}, {3, 3}, {3, 3}}), 5);
  for (const auto& p : z.points) CHECK(p == Point2{3, 3});
  CHECK_THROWS_AS(resample_polyline(in, 1), ContractError);
  CHECK_THROWS_AS(resample_polyline(chain({{0, 0}}), 4), ContractError);
}

TEST_CASE("resample: idempotent and length preserving on lattice chains") {
  Xoshiro256 rng(3);
  for (int i = 0; i < 300; ++i) {
    const std::size_t n = 4 + rng.below(30);
    const bool closed = rng.below(2);
    const MapInstance in = suites::lattice_instance(rng, n, closed);
    const auto once = resample_polyline(in, n);
    const auto twice = resample_polyline(once, n);
    for (std::size_t k = 0; k < n; ++k)
      CHECK(std::hypot(once.points[k].x - twice.points[k].x, once.points[k].y - twice.points[k].y) < 1e-9);
    CHECK(std::fabs(chain_length(once.points, closed) - chain_length(in.points, closed)) < 1e-9);
  }
}

TEST_CASE("bev_to_cell conventions on the default grid") {
  const BevGrid g = BevGrid::standard();
  CHECK(g.height == 200);
  CHECK(g.width == 100);
  CHECK(bev_to_cell(g, {0, 0}) == Cell{100, 50});
  CHECK(bev_to_cell(g, {g.x_min, g.y_min}) == Cell{0, 0});
  CHECK(bev_to_cell(g, {g.x_max, g.y_max}) == Cell{199, 99});
  const double eps = 1e-9;
  CHECK_FALSE(bev_to_cell(g, {15.0 + eps, 0}).has_value());
  CHECK_FALSE(bev_to_cell(g, {0, 30.0 + eps}).has_value());
  CHECK_FALSE(bev_to_cell(g, {-15.0 - eps, 0}).has_value());
  CHECK(bev_to_cell(g, {0, 15.0 + eps}).has_value());  // y spans +-30 m
  CHECK_FALSE(bev_to_cell(g, {std::numeric_limits<double>::infinity(), 0}).has_value());
  CHECK(g.cell_width() == doctest::Approx(0.3));
  CHECK(g.cell_height() == doctest::Approx(0.3));
}

TEST_CASE("cell center back-map lies within half a cell") {
  Xoshiro256 rng(5);
  for (const BevGrid g : {BevGrid::standard(), BevGrid::toy()}) {
    for (int i = 0; i < 2000; ++i) {
      const Point2 p{rng.uniform(g.x_min, g.x_max), rng.uniform(g.y_min, g.y_max)};
      const auto c = bev_to_cell(g, p);
      REQUIRE(c.has_value());
      const Point2 q = cell_center(g, *c);
      CHECK(std::fabs(q.x - p.x) <= 0.5 * g.cell_width() + 1e-12);
      CHECK(std::fabs(q.y - p.y) <= 0.5 * g.cell_height() + 1e-12);
    }
  }
}

TEST_CASE("map JSON round trip keeps axes, closure and values") {
  VectorMap m;
  m.frame_id = "f7";
  m.instances.push_back({{{1.25, -3.5}, {2.0, 4.0}}, Category::div(), 1.0});
  m.instances.push_back({{{0, 0}, {1, 0}, {1, 1}}, Category::ped(), 0.25});
  const auto j = to_json(m);
  CHECK(j["frame_id"] == "f7");
  CHECK(j["instances"][0]["category"] == "div");
  CHECK(j["instances"][0]["closed"] == false);
  CHECK(j["instances"][0]["points"][0][0] == 1.25);  // x first
  CHECK(j["instances"][0]["points"][0][1] == -3.5);
  CHECK(j["instances"][1]["closed"] == true);
  const VectorMap back = map_from_json(j);
  REQUIRE(back.instances.size() == 2);
  CHECK(back.instances[0].points == m.instances[0].points);
  CHECK(back.instances[1].category == Category::ped());
  CHECK(back.instances[1].confidence == 0.25);
  CHECK(to_json(back) == j);

  const BevGrid g = BevGrid::toy();
  CHECK(grid_from_json(to_json(g)) == g);
  CHECK_THROWS_AS(grid_from_json(nlohmann::json::parse(R"({"resolution": 0.3})")), ContractError);
}

TEST_CASE("malformed map documents are rejected") {
  CHECK_THROWS(map_from_json(nlohmann::json::parse(R"({"instances": [{"category": "div", "points": [[0,0]]}]})")));
  CHECK_THROWS(map_from_json(nlohmann::json::parse(R"({"instances": [{"category": "ped", "closed": false,
                                                       "points": [[0,0],[1,1],[2,0]]}]})")));
  CHECK_THROWS(map_from_json(nlohmann::json::parse(R"([1,2,3])")));
  CHECK(map_from_json(nlohmann::json::parse(R"({"frame_id": "e", "instances": []})")).instances.empty());
}
