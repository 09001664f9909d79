#pragma once

// Randomized checks shared by the unit tests and the acceptance binary.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "percmap/map_core.hpp"
#include "percmap/model.hpp"
#include "percmap/rng.hpp"
#include "percmap/synth.hpp"

namespace suites {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Reduced configuration for finite-difference checks (about 1000 parameters).
percmap::ModelConfig small_model_config();
percmap::SceneSpec small_scene_spec(std::uint64_t seed);
// Two 16x16 cameras; pairs with the 8x8 PV features of small_model_config.
percmap::CameraRig small_rig();

// Random instance on the resampling lattice: every vertex is hit by a sample,
// so resampling at n is idempotent.
percmap::MapInstance lattice_instance(percmap::Xoshiro256& rng, std::size_t n, bool closed);

Outcome kernel_oracles(std::size_t min_shapes, std::uint64_t seed);
Outcome op_gradients(std::uint64_t seed);
Outcome module_gradients(std::uint64_t seed);
Outcome geometry(std::size_t ground_points, std::uint64_t seed);
Outcome evaluator_oracle(std::size_t scenes, std::uint64_t seed);
Outcome identical_fixture_map();
Outcome raster_oracle(std::size_t instances, std::uint64_t seed);
Outcome target_closed_forms();
Outcome zero_parameter_identities(std::uint64_t seed);

}  // namespace suites
