#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cpe/model.hpp"

namespace cpe {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t num_params = 0;
};

/// Small model of 3 proposals, 2 classes and 2 directions (L2R and T2B) over
/// a random feature map, used for finite-difference checks of the full loss.
struct ToyProblem {
  SyntheticScene scene;
  ModelConfig config;
};
ToyProblem make_toy_problem(std::uint64_t seed);

/// Finite-difference checks of (a) one directional module: forward, semantic
/// score and decoder loss; (b) the complete training loss of the toy model.
std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed, double eps = 1e-5);

}  // namespace cpe
