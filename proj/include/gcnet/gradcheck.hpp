#pragma once

#include <string>
#include <vector>

#include "gcnet/blocks.hpp"
#include "gcnet/tensor.hpp"

namespace gcnet {

struct TensorGradError {
  std::string name;  // "x" or a parameter name such as "w_v1"
  double max_rel_err = 0.0;
  size_t worst_index = 0;
  double analytic = 0.0;  // values at worst_index
  double numeric = 0.0;
};

struct GradCheckResult {
  std::vector<TensorGradError> tensors;
  double max_rel_err = 0.0;
  size_t coordinates = 0;
};

// Compares block_backward against central differences of
// L(x, theta) = sum(upstream * z), both in 64-bit. Relative error is
// measured per tensor as ||a - n||_inf / max(||a||_inf, ||n||_inf).
GradCheckResult check_block_gradients(const BlockSpec& spec, const BlockParams<double>& params,
                                      const FeatureMap<double>& x,
                                      const FeatureMap<double>& upstream, double step = 1e-5);

// Uniform [-1, 1) feature map, deterministic in seed.
FeatureMap<double> random_feature_map(int64_t channels, Spatial spatial, uint64_t seed);

}  // namespace gcnet
