#pragma once

// Average pairwise distance analysis of block inputs, block outputs before
// fusion, and attention maps.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gcnet/blocks.hpp"
#include "gcnet/tensor.hpp"

namespace gcnet {

enum class Metric { cosine, jsd };
enum class Family { input, output, att };

std::string to_string(Metric metric);
std::string to_string(Family family);

struct DistanceReport {
  Metric metric = Metric::cosine;
  Family family = Family::input;
  // Empty when the metric does not apply to the family, e.g. JSD over
  // dot-product attention that is not a probability vector.
  std::optional<double> value;
  int64_t n_positions = 0;
  std::string variant;
  std::string note;
};

// (1 - cos(u, v)) / 2. Throws InvariantError when either vector is zero.
double cosine_distance(std::span<const double> u, std::span<const double> v);

// Jensen-Shannon divergence with natural log and 0 log 0 = 0.
double jsd(std::span<const double> p, std::span<const double> q);

// (1 / N^2) sum_i sum_j dist(v_i, v_j), self-pairs included.
double avg_pairwise_distance(const std::vector<std::vector<double>>& vectors, Metric metric);

// Runs the block forward on x and reports avg_dist per family.
std::vector<DistanceReport> analyze_block(const FeatureMap<double>& x, const BlockSpec& spec,
                                          const BlockParams<double>& params);

}  // namespace gcnet
