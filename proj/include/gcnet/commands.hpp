#pragma once

// The command implementations behind the gcnet CLI. Each returns a
// RunReport whose pass flag is derived from its checks; the CLI maps that to
// the exit status.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gcnet/blocks.hpp"
#include "gcnet/cost_model.hpp"
#include "gcnet/report.hpp"

namespace gcnet {

inline constexpr double kEquivalenceTolerance = 1e-10;
inline constexpr double kGradientTolerance = 1e-6;

struct EquivalenceOptions {
  uint64_t seed = 0;
  // (C, N_p) pairs.
  std::vector<std::pair<int64_t, int64_t>> sizes = {{4, 1},  {4, 9},  {4, 100},  {16, 1}, {16, 9},
                                                    {16, 100}, {64, 1}, {64, 9}, {64, 100}};
  int64_t instances_per_size = 12;
  // Bottleneck ratio for GC/SE, clamped to C.
  int64_t ratio = 4;
  // Negative control: perturb one weight in the second route of every pair.
  bool perturb = false;
};

RunReport cmd_check_equivalence(const EquivalenceOptions& options);

struct GradcheckOptions {
  BlockSpec spec = BlockSpec::gc(8, 2);
  uint64_t seed = 0;
  int64_t positions = 12;
  double step = 1e-5;
  InitScheme scheme = InitScheme::random;
  // Also report errors at h in {1e-4, 1e-5, 1e-6}.
  bool sweep = false;
};

RunReport cmd_gradcheck(const GradcheckOptions& options);

struct CostTableOutput {
  RunReport report;
  CostTable table;
};

// Throws UsageError when the config defines no rows.
CostTableOutput cmd_cost_table(const std::filesystem::path& config);
CostTableOutput cost_table_report(const std::vector<CostRowSpec>& rows, const std::string& source);

struct AttStatsOptions {
  // channels is taken from the tensor file.
  BlockSpec spec = BlockSpec::nl(1, NlVariant::embedded_gaussian);
  uint64_t seed = 0;
  InitScheme scheme = InitScheme::random;
};

RunReport cmd_att_stats(const std::filesystem::path& tensor, const AttStatsOptions& options);

enum class Precision { f32, f64 };

struct ForwardOptions {
  BlockSpec spec = BlockSpec::gc(1, 16);  // channels from the file when 0
  uint64_t seed = 0;
  Precision precision = Precision::f64;
  InitScheme scheme = InitScheme::identity;
  // When set, must agree with the file.
  std::optional<int64_t> expected_channels;
  std::optional<int64_t> expected_positions;
};

RunReport cmd_forward(const std::filesystem::path& input, const std::filesystem::path& output,
                      const ForwardOptions& options);

}  // namespace gcnet
