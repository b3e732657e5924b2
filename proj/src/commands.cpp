#include "gcnet/commands.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>

#include "gcnet/attention_stats.hpp"
#include "gcnet/backward.hpp"
#include "gcnet/cost_config.hpp"
#include "gcnet/forward.hpp"
#include "gcnet/gradcheck.hpp"
#include "gcnet/tensor_file.hpp"

namespace gcnet {

namespace {

uint64_t instance_seed(uint64_t seed, int64_t c, int64_t np, int64_t instance) {
  uint64_t h = seed * 0x9E3779B97F4A7C15ULL;
  for (uint64_t v : {static_cast<uint64_t>(c), static_cast<uint64_t>(np), static_cast<uint64_t>(instance)}) {
    h ^= v + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
  }
  return h;
}

template <typename T>
int64_t count_mismatches(const FeatureMap<T>& a, const FeatureMap<T>& b) {
  int64_t n = 0;
  for (size_t k = 0; k < a.data().size(); ++k) n += a.data()[k] != b.data()[k];
  return n;
}

void nudge(std::optional<LinearWeight<double>>& w) { w->data.front() += 1e-3; }

std::string sizes_text(const std::vector<std::pair<int64_t, int64_t>>& sizes) {
  std::string out;
  for (const auto& [c, np] : sizes) {
    if (!out.empty()) out += ',';
    out += std::to_string(c) + "x" + std::to_string(np);
  }
  return out;
}

std::string step_key(double h) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "h_%.0e", h);
  return buf;
}

std::string sanitize(const std::string& label) {
  std::string out;
  for (char ch : label) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      out += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    } else if (ch == '+') {
      out += "plus";
    } else if (!out.empty() && out.back() != '_') {
      out += '_';
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out.empty() ? "row" : out;
}

void echo_spec(RunReport& report, const BlockSpec& spec) {
  report.echo("block", spec.tag());
  report.echo("channels", std::to_string(spec.channels));
}

}  // namespace

RunReport cmd_check_equivalence(const EquivalenceOptions& options) {
  RunReport report("check-equivalence", options.seed);
  report.echo("sizes", sizes_text(options.sizes));
  report.echo("instances_per_size", std::to_string(options.instances_per_size));
  report.echo("ratio", std::to_string(options.ratio));
  if (options.perturb) report.echo("perturb", "true");
  if (options.sizes.empty() || options.instances_per_size <= 0) {
    throw UsageError("check-equivalence: need at least one size and one instance");
  }

  double snl_err = 0.0;
  int64_t gc_mismatch = 0, se_mismatch = 0, instances = 0;
  for (const auto& [c, np] : options.sizes) {
    if (c <= 0 || np <= 0) throw UsageError("check-equivalence: sizes must be positive");
    const int64_t ratio = std::min(options.ratio, c);
    for (int64_t inst = 0; inst < options.instances_per_size; ++inst) {
      const uint64_t s = instance_seed(options.seed, c, np, inst);
      const FeatureMap<double> x = random_feature_map(c, Spatial::flat(np), s);

      const BlockParams<double> snl = init_params(BlockSpec::snl(c), s, InitScheme::random);
      BlockParams<double> snl_second = snl;
      if (options.perturb) nudge(snl_second.w_v);
      snl_err = std::max(snl_err, max_relative_error(snl_forward(x, snl).z.data(),
                                                     snl_factored_forward(x, snl_second).z.data()));

      const BlockParams<double> gc = init_params(BlockSpec::gc(c, ratio), s + 1, InitScheme::random);
      BlockParams<double> gc_second = gc;
      if (options.perturb) nudge(gc_second.w_v1);
      gc_mismatch += count_mismatches(
          gc_forward(x, gc).z,
          framework_forward(x, BlockSpec::framework(c, ratio, Pooling::att, Fusion::add), gc_second).z);

      const BlockParams<double> se = init_params(BlockSpec::se(c, ratio), s + 2, InitScheme::random);
      BlockParams<double> se_second = se;
      if (options.perturb) nudge(se_second.w_v1);
      se_mismatch += count_mismatches(
          se_forward(x, se).z,
          framework_forward(x, BlockSpec::framework(c, ratio, Pooling::avg, Fusion::scale), se_second).z);
      ++instances;
    }
  }
  report.result("instances", static_cast<double>(instances));
  report.check("snl_vs_factored.max_rel_err", snl_err, kEquivalenceTolerance);
  report.check("gc_vs_framework_att_add.mismatches", static_cast<double>(gc_mismatch), 0.0);
  report.check("se_vs_framework_avg_scale.mismatches", static_cast<double>(se_mismatch), 0.0);
  return report;
}

RunReport cmd_gradcheck(const GradcheckOptions& options) {
  RunReport report("gradcheck", options.seed);
  const BlockSpec& spec = options.spec;
  echo_spec(report, spec);
  report.echo("positions", std::to_string(options.positions));
  report.echo("step", format_number(options.step));
  report.echo("init", options.scheme == InitScheme::random   ? "random"
                      : options.scheme == InitScheme::zero ? "zero"
                                                           : "identity");
  if (spec.kind == BlockKind::nl) throw UsageError("gradcheck: NL blocks have no analytic backward");
  if (options.positions <= 0) throw UsageError("gradcheck: --np must be positive");

  const Spatial spatial = Spatial::flat(options.positions);
  const FeatureMap<double> x = random_feature_map(spec.channels, spatial, options.seed);
  const FeatureMap<double> upstream = random_feature_map(spec.channels, spatial, options.seed + 7919);
  const BlockParams<double> params = init_params(spec, options.seed, options.scheme);

  const GradCheckResult result = check_block_gradients(spec, params, x, upstream, options.step);
  for (const TensorGradError& t : result.tensors) {
    report.result("grad." + t.name + ".max_rel_err", t.max_rel_err);
    report.note("grad." + t.name + ".worst",
                "index " + std::to_string(t.worst_index) + " analytic " + format_number(t.analytic) +
                    " numeric " + format_number(t.numeric));
  }
  report.result("coordinates", static_cast<double>(result.coordinates));
  report.check("max_rel_err", result.max_rel_err, kGradientTolerance);

  if (spec.kind == BlockKind::se && options.scheme == InitScheme::zero) {
    // The gate is frozen at sigmoid(0) = 1/2, so dL/dx = upstream / 2 exactly.
    const BlockGradients<double> g = block_backward(x, spec, params, upstream);
    std::vector<double> half(upstream.data().begin(), upstream.data().end());
    for (double& v : half) v *= 0.5;
    report.check("se_zero.grad_x_vs_half_upstream",
                 max_relative_error<double, double>(g.grad_x.data(), half), 0.0);
  }

  if (options.sweep) {
    const double steps[] = {1e-4, 1e-5, 1e-6};
    double errs[3];
    for (int k = 0; k < 3; ++k) {
      errs[k] = check_block_gradients(spec, params, x, upstream, steps[k]).max_rel_err;
      report.result("sweep." + step_key(steps[k]), errs[k]);
    }
    // Truncation error dominates at large h, round-off at small h.
    const double middle = std::max(errs[1], std::numeric_limits<double>::min());
    report.check("sweep.v_shape_ratio", std::min(errs[0], errs[2]) / middle, 1.0, Comparison::at_least);
  }
  return report;
}

CostTableOutput cost_table_report(const std::vector<CostRowSpec>& rows, const std::string& source) {
  if (rows.empty()) throw UsageError("cost-table: config defines no rows");
  RunReport report("cost-table", 0);
  report.echo("config", source);
  CostTable table = emit_cost_table(rows);
  std::vector<std::string> used;
  for (const CostRowSpec& row : rows) {
    std::string key = sanitize(row.label);
    const std::string base_key = key;
    for (int n = 2; std::find(used.begin(), used.end(), key) != used.end(); ++n) {
      key = base_key + "_" + std::to_string(n);
    }
    used.push_back(key);

    const CostReport r = count_backbone(row.desc, row.plan);
    report.result(key + ".params", static_cast<double>(r.params_total));
    report.result(key + ".flops", static_cast<double>(r.flops_total));
    report.result(key + ".params_added", static_cast<double>(r.params_added));
    report.result(key + ".flops_added", static_cast<double>(r.flops_added));
    if (!add_reference_checks(report, key, row)) report.note(key, "no reference target");
  }
  return {std::move(report), std::move(table)};
}

CostTableOutput cmd_cost_table(const std::filesystem::path& config) {
  return cost_table_report(load_cost_config(config), config.string());
}

RunReport cmd_att_stats(const std::filesystem::path& tensor, const AttStatsOptions& options) {
  RunReport report("att-stats", options.seed);
  const FeatureMap<double> x = to_feature_map(read_tensor_file(tensor));
  BlockSpec spec = options.spec;
  spec.channels = x.channels();
  spec.ratio = std::min(spec.ratio, spec.channels);
  echo_spec(report, spec);
  report.echo("positions", std::to_string(x.positions()));

  const BlockParams<double> params = init_params(spec, options.seed, options.scheme);
  const std::vector<DistanceReport> stats = analyze_block(x, spec, params);
  for (const DistanceReport& d : stats) {
    const std::string key = to_string(d.family) + "." + to_string(d.metric);
    if (d.value) {
      report.result(key, *d.value);
    } else {
      report.note(key, "n/a (" + d.note + ")");
    }
  }

  const bool shared_context = spec.kind != BlockKind::nl && pipeline_for(spec).pooling == Pooling::att &&
                              pipeline_for(spec).fusion == Fusion::add;
  if (shared_context) {
    for (const DistanceReport& d : stats) {
      if (d.family == Family::input || !d.value) continue;
      report.check("query_independent." + to_string(d.family) + "." + to_string(d.metric), *d.value, 0.0);
    }
  }
  return report;
}

RunReport cmd_forward(const std::filesystem::path& input, const std::filesystem::path& output,
                      const ForwardOptions& options) {
  RunReport report("forward", options.seed);
  const FeatureMap<double> x = to_feature_map(read_tensor_file(input));
  if (options.expected_channels && *options.expected_channels != x.channels()) {
    throw DimensionError("forward: --c " + std::to_string(*options.expected_channels) +
                         " but file has " + std::to_string(x.channels()) + " channels");
  }
  if (options.expected_positions && *options.expected_positions != x.positions()) {
    throw DimensionError("forward: --np " + std::to_string(*options.expected_positions) +
                         " but file has " + std::to_string(x.positions()) + " positions");
  }
  BlockSpec spec = options.spec;
  spec.channels = x.channels();
  echo_spec(report, spec);
  report.echo("positions", std::to_string(x.positions()));
  report.echo("precision", options.precision == Precision::f32 ? "32" : "64");

  const BlockParams<double> params = init_params(spec, options.seed, options.scheme);
  TensorFile out;
  double max_delta = 0.0;
  auto run = [&](auto tag) {
    using T = decltype(tag);
    const FeatureMap<T> xt = x.cast<T>();
    const BlockOutput<T> y = block_forward(xt, spec, params.template cast<T>());
    for (size_t k = 0; k < xt.data().size(); ++k) {
      max_delta = std::max(max_delta, std::abs(static_cast<double>(y.z.data()[k] - xt.data()[k])));
    }
    out = to_tensor_file(y.z);
  };
  if (options.precision == Precision::f32) {
    run(float{});
  } else {
    run(double{});
  }
  write_tensor_file(output, out);
  report.result("max_abs_delta", max_delta);
  return report;
}

}  // namespace gcnet
