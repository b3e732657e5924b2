// gcnet: equivalence checks, gradient checks, cost tables, attention
// statistics and block forward passes from the command line.
//
// Exit status: 0 all checks pass, 1 checks ran and failed (or a numeric
// failure), 2 usage/format/spec error, 3 I/O error.

#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "gcnet/commands.hpp"
#include "gcnet/error.hpp"
#include "gcnet/gradcheck.hpp"
#include "gcnet/tensor_file.hpp"

namespace {

struct BlockFlags {
  std::string block = "gc";
  std::string variant = "e_gaussian";
  std::string pooling;
  std::string fusion;
  int64_t channels = 0;
  int64_t ratio = 16;
  std::string position;

  void add_to(CLI::App* app, bool with_channels) {
    app->add_option("--block", block, "nl | snl | snl_factored | se | gc | framework")->capture_default_str();
    app->add_option("--variant", variant, "NL variant: gaussian | e_gaussian | dot | concat")
        ->capture_default_str();
    app->add_option("--pooling", pooling, "framework pooling: avg | att");
    app->add_option("--fusion", fusion, "framework fusion: add | scale");
    app->add_option("--ratio", ratio, "bottleneck ratio r")->capture_default_str();
    app->add_option("--position", position, "after_add | after_1x1 (recorded only)");
    if (with_channels) app->add_option("--c", channels, "channels C");
  }

  gcnet::BlockSpec spec() const {
    gcnet::BlockSpec s;
    s.kind = gcnet::parse_block_kind(block);
    s.channels = channels;
    s.ratio = ratio;
    if (s.kind == gcnet::BlockKind::nl) s.variant = gcnet::parse_nl_variant(variant);
    if (!pooling.empty()) s.pooling = gcnet::parse_pooling(pooling);
    if (!fusion.empty()) s.fusion = gcnet::parse_fusion(fusion);
    if (!position.empty()) s.position = gcnet::parse_position(position);
    return s;
  }
};

struct PositionFlags {
  int64_t np = 0;
  int64_t height = 0;
  int64_t width = 0;
  int64_t frames = 0;

  void add_to(CLI::App* app) {
    app->add_option("--np", np, "number of positions N_p");
    app->add_option("--h", height, "height");
    app->add_option("--w", width, "width");
    app->add_option("--t", frames, "frames (video)");
  }

  std::optional<int64_t> positions() const {
    if (np > 0) return np;
    if (height > 0 || width > 0) {
      return std::max<int64_t>(height, 1) * std::max<int64_t>(width, 1) * std::max<int64_t>(frames, 1);
    }
    return std::nullopt;
  }
};

gcnet::InitScheme parse_scheme(const std::string& text) {
  if (text == "identity") return gcnet::InitScheme::identity;
  if (text == "random") return gcnet::InitScheme::random;
  if (text == "zero") return gcnet::InitScheme::zero;
  throw gcnet::UsageError("unknown --init '" + text + "'");
}

std::vector<std::pair<int64_t, int64_t>> parse_sizes(const std::string& text) {
  std::vector<std::pair<int64_t, int64_t>> sizes;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    const auto x = item.find('x');
    if (x == std::string::npos) throw gcnet::UsageError("--sizes items look like CxNP, got '" + item + "'");
    try {
      sizes.emplace_back(std::stoll(item.substr(0, x)), std::stoll(item.substr(x + 1)));
    } catch (const std::exception&) {
      throw gcnet::UsageError("--sizes items look like CxNP, got '" + item + "'");
    }
  }
  return sizes;
}

int finish(const gcnet::RunReport& report) {
  std::cout << report.serialize();
  return report.pass() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gcnet: global context block toolkit"};
  // --h is the height flag, so help is long-form only.
  app.set_help_flag("--help", "print this help message and exit");
  app.require_subcommand(1);
  uint64_t seed = 0;
  app.add_option("--seed", seed, "random seed")->capture_default_str();

  // check-equivalence
  auto* equiv = app.add_subcommand("check-equivalence", "factored vs unfactored SNL; GC/SE vs framework");
  std::string sizes;
  gcnet::EquivalenceOptions equiv_opts;
  equiv->add_option("--sizes", sizes, "comma-separated CxNP pairs, e.g. 4x1,16x9");
  equiv->add_option("--instances", equiv_opts.instances_per_size, "random instances per size")
      ->capture_default_str();
  equiv->add_option("--ratio", equiv_opts.ratio, "GC/SE bottleneck ratio (clamped to C)")
      ->capture_default_str();
  equiv->add_flag("--perturb", equiv_opts.perturb, "negative control: perturb one weight copy");
  equiv->add_option("--seed", seed, "random seed");

  // gradcheck
  auto* grad = app.add_subcommand("gradcheck", "analytic backward vs central finite differences");
  BlockFlags grad_block;
  grad_block.channels = 8;
  grad_block.ratio = 2;
  grad_block.add_to(grad, true);
  PositionFlags grad_pos;
  grad_pos.add_to(grad);
  gcnet::GradcheckOptions grad_opts;
  std::string grad_init = "random";
  grad->add_option("--step", grad_opts.step, "finite-difference step h")->capture_default_str();
  grad->add_option("--init", grad_init, "identity | random | zero")->capture_default_str();
  grad->add_flag("--sweep", grad_opts.sweep, "also report errors for h in {1e-4, 1e-5, 1e-6}");
  grad->add_option("--seed", seed, "random seed");

  // cost-table
  auto* cost = app.add_subcommand("cost-table", "parameter/FLOP table for ResNet backbones");
  std::string config;
  cost->add_option("config", config, "cost-table config file")->required();

  // att-stats
  auto* stats = app.add_subcommand("att-stats", "average pairwise distances of a block on a tensor");
  std::string stats_input;
  stats->add_option("tensor", stats_input, "GCT1 tensor file")->required();
  BlockFlags stats_block;
  stats_block.block = "nl";
  stats_block.add_to(stats, false);
  std::string stats_init = "random";
  stats->add_option("--init", stats_init, "identity | random | zero")->capture_default_str();
  stats->add_option("--seed", seed, "random seed");

  // forward
  auto* fwd = app.add_subcommand("forward", "run one block forward and write z");
  std::string fwd_input, fwd_output;
  fwd->add_option("tensor", fwd_input, "GCT1 tensor file")->required();
  fwd->add_option("--out", fwd_output, "output tensor file")->required();
  BlockFlags fwd_block;
  fwd_block.add_to(fwd, true);
  PositionFlags fwd_pos;
  fwd_pos.add_to(fwd);
  int precision = 64;
  std::string fwd_init = "identity";
  fwd->add_option("--precision", precision, "compute precision, 32 or 64 (storage is 32-bit)")
      ->check(CLI::IsMember({32, 64}))
      ->capture_default_str();
  fwd->add_option("--init", fwd_init, "identity | random | zero")->capture_default_str();
  fwd->add_option("--seed", seed, "random seed");

  // make-tensor
  auto* make = app.add_subcommand("make-tensor", "write a random or constant GCT1 tensor");
  int64_t make_c = 8, make_h = 4, make_w = 4, make_t = 0;
  std::optional<double> fill;
  std::string make_out;
  make->add_option("--c", make_c, "channels")->capture_default_str();
  make->add_option("--h", make_h, "height")->capture_default_str();
  make->add_option("--w", make_w, "width")->capture_default_str();
  make->add_option("--t", make_t, "frames (0 for a rank-3 image tensor)");
  make->add_option("--fill", fill, "constant value instead of uniform [-1, 1) noise");
  make->add_option("--out", make_out, "output tensor file")->required();
  make->add_option("--seed", seed, "random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*equiv) {
      if (!sizes.empty()) equiv_opts.sizes = parse_sizes(sizes);
      equiv_opts.seed = seed;
      return finish(gcnet::cmd_check_equivalence(equiv_opts));
    }
    if (*grad) {
      grad_opts.spec = grad_block.spec();
      grad_opts.positions = grad_pos.positions().value_or(12);
      grad_opts.scheme = parse_scheme(grad_init);
      grad_opts.seed = seed;
      return finish(gcnet::cmd_gradcheck(grad_opts));
    }
    if (*cost) {
      const gcnet::CostTableOutput out = gcnet::cmd_cost_table(config);
      std::cout << out.table.render() << '\n';
      return finish(out.report);
    }
    if (*stats) {
      gcnet::AttStatsOptions opts;
      opts.spec = stats_block.spec();
      opts.seed = seed;
      opts.scheme = parse_scheme(stats_init);
      return finish(gcnet::cmd_att_stats(stats_input, opts));
    }
    if (*fwd) {
      gcnet::ForwardOptions opts;
      opts.spec = fwd_block.spec();
      opts.seed = seed;
      opts.precision = precision == 32 ? gcnet::Precision::f32 : gcnet::Precision::f64;
      opts.scheme = parse_scheme(fwd_init);
      if (fwd_block.channels > 0) opts.expected_channels = fwd_block.channels;
      opts.expected_positions = fwd_pos.positions();
      return finish(gcnet::cmd_forward(fwd_input, fwd_output, opts));
    }
    if (*make) {
      gcnet::Spatial spatial{make_h, make_w, make_t > 0 ? std::optional<int64_t>(make_t) : std::nullopt};
      gcnet::FeatureMap<double> map =
          fill ? gcnet::FeatureMap<double>(make_c, spatial,
                                           std::vector<double>(static_cast<size_t>(make_c * spatial.positions()), *fill))
               : gcnet::random_feature_map(make_c, spatial, seed);
      gcnet::write_tensor_file(make_out, gcnet::to_tensor_file(map));
      return 0;
    }
  } catch (const gcnet::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const gcnet::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    // UsageError, SpecError, DimensionError, InvariantError
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const gcnet::FormatError& e) {
    std::cerr << "format error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
