#include "gcnet/cost_config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace gcnet {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

int64_t parse_int(std::string_view text, size_t line) {
  int64_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || value <= 0) {
    throw FormatError("line " + std::to_string(line) + ": expected a positive integer, got '" +
                      std::string(text) + "'");
  }
  return value;
}

struct RowBuilder {
  CostRowSpec row;
  std::string block = "none";
  std::optional<NlVariant> variant;
  std::optional<Pooling> pooling;
  std::optional<Fusion> fusion;
  int64_t ratio = 16;
  InsertMode mode = InsertMode::all_blocks;
  std::vector<StageId> stages = {StageId::c3, StageId::c4, StageId::c5};
  Position position = Position::after_add;
  size_t line = 0;

  CostRowSpec finish() const {
    CostRowSpec out = row;
    if (block == "none") return out;
    BlockSpec spec;
    spec.kind = parse_block_kind(block);
    // Channel count is assigned per stage by the cost model.
    spec.channels = 2048;
    spec.ratio = ratio;
    spec.variant = variant;
    spec.pooling = pooling;
    spec.fusion = fusion;
    spec.position = position;
    if (spec.kind == BlockKind::nl && !spec.variant) spec.variant = NlVariant::embedded_gaussian;
    spec.validate();
    out.plan = InsertionPlan{mode == InsertMode::all_blocks ? stages : std::vector<StageId>{}, mode,
                             spec};
    out.plan->validate();
    return out;
  }
};

void apply_key(RowBuilder& b, std::string_view key, std::string_view value, size_t line) {
  if (key == "arch") {
    b.row.desc.arch = parse_arch(value);
  } else if (key == "resolution") {
    const auto x = value.find('x');
    if (x == std::string_view::npos) {
      b.row.desc.input_height = b.row.desc.input_width = parse_int(value, line);
    } else {
      b.row.desc.input_height = parse_int(trim(value.substr(0, x)), line);
      b.row.desc.input_width = parse_int(trim(value.substr(x + 1)), line);
    }
  } else if (key == "classes") {
    b.row.desc.num_classes = parse_int(value, line);
  } else if (key == "block") {
    if (value != "none") parse_block_kind(value);
    b.block = std::string(value);
  } else if (key == "variant") {
    b.variant = parse_nl_variant(value);
  } else if (key == "pooling") {
    b.pooling = parse_pooling(value);
  } else if (key == "fusion") {
    b.fusion = parse_fusion(value);
  } else if (key == "ratio") {
    b.ratio = parse_int(value, line);
  } else if (key == "mode") {
    b.mode = parse_insert_mode(value);
  } else if (key == "stages") {
    b.stages.clear();
    std::string_view rest = value;
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      b.stages.push_back(parse_stage(trim(rest.substr(0, comma))));
      if (comma == std::string_view::npos) break;
      rest = rest.substr(comma + 1);
    }
  } else if (key == "position") {
    b.position = parse_position(value);
  } else {
    throw FormatError("line " + std::to_string(line) + ": unknown key '" + std::string(key) + "'");
  }
}

}  // namespace

std::vector<CostRowSpec> parse_cost_config(std::string_view text) {
  std::vector<CostRowSpec> rows;
  std::optional<RowBuilder> current;
  auto flush = [&] {
    if (!current) return;
    try {
      rows.push_back(current->finish());
    } catch (const SpecError& e) {
      throw FormatError("line " + std::to_string(current->line) + ": " + e.what());
    }
  };

  size_t line_no = 0;
  std::istringstream in{std::string(text)};
  for (std::string raw; std::getline(in, raw);) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']' || line.substr(0, 5) != "[row ") {
        throw FormatError("line " + std::to_string(line_no) + ": expected '[row <label>]'");
      }
      flush();
      current.emplace();
      current->row.label = std::string(trim(line.substr(5, line.size() - 6)));
      current->line = line_no;
      if (current->row.label.empty()) {
        throw FormatError("line " + std::to_string(line_no) + ": empty row label");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw FormatError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    if (!current) {
      throw FormatError("line " + std::to_string(line_no) + ": key outside of a [row] section");
    }
    try {
      apply_key(*current, trim(line.substr(0, eq)), trim(line.substr(eq + 1)), line_no);
    } catch (const SpecError& e) {
      throw FormatError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  flush();
  return rows;
}

std::vector<CostRowSpec> load_cost_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_cost_config(buf.str());
}

namespace {

constexpr double kBaselineParamsTol = 0.001;
constexpr double kAddedParamsTol = 0.01;
constexpr double kFlopsTol = 0.02;
constexpr double kAllGcFlopIncreaseMax = 0.003;

bool is_reference_backbone(const BackboneDesc& d) { return d == BackboneDesc::resnet50(); }

bool all_stages(const InsertionPlan& p) {
  if (p.mode != InsertMode::all_blocks || p.stages.size() != 3) return false;
  for (StageId s : {StageId::c3, StageId::c4, StageId::c5}) {
    if (std::find(p.stages.begin(), p.stages.end(), s) == p.stages.end()) return false;
  }
  return true;
}

double relative(double value, double target) { return std::abs(value - target) / target; }

// Delta as the table presents it: difference of the two-decimal totals.
double table_delta_millions(int64_t total, int64_t baseline) {
  return std::stod(format_millions(total)) - std::stod(format_millions(baseline));
}

}  // namespace

bool add_reference_checks(RunReport& report, const std::string& key, const CostRowSpec& row) {
  if (!is_reference_backbone(row.desc)) return false;
  const CostReport base = count_backbone(row.desc);
  if (!row.plan) {
    report.check(key + ".params_rel_err", relative(base.params_total / 1e6, 25.56), kBaselineParamsTol);
    report.check(key + ".flops_rel_err", relative(base.flops_total / 1e9, 3.86), kFlopsTol);
    return true;
  }
  const InsertionPlan& plan = *row.plan;
  const BlockSpec& b = plan.block;
  const CostReport r = count_backbone(row.desc, plan);

  if (plan.mode == InsertMode::last_block_of_c4) {
    double target = 0.0;
    if (b.kind == BlockKind::nl && b.variant == NlVariant::embedded_gaussian && b.nl_inner_channels == 0) {
      target = 27.66 - 25.56;
    } else if (b.kind == BlockKind::snl || b.kind == BlockKind::snl_factored) {
      target = 26.61 - 25.56;
    } else if (b.kind == BlockKind::gc && b.ratio == 16) {
      target = 25.69 - 25.56;
    } else {
      return false;
    }
    report.check(key + ".params_added_rel_err",
                 relative(table_delta_millions(r.params_total, base.params_total), target),
                 kAddedParamsTol);
    return true;
  }

  if (!all_stages(plan) || b.ratio != 16) return false;
  const ContextPipeline pipe = [&] {
    if (b.kind == BlockKind::gc || b.kind == BlockKind::se || b.kind == BlockKind::framework) {
      return pipeline_for(b);
    }
    return ContextPipeline{Pooling::avg, TransformKind::linear, Fusion::add};
  }();
  if (pipe.transform == TransformKind::linear) return false;

  const double increase = static_cast<double>(r.flops_added) / static_cast<double>(base.flops_total);
  if (pipe.pooling == Pooling::att && pipe.fusion == Fusion::add) {
    // GC everywhere: about 2.52M added parameters and a sub-0.3% FLOP increase.
    report.check(key + ".params_added_rel_err", relative(r.params_added / 1e6, 2.52), kAddedParamsTol);
    report.check(key + ".flops_increase", increase, kAllGcFlopIncreaseMax);
    return true;
  }
  // Pooling/fusion ablation rows, totals 28.07 (avg) and 28.08 (att).
  const double total = pipe.pooling == Pooling::avg ? 28.07 : 28.08;
  report.check(key + ".params_added_rel_err",
               relative(table_delta_millions(r.params_total, base.params_total), total - 25.56),
               kAddedParamsTol);
  report.check(key + ".flops_rel_err", relative(r.flops_total / 1e9, 3.87), kFlopsTol);
  return true;
}

}  // namespace gcnet
