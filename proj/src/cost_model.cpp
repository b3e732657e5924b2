#include "gcnet/cost_model.hpp"

#include <algorithm>
#include <cstdio>

namespace gcnet {

namespace {

int64_t conv_out(int64_t in, int64_t kernel, int64_t stride, int64_t pad) {
  return (in + 2 * pad - kernel) / stride + 1;
}

struct Tally {
  int64_t params = 0;
  int64_t macs = 0;
  int64_t other = 0;

  // k x k conv followed by BN (affine) and, usually, ReLU.
  void conv_bn(int64_t in_c, int64_t out_c, int64_t kernel, int64_t out_h, int64_t out_w) {
    const int64_t positions = out_h * out_w;
    params += in_c * out_c * kernel * kernel + 2 * out_c;
    macs += in_c * out_c * kernel * kernel * positions;
    other += 2 * out_c * positions;  // BN + activation
  }
};

std::vector<CostTerm> block_terms(const BlockSpec& spec, int64_t c, int64_t np) {
  std::vector<CostTerm> t;
  if (spec.kind == BlockKind::nl) {
    const int64_t m = spec.nl_inner();
    switch (*spec.variant) {
      case NlVariant::gaussian:
        t.push_back({"attention.logits", 0, np * np * c, 0});
        t.push_back({"attention.softmax", 0, 0, np * np});
        break;
      case NlVariant::embedded_gaussian:
      case NlVariant::dot:
        t.push_back({"W_q", c * m, np * c * m, 0});
        t.push_back({"W_k", c * m, np * c * m, 0});
        t.push_back({"attention.logits", 0, np * np * m, 0});
        t.push_back({*spec.variant == NlVariant::dot ? "attention.scale" : "attention.softmax", 0,
                     0, np * np});
        break;
      case NlVariant::concat:
        t.push_back({"W_q", 2 * c, np * np * 2 * c, 0});
        t.push_back({"attention.relu_scale", 0, 0, 2 * np * np});
        break;
    }
    t.push_back({"W_v", c * m, np * c * m, 0});
    t.push_back({"attention.aggregate", 0, np * np * m, 0});
    t.push_back({"W_z", m * c, np * m * c, 0});
    t.push_back({"fusion", 0, 0, np * c});
    return t;
  }

  const ContextPipeline pipe = pipeline_for(spec);
  if (pipe.pooling == Pooling::att) {
    t.push_back({"W_k", c, np * c, 0});
    t.push_back({"softmax", 0, 0, np});
  }
  if (pipe.transform == TransformKind::linear) {
    if (spec.kind == BlockKind::snl) {
      // W_v at every position, then pooling of the transformed features.
      t.push_back({"W_v", c * c, np * c * c, 0});
      t.push_back({"pool", 0, np * c, 0});
    } else {
      t.push_back({"pool", 0, np * c, 0});
      t.push_back({"W_v", c * c, c * c, 0});
    }
  } else {
    const int64_t h = spec.hidden();
    if (pipe.pooling == Pooling::att) {
      t.push_back({"pool", 0, np * c, 0});
    } else {
      t.push_back({"pool", 0, 0, np * c});
    }
    t.push_back({"W_v1", c * h, c * h, 0});
    if (pipe.transform == TransformKind::bottleneck_ln) t.push_back({"ln", 2 * h, 0, 2 * h});
    t.push_back({"relu", 0, 0, h});
    t.push_back({"W_v2", h * c, h * c, 0});
    if (pipe.transform == TransformKind::bottleneck_sigmoid) t.push_back({"sigmoid", 0, 0, c});
  }
  t.push_back({"fusion", 0, 0, np * c});
  return t;
}

}  // namespace

std::string to_string(Arch arch) { return arch == Arch::resnet50 ? "resnet50" : "resnet101"; }

std::string to_string(StageId stage) {
  switch (stage) {
    case StageId::c2: return "c2";
    case StageId::c3: return "c3";
    case StageId::c4: return "c4";
    case StageId::c5: return "c5";
  }
  return "?";
}

Arch parse_arch(std::string_view text) {
  if (text == "resnet50") return Arch::resnet50;
  if (text == "resnet101") return Arch::resnet101;
  throw SpecError("unknown arch '" + std::string(text) + "'");
}

StageId parse_stage(std::string_view text) {
  if (text == "c2") return StageId::c2;
  if (text == "c3") return StageId::c3;
  if (text == "c4") return StageId::c4;
  if (text == "c5") return StageId::c5;
  throw SpecError("unknown stage '" + std::string(text) + "'");
}

std::string to_string(InsertMode mode) {
  return mode == InsertMode::all_blocks ? "all_blocks" : "last_block_of_c4";
}

InsertMode parse_insert_mode(std::string_view text) {
  if (text == "all_blocks") return InsertMode::all_blocks;
  if (text == "last_block_of_c4") return InsertMode::last_block_of_c4;
  throw SpecError("unknown insertion mode '" + std::string(text) + "'");
}

void BackboneDesc::validate() const {
  if (input_height <= 0 || input_width <= 0 || num_classes <= 0) {
    throw SpecError("backbone: resolution and class count must be positive");
  }
  if (input_height < 32 || input_width < 32) {
    throw SpecError("backbone: input resolution must be at least 32x32");
  }
}

std::vector<StageDesc> BackboneDesc::stages() const {
  validate();
  const int64_t depth_c4 = arch == Arch::resnet50 ? 6 : 23;
  // conv1 7x7/2 then 3x3/2 max pool.
  int64_t h = conv_out(conv_out(input_height, 7, 2, 3), 3, 2, 1);
  int64_t w = conv_out(conv_out(input_width, 7, 2, 3), 3, 2, 1);
  std::vector<StageDesc> out;
  const StageId ids[] = {StageId::c2, StageId::c3, StageId::c4, StageId::c5};
  const int64_t counts[] = {3, 4, depth_c4, 3};
  for (int s = 0; s < 4; ++s) {
    const int64_t width = int64_t{64} << s;
    const int64_t stride = s == 0 ? 1 : 2;
    h = conv_out(h, 1, stride, 0);
    w = conv_out(w, 1, stride, 0);
    out.push_back(StageDesc{ids[s], counts[s], width, 4 * width, stride, h, w});
  }
  return out;
}

void InsertionPlan::validate() const {
  if (mode == InsertMode::all_blocks) {
    if (stages.empty()) throw SpecError("insertion plan: all_blocks needs at least one stage");
    for (StageId s : stages) {
      if (s == StageId::c2) throw SpecError("insertion plan: stage c2 never receives blocks");
    }
    for (size_t i = 0; i < stages.size(); ++i) {
      for (size_t j = i + 1; j < stages.size(); ++j) {
        if (stages[i] == stages[j]) throw SpecError("insertion plan: duplicate stage");
      }
    }
  }
}

const CostTerm* CostReport::term(std::string_view name) const {
  for (const auto& t : terms) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

CostReport count_block(const BlockSpec& spec, int64_t channels, int64_t height, int64_t width) {
  if (channels <= 0 || height <= 0 || width <= 0) {
    throw SpecError("count_block: dimensions must be positive");
  }
  BlockSpec s = spec;
  s.channels = channels;
  s.validate();
  CostReport r;
  r.terms = block_terms(s, channels, height * width);
  for (const auto& t : r.terms) {
    r.params_total += t.params;
    r.flops_total += t.macs;
    r.other_ops_total += t.other_ops;
  }
  r.params_added = r.params_total;
  r.flops_added = r.flops_total;
  return r;
}

CostReport count_backbone(const BackboneDesc& desc, const std::optional<InsertionPlan>& plan) {
  if (plan) plan->validate();
  const std::vector<StageDesc> stages = desc.stages();
  CostReport r;

  {
    Tally stem;
    const int64_t h = conv_out(desc.input_height, 7, 2, 3);
    const int64_t w = conv_out(desc.input_width, 7, 2, 3);
    stem.conv_bn(3, 64, 7, h, w);
    stem.other += 64 * stages.front().height * stages.front().width_px;  // max pool
    r.per_stage.push_back(StageCost{"stem", stem.params, stem.macs, stem.other, 0, 0, 0});
  }

  int64_t in_c = 64;
  for (const StageDesc& st : stages) {
    Tally t;
    const int64_t positions = st.height * st.width_px;
    for (int64_t b = 0; b < st.blocks; ++b) {
      // Original ResNet layout: the stride sits on the first 1x1 conv.
      t.conv_bn(in_c, st.width, 1, st.height, st.width_px);
      t.conv_bn(st.width, st.width, 3, st.height, st.width_px);
      t.conv_bn(st.width, st.out_channels, 1, st.height, st.width_px);
      if (b == 0) t.conv_bn(in_c, st.out_channels, 1, st.height, st.width_px);
      t.other += st.out_channels * positions;  // residual add
      in_c = st.out_channels;
    }
    StageCost sc{to_string(st.id), t.params, t.macs, t.other, 0, 0, 0};

    if (plan && st.id != StageId::c2) {
      int64_t inserted = 0;
      if (plan->mode == InsertMode::last_block_of_c4) {
        inserted = st.id == StageId::c4 ? 1 : 0;
      } else if (std::find(plan->stages.begin(), plan->stages.end(), st.id) != plan->stages.end()) {
        inserted = st.blocks;
      }
      if (inserted > 0) {
        const CostReport one = count_block(plan->block, st.out_channels, st.height, st.width_px);
        sc.params_added = inserted * one.params_total;
        sc.macs_added = inserted * one.flops_total;
        sc.other_ops += inserted * one.other_ops_total;
        sc.blocks_inserted = inserted;
      }
    }
    r.per_stage.push_back(sc);
  }

  {
    const int64_t fc_params = 2048 * desc.num_classes + desc.num_classes;
    const int64_t fc_macs = 2048 * desc.num_classes;
    const StageDesc& last = stages.back();
    r.per_stage.push_back(
        StageCost{"head", fc_params, fc_macs, 2048 * last.height * last.width_px, 0, 0, 0});
  }

  for (const StageCost& sc : r.per_stage) {
    r.params_total += sc.params + sc.params_added;
    r.flops_total += sc.macs + sc.macs_added;
    r.other_ops_total += sc.other_ops;
    r.params_added += sc.params_added;
    r.flops_added += sc.macs_added;
  }
  return r;
}

std::string format_millions(int64_t count) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", static_cast<double>(count) / 1e6);
  return buf;
}

std::string format_billions(int64_t count) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", static_cast<double>(count) / 1e9);
  return buf;
}

std::string CostTable::render() const {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i) out += " | ";
      out += cells[i];
    }
    out += '\n';
  };
  line(header);
  for (const auto& row : rows) line(row);
  return out;
}

CostTable emit_cost_table(const std::vector<CostRowSpec>& rows) {
  CostTable table;
  table.header = {"block", "#params(M)", "FLOPs(G)"};
  for (const CostRowSpec& row : rows) {
    const CostReport r = count_backbone(row.desc, row.plan);
    table.rows.push_back({row.label, format_millions(r.params_total), format_billions(r.flops_total)});
  }
  return table;
}

}  // namespace gcnet
