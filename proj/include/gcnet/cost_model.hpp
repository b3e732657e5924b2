#pragma once

// Analytic parameter and FLOP counts for context blocks and for ResNet
// backbones with blocks inserted.
//
// FLOP convention: one multiply-accumulate of a conv, fully-connected layer
// or matrix product is one FLOP. Elementwise work (BN, ReLU, softmax, LN,
// sigmoid, average pooling, broadcast fusion) is tallied separately in
// `other_ops` and is not part of the headline count. Linear maps inside
// blocks are bias-free; the backbone counts BN affine parameters and the
// classifier bias, as the reference ResNet parameter totals do.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gcnet/blocks.hpp"

namespace gcnet {

enum class Arch { resnet50, resnet101 };
enum class StageId { c2, c3, c4, c5 };

std::string to_string(Arch arch);
std::string to_string(StageId stage);
Arch parse_arch(std::string_view text);
StageId parse_stage(std::string_view text);

struct StageDesc {
  StageId id;
  int64_t blocks;
  int64_t width;         // bottleneck width of the 3x3 conv
  int64_t out_channels;  // 4 * width
  int64_t stride;
  int64_t height;        // output resolution of the stage
  int64_t width_px;
};

struct BackboneDesc {
  Arch arch = Arch::resnet50;
  int64_t input_height = 224;
  int64_t input_width = 224;
  int64_t num_classes = 1000;

  static BackboneDesc resnet50() { return BackboneDesc{}; }
  static BackboneDesc resnet101() { return BackboneDesc{Arch::resnet101}; }

  // Throws SpecError on non-positive sizes.
  void validate() const;
  std::vector<StageDesc> stages() const;

  bool operator==(const BackboneDesc&) const = default;
};

enum class InsertMode {
  all_blocks,        // after every residual unit of each listed stage
  last_block_of_c4,  // a single block before the last residual unit of c4
};

std::string to_string(InsertMode mode);
InsertMode parse_insert_mode(std::string_view text);

struct InsertionPlan {
  std::vector<StageId> stages;
  InsertMode mode = InsertMode::all_blocks;
  // Channel count is taken from the stage; block.channels is ignored.
  BlockSpec block;

  void validate() const;
};

struct CostTerm {
  std::string name;
  int64_t params = 0;
  int64_t macs = 0;
  int64_t other_ops = 0;
};

struct StageCost {
  std::string stage;  // "stem", "c2".."c5", "head"
  int64_t params = 0;
  int64_t macs = 0;
  int64_t other_ops = 0;
  int64_t params_added = 0;
  int64_t macs_added = 0;
  int64_t blocks_inserted = 0;
};

struct CostReport {
  int64_t params_total = 0;
  int64_t flops_total = 0;  // MACs
  int64_t other_ops_total = 0;
  int64_t params_added = 0;
  int64_t flops_added = 0;
  std::vector<StageCost> per_stage;
  // Named components; for count_block these are the block's own pieces.
  std::vector<CostTerm> terms;

  const CostTerm* term(std::string_view name) const;
};

// Cost of one block on a C x H x W map. Baseline is zero, so added == total.
CostReport count_block(const BlockSpec& spec, int64_t channels, int64_t height, int64_t width);

CostReport count_backbone(const BackboneDesc& desc,
                          const std::optional<InsertionPlan>& plan = std::nullopt);

struct CostRowSpec {
  std::string label;
  BackboneDesc desc;
  std::optional<InsertionPlan> plan;
};

struct CostTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // "label | params | flops" lines, header first.
  std::string render() const;
};

// Params in M and FLOPs in G, two decimals, input order preserved.
CostTable emit_cost_table(const std::vector<CostRowSpec>& rows);

// Two-decimal presentation used by the table, e.g. 25557032 -> "25.56".
std::string format_millions(int64_t count);
std::string format_billions(int64_t count);

}  // namespace gcnet
