#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <span>
#include <string_view>
#include <utility>
#include <vector>

#include "gcnet/tensor.hpp"

namespace gcnet {

enum class BlockKind { nl, snl, snl_factored, se, gc, framework };
enum class NlVariant { gaussian, embedded_gaussian, dot, concat };
enum class Pooling { avg, att };
enum class Fusion { add, scale };
// Insertion point inside a residual unit. Only the cost model reads it.
enum class Position { after_add, after_1x1 };

std::string to_string(BlockKind kind);
std::string to_string(NlVariant variant);
std::string to_string(Pooling pooling);
std::string to_string(Fusion fusion);
std::string to_string(Position position);

BlockKind parse_block_kind(std::string_view text);
NlVariant parse_nl_variant(std::string_view text);
Pooling parse_pooling(std::string_view text);
Fusion parse_fusion(std::string_view text);
Position parse_position(std::string_view text);

struct BlockSpec {
  BlockKind kind = BlockKind::gc;
  int64_t channels = 0;
  int64_t ratio = 16;
  std::optional<Pooling> pooling;
  std::optional<Fusion> fusion;
  std::optional<NlVariant> variant;
  Position position = Position::after_add;
  // 0 selects the default width C/2.
  int64_t nl_inner_channels = 0;

  static BlockSpec nl(int64_t channels, NlVariant variant);
  static BlockSpec snl(int64_t channels);
  static BlockSpec snl_factored(int64_t channels);
  static BlockSpec se(int64_t channels, int64_t ratio = 16);
  static BlockSpec gc(int64_t channels, int64_t ratio = 16);
  static BlockSpec framework(int64_t channels, int64_t ratio, Pooling pooling, Fusion fusion);

  // Bottleneck width C/r.
  int64_t hidden() const { return channels / ratio; }
  int64_t nl_inner() const { return nl_inner_channels > 0 ? nl_inner_channels : channels / 2; }

  // Throws SpecError on an incomplete or inconsistent spec.
  void validate() const;
  // Short human-readable tag, e.g. "gc(r=16)" or "nl/e_gaussian".
  std::string tag() const;

  bool operator==(const BlockSpec&) const = default;
};

// Shape of the context-modeling pipeline for every kind except NL:
// pooling -> transform -> fusion.
enum class TransformKind {
  linear,              // W_v                       (SNL)
  bottleneck_ln,       // W_v2 ReLU(LN(W_v1 .))     (GC, add fusion)
  bottleneck_sigmoid,  // sigmoid(W_v2 ReLU(W_v1 .)) (SE, scale fusion)
};

struct ContextPipeline {
  Pooling pooling;
  TransformKind transform;
  Fusion fusion;
};

// Throws SpecError for NL, which has no shared-context pipeline.
ContextPipeline pipeline_for(const BlockSpec& spec);

// Weights for one block. Which members are present depends on the kind:
//   NL:             w_v, w_z, plus w_q/w_k (e_gaussian, dot) or w_q: 2C->1 (concat)
//   SNL:            w_k (C->1), w_v (C->C)
//   SE:             w_v1 (C->C/r), w_v2 (C/r->C)   i.e. W_1, W_2
//   GC / framework: w_k (att pooling only), w_v1, w_v2, ln (add fusion only)
template <typename T>
struct BlockParams {
  std::optional<LinearWeight<T>> w_q;
  std::optional<LinearWeight<T>> w_k;
  std::optional<LinearWeight<T>> w_v;
  std::optional<LinearWeight<T>> w_z;
  std::optional<LinearWeight<T>> w_v1;
  std::optional<LinearWeight<T>> w_v2;
  std::optional<LayerNormParams<T>> ln;

  // Visits every present tensor in a fixed order.
  template <typename F>
  void for_each_tensor(F&& f) {
    auto weight = [&](const char* name, std::optional<LinearWeight<T>>& w) {
      if (w) f(name, w->data);
    };
    weight("w_q", w_q);
    weight("w_k", w_k);
    weight("w_v", w_v);
    weight("w_z", w_z);
    weight("w_v1", w_v1);
    weight("w_v2", w_v2);
    if (ln) {
      f("ln.gamma", ln->gamma);
      f("ln.beta", ln->beta);
    }
  }

  template <typename F>
  void for_each_tensor(F&& f) const {
    const_cast<BlockParams*>(this)->for_each_tensor(
        [&](const char* name, std::vector<T>& values) { f(name, std::as_const(values)); });
  }

  size_t parameter_count() const {
    size_t n = 0;
    for_each_tensor([&](const char*, const std::vector<T>& v) { n += v.size(); });
    return n;
  }

  template <typename U>
  BlockParams<U> cast() const {
    BlockParams<U> out;
    auto weight = [](const std::optional<LinearWeight<T>>& w) -> std::optional<LinearWeight<U>> {
      if (!w) return std::nullopt;
      return w->template cast<U>();
    };
    out.w_q = weight(w_q);
    out.w_k = weight(w_k);
    out.w_v = weight(w_v);
    out.w_z = weight(w_z);
    out.w_v1 = weight(w_v1);
    out.w_v2 = weight(w_v2);
    if (ln) out.ln = ln->template cast<U>();
    return out;
  }

  bool operator==(const BlockParams&) const = default;
};

enum class InitScheme {
  identity,  // final projection zeroed, the rest uniform in +-1/sqrt(fan_in)
  random,    // every weight uniform, LN affine perturbed around (1, 0)
  zero,      // every weight zero, LN at (1, 0)
};

// Deterministic in (spec, seed, scheme) across platforms.
BlockParams<double> init_params(const BlockSpec& spec, uint64_t seed,
                                InitScheme scheme = InitScheme::identity);

enum class AttentionKind { pairwise, global };

template <typename T>
struct AttentionMap {
  AttentionKind kind = AttentionKind::global;
  int64_t rows = 0;  // N_p for pairwise, 1 for global
  int64_t cols = 0;  // N_p
  std::vector<T> weights;
  // True when every row is a probability vector (softmax-based ω or α).
  bool normalized = false;

  std::span<const T> row(int64_t i) const {
    return std::span<const T>(weights).subspan(static_cast<size_t>(i * cols),
                                               static_cast<size_t>(cols));
  }
};

template <typename T>
struct BlockOutput {
  FeatureMap<T> z;
  std::optional<AttentionMap<T>> attention;
  // Pooled global context (length C) where the block defines one.
  std::optional<std::vector<T>> context;
  // The length-C term broadcast to every position by fusion: the added
  // vector for add fusion, the gate for scale fusion. Absent for NL.
  std::optional<std::vector<T>> fused;
};

}  // namespace gcnet
