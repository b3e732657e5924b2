#include "gcnet/blocks.hpp"

#include <cmath>
#include <random>

namespace gcnet {

namespace {

template <typename Enum, size_t N>
Enum parse_enum(std::string_view text, const std::pair<std::string_view, Enum> (&table)[N],
                const char* what) {
  for (const auto& [name, value] : table) {
    if (name == text) return value;
  }
  throw SpecError(std::string("unknown ") + what + " '" + std::string(text) + "'");
}

constexpr std::pair<std::string_view, BlockKind> kKinds[] = {
    {"nl", BlockKind::nl}, {"snl", BlockKind::snl}, {"snl_factored", BlockKind::snl_factored},
    {"se", BlockKind::se}, {"gc", BlockKind::gc},   {"framework", BlockKind::framework},
};
constexpr std::pair<std::string_view, NlVariant> kVariants[] = {
    {"gaussian", NlVariant::gaussian},
    {"e_gaussian", NlVariant::embedded_gaussian},
    {"embedded_gaussian", NlVariant::embedded_gaussian},
    {"dot", NlVariant::dot},
    {"concat", NlVariant::concat},
};
constexpr std::pair<std::string_view, Pooling> kPoolings[] = {{"avg", Pooling::avg},
                                                               {"att", Pooling::att}};
constexpr std::pair<std::string_view, Fusion> kFusions[] = {{"add", Fusion::add},
                                                             {"scale", Fusion::scale}};
constexpr std::pair<std::string_view, Position> kPositions[] = {
    {"after_add", Position::after_add}, {"after_1x1", Position::after_1x1}};

// 64-bit Mersenne Twister with an explicit 53-bit mapping to [0, 1),
// so draws do not depend on the standard library's distribution code.
class UniformSource {
 public:
  explicit UniformSource(uint64_t seed) : engine_(seed ^ 0x9E3779B97F4A7C15ULL) {}

  double next(double lo, double hi) {
    const double unit = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * unit;
  }

 private:
  std::mt19937_64 engine_;
};

LinearWeight<double> draw_weight(UniformSource& rng, int64_t out, int64_t in, bool zero) {
  std::vector<double> values(static_cast<size_t>(out * in), 0.0);
  if (!zero) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : values) v = rng.next(-bound, bound);
  }
  return LinearWeight<double>(out, in, std::move(values));
}

}  // namespace

std::string to_string(BlockKind kind) {
  for (const auto& [name, value] : kKinds) {
    if (value == kind) return std::string(name);
  }
  return "?";
}

std::string to_string(NlVariant variant) {
  switch (variant) {
    case NlVariant::gaussian: return "gaussian";
    case NlVariant::embedded_gaussian: return "e_gaussian";
    case NlVariant::dot: return "dot";
    case NlVariant::concat: return "concat";
  }
  return "?";
}

std::string to_string(Pooling pooling) { return pooling == Pooling::avg ? "avg" : "att"; }
std::string to_string(Fusion fusion) { return fusion == Fusion::add ? "add" : "scale"; }
std::string to_string(Position position) {
  return position == Position::after_add ? "after_add" : "after_1x1";
}

BlockKind parse_block_kind(std::string_view text) { return parse_enum(text, kKinds, "block kind"); }
NlVariant parse_nl_variant(std::string_view text) {
  return parse_enum(text, kVariants, "NL variant");
}
Pooling parse_pooling(std::string_view text) { return parse_enum(text, kPoolings, "pooling"); }
Fusion parse_fusion(std::string_view text) { return parse_enum(text, kFusions, "fusion"); }
Position parse_position(std::string_view text) {
  return parse_enum(text, kPositions, "position");
}

BlockSpec BlockSpec::nl(int64_t channels, NlVariant variant) {
  BlockSpec s;
  s.kind = BlockKind::nl;
  s.channels = channels;
  s.variant = variant;
  return s;
}

BlockSpec BlockSpec::snl(int64_t channels) {
  BlockSpec s;
  s.kind = BlockKind::snl;
  s.channels = channels;
  return s;
}

BlockSpec BlockSpec::snl_factored(int64_t channels) {
  BlockSpec s = snl(channels);
  s.kind = BlockKind::snl_factored;
  return s;
}

BlockSpec BlockSpec::se(int64_t channels, int64_t ratio) {
  BlockSpec s;
  s.kind = BlockKind::se;
  s.channels = channels;
  s.ratio = ratio;
  s.position = Position::after_1x1;
  return s;
}

BlockSpec BlockSpec::gc(int64_t channels, int64_t ratio) {
  BlockSpec s;
  s.kind = BlockKind::gc;
  s.channels = channels;
  s.ratio = ratio;
  return s;
}

BlockSpec BlockSpec::framework(int64_t channels, int64_t ratio, Pooling pooling, Fusion fusion) {
  BlockSpec s;
  s.kind = BlockKind::framework;
  s.channels = channels;
  s.ratio = ratio;
  s.pooling = pooling;
  s.fusion = fusion;
  return s;
}

void BlockSpec::validate() const {
  if (channels <= 0) throw SpecError("block spec: channels must be positive");
  switch (kind) {
    case BlockKind::nl:
      if (!variant) throw SpecError("block spec: NL requires a variant");
      if (nl_inner() < 1) throw SpecError("block spec: NL inner width must be >= 1");
      return;
    case BlockKind::snl:
    case BlockKind::snl_factored:
      return;
    case BlockKind::se:
    case BlockKind::gc:
    case BlockKind::framework:
      if (ratio <= 0) throw SpecError("block spec: ratio must be positive");
      if (hidden() < 1) {
        throw SpecError("block spec: C/r must be >= 1 (C=" + std::to_string(channels) +
                        ", r=" + std::to_string(ratio) + ")");
      }
      break;
  }
  if (kind == BlockKind::framework && (!pooling || !fusion)) {
    throw SpecError("block spec: framework requires pooling and fusion");
  }
  if (kind == BlockKind::se && ((pooling && *pooling != Pooling::avg) ||
                                (fusion && *fusion != Fusion::scale))) {
    throw SpecError("block spec: SE is fixed to avg pooling with scale fusion");
  }
  if (kind == BlockKind::gc && ((pooling && *pooling != Pooling::att) ||
                                (fusion && *fusion != Fusion::add))) {
    throw SpecError("block spec: GC is fixed to att pooling with add fusion");
  }
}

std::string BlockSpec::tag() const {
  switch (kind) {
    case BlockKind::nl:
      return "nl/" + (variant ? to_string(*variant) : std::string("?"));
    case BlockKind::snl:
    case BlockKind::snl_factored:
      return to_string(kind);
    case BlockKind::se:
    case BlockKind::gc:
      return to_string(kind) + "(r=" + std::to_string(ratio) + ")";
    case BlockKind::framework:
      return "framework/" + (pooling ? to_string(*pooling) : std::string("?")) + "+" +
             (fusion ? to_string(*fusion) : std::string("?")) + "(r=" + std::to_string(ratio) + ")";
  }
  return "?";
}

ContextPipeline pipeline_for(const BlockSpec& spec) {
  switch (spec.kind) {
    case BlockKind::nl:
      throw SpecError("NL blocks compute per-query context; no shared pipeline");
    case BlockKind::snl:
    case BlockKind::snl_factored:
      return {Pooling::att, TransformKind::linear, Fusion::add};
    case BlockKind::se:
      return {Pooling::avg, TransformKind::bottleneck_sigmoid, Fusion::scale};
    case BlockKind::gc:
      return {Pooling::att, TransformKind::bottleneck_ln, Fusion::add};
    case BlockKind::framework: {
      if (!spec.pooling || !spec.fusion) {
        throw SpecError("block spec: framework requires pooling and fusion");
      }
      const auto transform = *spec.fusion == Fusion::add ? TransformKind::bottleneck_ln
                                                         : TransformKind::bottleneck_sigmoid;
      return {*spec.pooling, transform, *spec.fusion};
    }
  }
  throw SpecError("unknown block kind");
}

BlockParams<double> init_params(const BlockSpec& spec, uint64_t seed, InitScheme scheme) {
  spec.validate();
  UniformSource rng(seed);
  const int64_t c = spec.channels;
  const bool zero_all = scheme == InitScheme::zero;
  // Add-fusion blocks start as an exact identity under the identity scheme.
  const bool zero_last = zero_all || scheme == InitScheme::identity;
  BlockParams<double> p;

  if (spec.kind == BlockKind::nl) {
    const int64_t inner = spec.nl_inner();
    switch (*spec.variant) {
      case NlVariant::gaussian:
        break;
      case NlVariant::embedded_gaussian:
      case NlVariant::dot:
        p.w_q = draw_weight(rng, inner, c, zero_all);
        p.w_k = draw_weight(rng, inner, c, zero_all);
        break;
      case NlVariant::concat:
        p.w_q = draw_weight(rng, 1, 2 * c, zero_all);
        break;
    }
    p.w_v = draw_weight(rng, inner, c, zero_all);
    p.w_z = draw_weight(rng, c, inner, zero_last);
    return p;
  }

  const ContextPipeline pipe = pipeline_for(spec);
  if (pipe.pooling == Pooling::att) p.w_k = draw_weight(rng, 1, c, zero_all);
  if (pipe.transform == TransformKind::linear) {
    p.w_v = draw_weight(rng, c, c, zero_last);
    return p;
  }
  const int64_t hidden = spec.hidden();
  p.w_v1 = draw_weight(rng, hidden, c, zero_all);
  p.w_v2 = draw_weight(rng, c, hidden, pipe.fusion == Fusion::add ? zero_last : zero_all);
  if (pipe.transform == TransformKind::bottleneck_ln) {
    p.ln = LayerNormParams<double>::unit(hidden);
    if (scheme == InitScheme::random) {
      for (double& g : p.ln->gamma) g = 1.0 + rng.next(-0.5, 0.5);
      for (double& b : p.ln->beta) b = rng.next(-0.5, 0.5);
    }
  }
  return p;
}

}  // namespace gcnet
