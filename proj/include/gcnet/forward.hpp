#pragma once

// Forward passes for the NL family, the shared-context blocks, and the
// generic pooling -> transform -> fusion framework. Every block is built
// from the tensor.hpp kernels, so two blocks that perform the same sequence
// of kernel calls produce bit-identical outputs.

#include <string>
#include <vector>

#include "gcnet/blocks.hpp"
#include "gcnet/tensor.hpp"

namespace gcnet {

namespace detail {

template <typename T>
const LinearWeight<T>& require_weight(const std::optional<LinearWeight<T>>& w, const char* name,
                                      int64_t out, int64_t in) {
  if (!w) throw DimensionError(std::string("block params: missing ") + name);
  if (w->out_channels != out || w->in_channels != in) {
    throw DimensionError(std::string("block params: ") + name + " is " +
                         std::to_string(w->out_channels) + "x" + std::to_string(w->in_channels) +
                         ", expected " + std::to_string(out) + "x" + std::to_string(in));
  }
  return *w;
}

template <typename T>
std::vector<T> position_logits(const LinearWeight<T>& w_k, const FeatureMap<T>& x) {
  const FeatureMap<T> logits = linear_map(w_k, x);
  return std::vector<T>(logits.data().begin(), logits.data().end());
}

template <typename T>
void require_channels(const FeatureMap<T>& x, int64_t channels) {
  if (x.channels() != channels) {
    throw DimensionError("block input has " + std::to_string(x.channels()) +
                         " channels, block expects " + std::to_string(channels));
  }
}

}  // namespace detail

template <typename T>
void validate_params(const BlockSpec& spec, const BlockParams<T>& p) {
  spec.validate();
  const int64_t c = spec.channels;
  if (spec.kind == BlockKind::nl) {
    const int64_t inner = spec.nl_inner();
    switch (*spec.variant) {
      case NlVariant::gaussian:
        break;
      case NlVariant::embedded_gaussian:
      case NlVariant::dot:
        detail::require_weight(p.w_q, "w_q", inner, c);
        detail::require_weight(p.w_k, "w_k", inner, c);
        break;
      case NlVariant::concat:
        detail::require_weight(p.w_q, "w_q", 1, 2 * c);
        break;
    }
    detail::require_weight(p.w_v, "w_v", inner, c);
    detail::require_weight(p.w_z, "w_z", c, inner);
    return;
  }
  const ContextPipeline pipe = pipeline_for(spec);
  if (pipe.pooling == Pooling::att) detail::require_weight(p.w_k, "w_k", 1, c);
  if (pipe.transform == TransformKind::linear) {
    detail::require_weight(p.w_v, "w_v", c, c);
    return;
  }
  detail::require_weight(p.w_v1, "w_v1", spec.hidden(), c);
  detail::require_weight(p.w_v2, "w_v2", c, spec.hidden());
  if (pipe.transform == TransformKind::bottleneck_ln) {
    if (!p.ln) throw DimensionError("block params: missing ln");
    if (p.ln->dim() != spec.hidden()) throw DimensionError("block params: ln dim != C/r");
  }
}

// z_i = x_i + W_z sum_j w_ij (W_v x_j), with the pairwise weights returned.
template <typename T>
BlockOutput<T> nl_forward(const FeatureMap<T>& x, const BlockParams<T>& p, NlVariant variant) {
  if (!p.w_v || !p.w_z) throw DimensionError("nl_forward: missing w_v or w_z");
  BlockSpec spec = BlockSpec::nl(x.channels(), variant);
  spec.nl_inner_channels = p.w_v->out_channels;
  validate_params(spec, p);

  const int64_t np = x.positions();
  const int64_t inner = spec.nl_inner();
  const FeatureMap<T> values = linear_map(*p.w_v, x);

  AttentionMap<T> att;
  att.kind = AttentionKind::pairwise;
  att.rows = np;
  att.cols = np;
  att.weights.resize(static_cast<size_t>(np * np));
  att.normalized = variant == NlVariant::gaussian || variant == NlVariant::embedded_gaussian;

  std::optional<FeatureMap<T>> queries, keys;
  if (variant == NlVariant::embedded_gaussian || variant == NlVariant::dot) {
    queries = linear_map(*p.w_q, x);
    keys = linear_map(*p.w_k, x);
  }
  const T inv_np = T(1) / static_cast<T>(np);
  const int64_t c = x.channels();

  std::vector<T> row(static_cast<size_t>(np));
  for (int64_t i = 0; i < np; ++i) {
    for (int64_t j = 0; j < np; ++j) {
      T s = T(0);
      switch (variant) {
        case NlVariant::gaussian:
          for (int64_t k = 0; k < c; ++k) s += x.at(k, i) * x.at(k, j);
          break;
        case NlVariant::embedded_gaussian:
        case NlVariant::dot:
          for (int64_t k = 0; k < inner; ++k) s += queries->at(k, i) * keys->at(k, j);
          break;
        case NlVariant::concat: {
          // W_q [x_i; x_j]
          for (int64_t k = 0; k < c; ++k) s += p.w_q->at(0, k) * x.at(k, i);
          for (int64_t k = 0; k < c; ++k) s += p.w_q->at(0, c + k) * x.at(k, j);
          s = s > T(0) ? s : T(0);
          break;
        }
      }
      row[static_cast<size_t>(j)] = s;
    }
    if (att.normalized) {
      row = softmax_positions<T>(row);
    } else {
      for (T& w : row) w *= inv_np;
    }
    std::copy(row.begin(), row.end(), att.weights.begin() + i * np);
  }
  detail::require_finite<T>(att.weights, "nl_forward attention");

  // y_i = sum_j w_ij v_j, then z_i = x_i + W_z y_i.
  std::vector<T> aggregated(static_cast<size_t>(inner * np));
  for (int64_t k = 0; k < inner; ++k) {
    for (int64_t i = 0; i < np; ++i) {
      T acc = T(0);
      for (int64_t j = 0; j < np; ++j) acc += att.weights[static_cast<size_t>(i * np + j)] * values.at(k, j);
      aggregated[static_cast<size_t>(k * np + i)] = acc;
    }
  }
  const FeatureMap<T> projected =
      linear_map(*p.w_z, FeatureMap<T>(inner, x.spatial(), std::move(aggregated)));
  std::vector<T> z(x.data().begin(), x.data().end());
  for (size_t k = 0; k < z.size(); ++k) z[k] += projected.data()[k];
  return BlockOutput<T>{FeatureMap<T>(c, x.spatial(), std::move(z)), std::move(att), std::nullopt, std::nullopt};
}

template <typename T>
AttentionMap<T> global_attention(std::vector<T> alpha) {
  AttentionMap<T> att;
  att.kind = AttentionKind::global;
  att.rows = 1;
  att.cols = static_cast<int64_t>(alpha.size());
  att.weights = std::move(alpha);
  att.normalized = true;
  return att;
}

// Unfactored simplified NL: W_v is applied at every position before pooling.
// The returned context is the added term sum_j a_j W_v x_j.
template <typename T>
BlockOutput<T> snl_forward(const FeatureMap<T>& x, const BlockParams<T>& p) {
  validate_params(BlockSpec::snl(x.channels()), p);
  std::vector<T> alpha = softmax_positions<T>(detail::position_logits(*p.w_k, x));
  const FeatureMap<T> values = linear_map(*p.w_v, x);
  std::vector<T> context = global_attention_pool<T>(values, alpha);
  FeatureMap<T> z = fuse_add<T>(x, context);
  std::vector<T> fused = context;
  return {std::move(z), global_attention(std::move(alpha)), std::move(context), std::move(fused)};
}

// Factored simplified NL: pool first, then a single C x C product.
template <typename T>
BlockOutput<T> snl_factored_forward(const FeatureMap<T>& x, const BlockParams<T>& p) {
  validate_params(BlockSpec::snl_factored(x.channels()), p);
  std::vector<T> alpha = softmax_positions<T>(detail::position_logits(*p.w_k, x));
  std::vector<T> context = global_attention_pool<T>(x, alpha);
  const std::vector<T> transformed = apply<T>(*p.w_v, context);
  FeatureMap<T> z = fuse_add<T>(x, transformed);
  return {std::move(z), global_attention(std::move(alpha)), std::move(context), transformed};
}

// gate = sigmoid(W_2 ReLU(W_1 avg_pool(x))), z = x * gate.
template <typename T>
BlockOutput<T> se_forward(const FeatureMap<T>& x, const BlockParams<T>& p) {
  const auto hidden = p.w_v1 ? p.w_v1->out_channels : 0;
  if (hidden <= 0) throw DimensionError("se_forward: missing w_v1");
  validate_params(BlockSpec::se(x.channels(), x.channels() / hidden), p);
  std::vector<T> context = global_avg_pool<T>(x);
  const std::vector<T> squeezed = relu<T>(apply<T>(*p.w_v1, context));
  const std::vector<T> gate = sigmoid<T>(apply<T>(*p.w_v2, squeezed));
  FeatureMap<T> z = fuse_scale<T>(x, gate);
  return {std::move(z), std::nullopt, std::move(context), gate};
}

// z = x + W_v2 ReLU(LN(W_v1 sum_j a_j x_j)), a = softmax(W_k x).
template <typename T>
BlockOutput<T> gc_forward(const FeatureMap<T>& x, const BlockParams<T>& p) {
  const auto hidden = p.w_v1 ? p.w_v1->out_channels : 0;
  if (hidden <= 0) throw DimensionError("gc_forward: missing w_v1");
  validate_params(BlockSpec::gc(x.channels(), x.channels() / hidden), p);
  std::vector<T> alpha = softmax_positions<T>(detail::position_logits(*p.w_k, x));
  std::vector<T> context = global_attention_pool<T>(x, alpha);
  const std::vector<T> normed = layer_norm<T>(apply<T>(*p.w_v1, context), *p.ln);
  const std::vector<T> delta = apply<T>(*p.w_v2, relu<T>(normed));
  FeatureMap<T> z = fuse_add<T>(x, delta);
  return {std::move(z), global_attention(std::move(alpha)), std::move(context), delta};
}

namespace detail {

// delta(context) for the bottleneck transforms.
template <typename T>
std::vector<T> bottleneck_transform(const BlockParams<T>& p, TransformKind kind,
                                    std::span<const T> context) {
  std::vector<T> h = apply<T>(*p.w_v1, context);
  if (kind == TransformKind::bottleneck_ln) h = layer_norm<T>(h, *p.ln);
  const std::vector<T> out = apply<T>(*p.w_v2, relu<T>(h));
  return kind == TransformKind::bottleneck_sigmoid ? sigmoid<T>(out) : out;
}

}  // namespace detail

// z_i = F(x_i, delta(sum_j a_j x_j)) with pooling and fusion taken from spec.
template <typename T>
BlockOutput<T> framework_forward(const FeatureMap<T>& x, const BlockSpec& spec,
                                 const BlockParams<T>& p) {
  if (spec.kind != BlockKind::framework) throw SpecError("framework_forward: spec kind must be framework");
  detail::require_channels(x, spec.channels);
  validate_params(spec, p);
  const ContextPipeline pipe = pipeline_for(spec);

  std::optional<AttentionMap<T>> att;
  std::vector<T> context;
  if (pipe.pooling == Pooling::att) {
    std::vector<T> alpha = softmax_positions<T>(detail::position_logits(*p.w_k, x));
    context = global_attention_pool<T>(x, alpha);
    att = global_attention(std::move(alpha));
  } else {
    context = global_avg_pool<T>(x);
  }
  const std::vector<T> delta = detail::bottleneck_transform<T>(p, pipe.transform, context);
  FeatureMap<T> z = pipe.fusion == Fusion::add ? fuse_add<T>(x, delta) : fuse_scale<T>(x, delta);
  return {std::move(z), std::move(att), std::move(context), delta};
}

// Dispatches on spec.kind after checking the input width.
template <typename T>
BlockOutput<T> block_forward(const FeatureMap<T>& x, const BlockSpec& spec,
                             const BlockParams<T>& p) {
  detail::require_channels(x, spec.channels);
  validate_params(spec, p);
  switch (spec.kind) {
    case BlockKind::nl: return nl_forward(x, p, *spec.variant);
    case BlockKind::snl: return snl_forward(x, p);
    case BlockKind::snl_factored: return snl_factored_forward(x, p);
    case BlockKind::se: return se_forward(x, p);
    case BlockKind::gc: return gc_forward(x, p);
    case BlockKind::framework: return framework_forward(x, spec, p);
  }
  throw SpecError("unknown block kind");
}

}  // namespace gcnet
