#pragma once

// Reverse mode for the shared-context blocks (SNL, SNL_FACTORED, SE, GC and
// every framework configuration). The loss is L = sum(upstream * z); the
// returned gradients are dL/dx and dL/dtheta for every tensor in the params.

#include <cmath>
#include <vector>

#include "gcnet/blocks.hpp"
#include "gcnet/forward.hpp"
#include "gcnet/tensor.hpp"

namespace gcnet {

template <typename T>
struct BlockGradients {
  FeatureMap<T> grad_x;
  BlockParams<T> grad_params;
};

namespace detail {

// d = outer(left, right) as an out x in weight.
template <typename T>
LinearWeight<T> outer(std::span<const T> left, std::span<const T> right) {
  std::vector<T> values(left.size() * right.size());
  for (size_t o = 0; o < left.size(); ++o) {
    for (size_t i = 0; i < right.size(); ++i) values[o * right.size() + i] = left[o] * right[i];
  }
  return LinearWeight<T>(static_cast<int64_t>(left.size()), static_cast<int64_t>(right.size()),
                         std::move(values));
}

}  // namespace detail

template <typename T>
BlockGradients<T> block_backward(const FeatureMap<T>& x, const BlockSpec& spec,
                                 const BlockParams<T>& p, const FeatureMap<T>& upstream) {
  if (spec.kind == BlockKind::nl) {
    throw SpecError("block_backward: NL blocks have no analytic backward");
  }
  detail::require_channels(x, spec.channels);
  validate_params(spec, p);
  if (upstream.channels() != x.channels() || upstream.positions() != x.positions()) {
    throw DimensionError("block_backward: upstream gradient shape differs from z");
  }
  const ContextPipeline pipe = pipeline_for(spec);
  const int64_t c_dim = x.channels();
  const int64_t np = x.positions();
  const auto idx = [np](int64_t c, int64_t j) { return static_cast<size_t>(c * np + j); };

  // Forward, keeping intermediates.
  std::vector<T> alpha;
  std::vector<T> context;
  if (pipe.pooling == Pooling::att) {
    alpha = softmax_positions<T>(detail::position_logits(*p.w_k, x));
    context = global_attention_pool<T>(x, alpha);
  } else {
    context = global_avg_pool<T>(x);
  }

  std::vector<T> hidden, activated, xhat, delta;
  T inv_std = T(0);
  switch (pipe.transform) {
    case TransformKind::linear:
      delta = apply<T>(*p.w_v, context);
      break;
    case TransformKind::bottleneck_ln: {
      hidden = apply<T>(*p.w_v1, context);
      const T n = static_cast<T>(hidden.size());
      T mean = T(0);
      for (T e : hidden) mean += e;
      mean /= n;
      T var = T(0);
      for (T e : hidden) var += (e - mean) * (e - mean);
      var /= n;
      inv_std = T(1) / std::sqrt(var + p.ln->epsilon);
      xhat.resize(hidden.size());
      for (size_t k = 0; k < hidden.size(); ++k) xhat[k] = (hidden[k] - mean) * inv_std;
      const std::vector<T> normed = layer_norm<T>(hidden, *p.ln);
      activated = relu<T>(normed);
      // Keep the pre-activation for the ReLU mask.
      hidden = normed;
      delta = apply<T>(*p.w_v2, activated);
      break;
    }
    case TransformKind::bottleneck_sigmoid:
      hidden = apply<T>(*p.w_v1, context);
      activated = relu<T>(hidden);
      delta = sigmoid<T>(apply<T>(*p.w_v2, activated));
      break;
  }

  // Fusion.
  std::vector<T> grad_x(x.data().size());
  std::vector<T> grad_delta(static_cast<size_t>(c_dim), T(0));
  for (int64_t c = 0; c < c_dim; ++c) {
    for (int64_t j = 0; j < np; ++j) {
      const T g = upstream.at(c, j);
      if (pipe.fusion == Fusion::add) {
        grad_x[idx(c, j)] = g;
        grad_delta[static_cast<size_t>(c)] += g;
      } else {
        grad_x[idx(c, j)] = g * delta[static_cast<size_t>(c)];
        grad_delta[static_cast<size_t>(c)] += g * x.at(c, j);
      }
    }
  }

  // Transform.
  BlockParams<T> grads;
  std::vector<T> grad_context;
  switch (pipe.transform) {
    case TransformKind::linear:
      grads.w_v = detail::outer<T>(grad_delta, context);
      grad_context = apply_transposed<T>(*p.w_v, grad_delta);
      break;
    case TransformKind::bottleneck_ln: {
      grads.w_v2 = detail::outer<T>(grad_delta, activated);
      const std::vector<T> grad_act = apply_transposed<T>(*p.w_v2, grad_delta);
      const size_t dim = activated.size();
      std::vector<T> grad_normed(dim), grad_gamma(dim), grad_xhat(dim);
      for (size_t k = 0; k < dim; ++k) {
        grad_normed[k] = hidden[k] > T(0) ? grad_act[k] : T(0);
        grad_gamma[k] = grad_normed[k] * xhat[k];
        grad_xhat[k] = grad_normed[k] * p.ln->gamma[k];
      }
      T mean_g = T(0), mean_gx = T(0);
      for (size_t k = 0; k < dim; ++k) {
        mean_g += grad_xhat[k];
        mean_gx += grad_xhat[k] * xhat[k];
      }
      mean_g /= static_cast<T>(dim);
      mean_gx /= static_cast<T>(dim);
      std::vector<T> grad_hidden(dim);
      for (size_t k = 0; k < dim; ++k) {
        grad_hidden[k] = inv_std * (grad_xhat[k] - mean_g - xhat[k] * mean_gx);
      }
      grads.ln = LayerNormParams<T>(std::move(grad_gamma), grad_normed, p.ln->epsilon);
      grads.w_v1 = detail::outer<T>(grad_hidden, context);
      grad_context = apply_transposed<T>(*p.w_v1, grad_hidden);
      break;
    }
    case TransformKind::bottleneck_sigmoid: {
      std::vector<T> grad_pre(delta.size());
      for (size_t k = 0; k < delta.size(); ++k) {
        grad_pre[k] = grad_delta[k] * delta[k] * (T(1) - delta[k]);
      }
      grads.w_v2 = detail::outer<T>(grad_pre, activated);
      std::vector<T> grad_hidden = apply_transposed<T>(*p.w_v2, grad_pre);
      for (size_t k = 0; k < grad_hidden.size(); ++k) {
        if (!(hidden[k] > T(0))) grad_hidden[k] = T(0);
      }
      grads.w_v1 = detail::outer<T>(grad_hidden, context);
      grad_context = apply_transposed<T>(*p.w_v1, grad_hidden);
      break;
    }
  }

  // Pooling.
  if (pipe.pooling == Pooling::avg) {
    const T weight = T(1) / static_cast<T>(np);
    for (int64_t c = 0; c < c_dim; ++c) {
      for (int64_t j = 0; j < np; ++j) grad_x[idx(c, j)] += weight * grad_context[static_cast<size_t>(c)];
    }
  } else {
    // Through the weighted sum, then through the softmax and W_k.
    std::vector<T> grad_alpha(static_cast<size_t>(np), T(0));
    for (int64_t c = 0; c < c_dim; ++c) {
      for (int64_t j = 0; j < np; ++j) {
        grad_x[idx(c, j)] += alpha[static_cast<size_t>(j)] * grad_context[static_cast<size_t>(c)];
        grad_alpha[static_cast<size_t>(j)] += grad_context[static_cast<size_t>(c)] * x.at(c, j);
      }
    }
    T expected = T(0);
    for (int64_t j = 0; j < np; ++j) expected += alpha[static_cast<size_t>(j)] * grad_alpha[static_cast<size_t>(j)];
    std::vector<T> grad_logit(static_cast<size_t>(np));
    for (int64_t j = 0; j < np; ++j) {
      grad_logit[static_cast<size_t>(j)] =
          alpha[static_cast<size_t>(j)] * (grad_alpha[static_cast<size_t>(j)] - expected);
    }
    std::vector<T> grad_wk(static_cast<size_t>(c_dim), T(0));
    for (int64_t c = 0; c < c_dim; ++c) {
      const T wk = p.w_k->at(0, c);
      for (int64_t j = 0; j < np; ++j) {
        grad_wk[static_cast<size_t>(c)] += grad_logit[static_cast<size_t>(j)] * x.at(c, j);
        grad_x[idx(c, j)] += grad_logit[static_cast<size_t>(j)] * wk;
      }
    }
    grads.w_k = LinearWeight<T>(1, c_dim, std::move(grad_wk));
  }

  return {FeatureMap<T>(c_dim, x.spatial(), std::move(grad_x)), std::move(grads)};
}

}  // namespace gcnet
