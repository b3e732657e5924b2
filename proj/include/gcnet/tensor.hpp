#pragma once

// Dense channel-major feature maps and the position-wise kernels every block
// is composed from. All reductions run serially, left to right, so results
// are reproducible bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gcnet/error.hpp"

namespace gcnet {

struct Spatial {
  int64_t height = 1;
  int64_t width = 1;
  std::optional<int64_t> frames;  // video only

  int64_t positions() const { return height * width * frames.value_or(1); }
  bool operator==(const Spatial&) const = default;

  // A flat H=1 x W=n layout, for callers that only care about N_p.
  static Spatial flat(int64_t positions) { return Spatial{1, positions, std::nullopt}; }
};

namespace detail {

template <typename T>
bool all_finite(std::span<const T> values) {
  return std::all_of(values.begin(), values.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
void require_finite(std::span<const T> values, const char* what) {
  if (!all_finite(values)) {
    throw NumericError(std::string(what) + ": non-finite value");
  }
}

}  // namespace detail

// C x N_p activations; data[c * N_p + j] is channel c at position j.
template <typename T>
class FeatureMap {
 public:
  FeatureMap(int64_t channels, Spatial spatial, std::vector<T> data)
      : channels_(channels), spatial_(spatial), data_(std::move(data)) {
    if (channels_ <= 0 || spatial_.height <= 0 || spatial_.width <= 0 ||
        (spatial_.frames && *spatial_.frames <= 0)) {
      throw DimensionError("FeatureMap: dimensions must be positive");
    }
    if (static_cast<int64_t>(data_.size()) != channels_ * positions()) {
      throw DimensionError("FeatureMap: data length " + std::to_string(data_.size()) +
                           " != C*N_p = " + std::to_string(channels_ * positions()));
    }
    detail::require_finite<T>(data_, "FeatureMap");
  }

  static FeatureMap zeros(int64_t channels, Spatial spatial) {
    return FeatureMap(channels, spatial,
                      std::vector<T>(static_cast<size_t>(channels * spatial.positions()), T(0)));
  }

  int64_t channels() const { return channels_; }
  int64_t positions() const { return spatial_.positions(); }
  const Spatial& spatial() const { return spatial_; }

  T at(int64_t c, int64_t j) const { return data_[static_cast<size_t>(c * positions() + j)]; }
  std::span<const T> data() const { return data_; }
  std::span<const T> channel(int64_t c) const {
    return std::span<const T>(data_).subspan(static_cast<size_t>(c * positions()),
                                             static_cast<size_t>(positions()));
  }

  std::vector<T> column(int64_t j) const {
    std::vector<T> out(static_cast<size_t>(channels_));
    for (int64_t c = 0; c < channels_; ++c) out[static_cast<size_t>(c)] = at(c, j);
    return out;
  }

  template <typename U>
  FeatureMap<U> cast() const {
    return FeatureMap<U>(channels_, spatial_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const FeatureMap&) const = default;

 private:
  int64_t channels_;
  Spatial spatial_;
  std::vector<T> data_;
};

// Bias-free 1x1 convolution weight, row-major out x in.
template <typename T>
struct LinearWeight {
  int64_t out_channels = 0;
  int64_t in_channels = 0;
  std::vector<T> data;

  LinearWeight() = default;
  LinearWeight(int64_t out, int64_t in, std::vector<T> values)
      : out_channels(out), in_channels(in), data(std::move(values)) {
    if (out <= 0 || in <= 0) throw DimensionError("LinearWeight: dimensions must be positive");
    if (static_cast<int64_t>(data.size()) != out * in) {
      throw DimensionError("LinearWeight: data length != out*in");
    }
    detail::require_finite<T>(data, "LinearWeight");
  }

  static LinearWeight zeros(int64_t out, int64_t in) {
    return LinearWeight(out, in, std::vector<T>(static_cast<size_t>(out * in), T(0)));
  }
  static LinearWeight identity(int64_t n) {
    auto w = zeros(n, n);
    for (int64_t i = 0; i < n; ++i) w.data[static_cast<size_t>(i * n + i)] = T(1);
    return w;
  }

  T at(int64_t o, int64_t i) const { return data[static_cast<size_t>(o * in_channels + i)]; }

  template <typename U>
  LinearWeight<U> cast() const {
    return LinearWeight<U>(out_channels, in_channels, std::vector<U>(data.begin(), data.end()));
  }

  bool operator==(const LinearWeight&) const = default;
};

inline constexpr double kDefaultLayerNormEpsilon = 1e-5;

template <typename T>
struct LayerNormParams {
  std::vector<T> gamma;
  std::vector<T> beta;
  T epsilon = T(kDefaultLayerNormEpsilon);

  LayerNormParams() = default;
  LayerNormParams(std::vector<T> g, std::vector<T> b, T eps)
      : gamma(std::move(g)), beta(std::move(b)), epsilon(eps) {
    if (gamma.empty() || gamma.size() != beta.size()) {
      throw DimensionError("LayerNormParams: |gamma| must equal |beta| and be nonzero");
    }
    if (!(epsilon > T(0))) throw InvariantError("LayerNormParams: epsilon must be positive");
  }

  static LayerNormParams unit(int64_t dim, T eps = T(kDefaultLayerNormEpsilon)) {
    return LayerNormParams(std::vector<T>(static_cast<size_t>(dim), T(1)),
                           std::vector<T>(static_cast<size_t>(dim), T(0)), eps);
  }

  int64_t dim() const { return static_cast<int64_t>(gamma.size()); }

  template <typename U>
  LayerNormParams<U> cast() const {
    return LayerNormParams<U>(std::vector<U>(gamma.begin(), gamma.end()),
                              std::vector<U>(beta.begin(), beta.end()), static_cast<U>(epsilon));
  }

  bool operator==(const LayerNormParams&) const = default;
};

// out[:, j] = w * x[:, j]
template <typename T>
FeatureMap<T> linear_map(const LinearWeight<T>& w, const FeatureMap<T>& x) {
  if (w.in_channels != x.channels()) {
    throw DimensionError("linear_map: weight expects " + std::to_string(w.in_channels) +
                         " channels, got " + std::to_string(x.channels()));
  }
  const int64_t np = x.positions();
  std::vector<T> out(static_cast<size_t>(w.out_channels * np));
  for (int64_t o = 0; o < w.out_channels; ++o) {
    for (int64_t j = 0; j < np; ++j) {
      T acc = T(0);
      for (int64_t i = 0; i < w.in_channels; ++i) acc += w.at(o, i) * x.at(i, j);
      out[static_cast<size_t>(o * np + j)] = acc;
    }
  }
  return FeatureMap<T>(w.out_channels, x.spatial(), std::move(out));
}

// Matrix-vector product; the single-position form of linear_map.
template <typename T>
std::vector<T> apply(const LinearWeight<T>& w, std::span<const T> v) {
  if (static_cast<int64_t>(v.size()) != w.in_channels) {
    throw DimensionError("apply: vector length does not match weight input width");
  }
  std::vector<T> out(static_cast<size_t>(w.out_channels));
  for (int64_t o = 0; o < w.out_channels; ++o) {
    T acc = T(0);
    for (int64_t i = 0; i < w.in_channels; ++i) acc += w.at(o, i) * v[static_cast<size_t>(i)];
    out[static_cast<size_t>(o)] = acc;
  }
  detail::require_finite<T>(out, "apply");
  return out;
}

// w^T v, used by the backward passes.
template <typename T>
std::vector<T> apply_transposed(const LinearWeight<T>& w, std::span<const T> v) {
  if (static_cast<int64_t>(v.size()) != w.out_channels) {
    throw DimensionError("apply_transposed: vector length does not match weight output width");
  }
  std::vector<T> out(static_cast<size_t>(w.in_channels), T(0));
  for (int64_t o = 0; o < w.out_channels; ++o) {
    for (int64_t i = 0; i < w.in_channels; ++i) {
      out[static_cast<size_t>(i)] += w.at(o, i) * v[static_cast<size_t>(o)];
    }
  }
  return out;
}

template <typename T>
std::vector<T> softmax_positions(std::span<const T> logits) {
  if (logits.empty()) throw DimensionError("softmax_positions: empty input");
  detail::require_finite(logits, "softmax_positions");
  const T peak = *std::max_element(logits.begin(), logits.end());
  std::vector<T> out(logits.size());
  T total = T(0);
  for (size_t j = 0; j < logits.size(); ++j) {
    out[j] = std::exp(logits[j] - peak);
    total += out[j];
  }
  for (T& v : out) v /= total;
  return out;
}

// Population-variance layer norm over a single vector.
template <typename T>
std::vector<T> layer_norm(std::span<const T> v, const LayerNormParams<T>& p) {
  if (static_cast<int64_t>(v.size()) != p.dim()) {
    throw DimensionError("layer_norm: input length " + std::to_string(v.size()) +
                         " != dim " + std::to_string(p.dim()));
  }
  const T n = static_cast<T>(v.size());
  T mean = T(0);
  for (T e : v) mean += e;
  mean /= n;
  T var = T(0);
  for (T e : v) var += (e - mean) * (e - mean);
  var /= n;
  const T inv_std = T(1) / std::sqrt(var + p.epsilon);
  std::vector<T> out(v.size());
  for (size_t k = 0; k < v.size(); ++k) {
    out[k] = p.gamma[k] * ((v[k] - mean) * inv_std) + p.beta[k];
  }
  detail::require_finite<T>(out, "layer_norm");
  return out;
}

// out_c = sum_j (1/N_p) * x[c, j]. Written as a weighted sum so it matches
// global_attention_pool with uniform weights exactly.
template <typename T>
std::vector<T> global_avg_pool(const FeatureMap<T>& x) {
  const T weight = T(1) / static_cast<T>(x.positions());
  std::vector<T> out(static_cast<size_t>(x.channels()));
  for (int64_t c = 0; c < x.channels(); ++c) {
    T acc = T(0);
    for (int64_t j = 0; j < x.positions(); ++j) acc += weight * x.at(c, j);
    out[static_cast<size_t>(c)] = acc;
  }
  return out;
}

// Sum tolerance for probability vectors; widened by N_p ulps so single
// precision softmax outputs over many positions are still accepted.
template <typename T>
double probability_tolerance(size_t n) {
  return 1e-6 + static_cast<double>(n) * static_cast<double>(std::numeric_limits<T>::epsilon());
}

template <typename T>
std::vector<T> global_attention_pool(const FeatureMap<T>& x, std::span<const T> alpha) {
  if (static_cast<int64_t>(alpha.size()) != x.positions()) {
    throw DimensionError("global_attention_pool: |alpha| != N_p");
  }
  long double total = 0;
  for (T a : alpha) {
    if (!(a >= T(0))) throw InvariantError("global_attention_pool: negative attention weight");
    total += a;
  }
  if (std::abs(static_cast<double>(total - 1.0L)) > probability_tolerance<T>(alpha.size())) {
    throw InvariantError("global_attention_pool: attention weights do not sum to 1");
  }
  std::vector<T> out(static_cast<size_t>(x.channels()));
  for (int64_t c = 0; c < x.channels(); ++c) {
    T acc = T(0);
    for (int64_t j = 0; j < x.positions(); ++j) acc += alpha[static_cast<size_t>(j)] * x.at(c, j);
    out[static_cast<size_t>(c)] = acc;
  }
  return out;
}

template <typename T>
FeatureMap<T> fuse_add(const FeatureMap<T>& x, std::span<const T> context) {
  if (static_cast<int64_t>(context.size()) != x.channels()) {
    throw DimensionError("fuse_add: |context| != C");
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  const int64_t np = x.positions();
  for (int64_t c = 0; c < x.channels(); ++c) {
    for (int64_t j = 0; j < np; ++j) out[static_cast<size_t>(c * np + j)] += context[static_cast<size_t>(c)];
  }
  return FeatureMap<T>(x.channels(), x.spatial(), std::move(out));
}

template <typename T>
FeatureMap<T> fuse_scale(const FeatureMap<T>& x, std::span<const T> gate) {
  if (static_cast<int64_t>(gate.size()) != x.channels()) {
    throw DimensionError("fuse_scale: |gate| != C");
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  const int64_t np = x.positions();
  for (int64_t c = 0; c < x.channels(); ++c) {
    for (int64_t j = 0; j < np; ++j) out[static_cast<size_t>(c * np + j)] *= gate[static_cast<size_t>(c)];
  }
  return FeatureMap<T>(x.channels(), x.spatial(), std::move(out));
}

template <typename T>
std::vector<T> relu(std::span<const T> v) {
  std::vector<T> out(v.size());
  for (size_t k = 0; k < v.size(); ++k) out[k] = v[k] > T(0) ? v[k] : T(0);
  return out;
}

template <typename T>
std::vector<T> sigmoid(std::span<const T> v) {
  std::vector<T> out(v.size());
  for (size_t k = 0; k < v.size(); ++k) out[k] = T(1) / (T(1) + std::exp(-v[k]));
  return out;
}

// Reorders positions: out[:, j] = x[:, perm[j]].
template <typename T>
FeatureMap<T> permute_positions(const FeatureMap<T>& x, std::span<const int64_t> perm) {
  if (static_cast<int64_t>(perm.size()) != x.positions()) {
    throw DimensionError("permute_positions: permutation length != N_p");
  }
  const int64_t np = x.positions();
  std::vector<T> out(x.data().size());
  for (int64_t c = 0; c < x.channels(); ++c) {
    for (int64_t j = 0; j < np; ++j) {
      out[static_cast<size_t>(c * np + j)] = x.at(c, perm[static_cast<size_t>(j)]);
    }
  }
  return FeatureMap<T>(x.channels(), x.spatial(), std::move(out));
}

// Central differences (f(theta + h e_k) - f(theta - h e_k)) / (2h). The
// quotient is formed in long double, and the step actually taken (after
// rounding theta +/- h to Real) is used as the denominator.
template <typename Real>
std::vector<long double> finite_diff_gradient(
    const std::function<Real(std::span<const Real>)>& f, std::vector<Real> theta, Real h) {
  if (!(h > Real(0))) throw InvariantError("finite_diff_gradient: step must be positive");
  std::vector<long double> grad(theta.size());
  for (size_t k = 0; k < theta.size(); ++k) {
    const Real saved = theta[k];
    const Real up = saved + h;
    const Real down = saved - h;
    theta[k] = up;
    const Real f_up = f(theta);
    theta[k] = down;
    const Real f_down = f(theta);
    theta[k] = saved;
    if (!std::isfinite(f_up) || !std::isfinite(f_down)) {
      throw NumericError("finite_diff_gradient: non-finite evaluation at coordinate " +
                         std::to_string(k));
    }
    const long double step = static_cast<long double>(up) - static_cast<long double>(down);
    grad[k] = (static_cast<long double>(f_up) - static_cast<long double>(f_down)) / step;
  }
  return grad;
}

// ||a - b||_inf / max(||a||_inf, ||b||_inf); 0 when both are zero.
template <typename A, typename B>
double max_relative_error(std::span<const A> a, std::span<const B> b) {
  if (a.size() != b.size()) throw DimensionError("max_relative_error: length mismatch");
  long double diff = 0, scale = 0;
  for (size_t k = 0; k < a.size(); ++k) {
    const long double x = static_cast<long double>(a[k]);
    const long double y = static_cast<long double>(b[k]);
    diff = std::max(diff, std::abs(x - y));
    scale = std::max({scale, std::abs(x), std::abs(y)});
  }
  return scale == 0 ? 0.0 : static_cast<double>(diff / scale);
}

}  // namespace gcnet
