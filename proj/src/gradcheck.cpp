#include "gcnet/gradcheck.hpp"

#include <cmath>
#include <random>

#include "gcnet/backward.hpp"
#include "gcnet/forward.hpp"

namespace gcnet {

namespace {

// Flattened view of (x, params) in for_each_tensor order, x first.
struct Layout {
  std::vector<std::string> names;
  std::vector<size_t> offsets;  // names.size() + 1 entries
};

Layout layout_of(const FeatureMap<double>& x, const BlockParams<double>& p) {
  Layout l;
  l.names.push_back("x");
  l.offsets = {0, x.data().size()};
  p.for_each_tensor([&](const char* name, const std::vector<double>& v) {
    l.names.emplace_back(name);
    l.offsets.push_back(l.offsets.back() + v.size());
  });
  return l;
}

double weighted_sum(const FeatureMap<double>& upstream, const FeatureMap<double>& z) {
  long double acc = 0;
  for (size_t k = 0; k < z.data().size(); ++k) {
    acc += static_cast<long double>(upstream.data()[k]) * z.data()[k];
  }
  return static_cast<double>(acc);
}

}  // namespace

GradCheckResult check_block_gradients(const BlockSpec& spec, const BlockParams<double>& params,
                                      const FeatureMap<double>& x,
                                      const FeatureMap<double>& upstream, double step) {
  const BlockGradients<double> analytic_grads = block_backward(x, spec, params, upstream);

  const Layout layout = layout_of(x, params);
  std::vector<double> theta(x.data().begin(), x.data().end());
  params.for_each_tensor([&](const char*, const std::vector<double>& v) {
    theta.insert(theta.end(), v.begin(), v.end());
  });
  std::vector<double> analytic(analytic_grads.grad_x.data().begin(),
                               analytic_grads.grad_x.data().end());
  analytic_grads.grad_params.for_each_tensor([&](const char*, const std::vector<double>& v) {
    analytic.insert(analytic.end(), v.begin(), v.end());
  });
  if (analytic.size() != theta.size()) {
    throw DimensionError("check_block_gradients: gradient layout differs from parameter layout");
  }
  for (size_t k = 0; k < analytic.size(); ++k) {
    if (!std::isfinite(analytic[k])) {
      throw NumericError("check_block_gradients: non-finite analytic gradient at flat index " +
                         std::to_string(k));
    }
  }

  const std::function<double(std::span<const double>)> loss = [&](std::span<const double> t) {
    std::vector<double> xs(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(layout.offsets[1]));
    FeatureMap<double> xp(x.channels(), x.spatial(), std::move(xs));
    BlockParams<double> pp = params;
    size_t cursor = layout.offsets[1];
    pp.for_each_tensor([&](const char*, std::vector<double>& v) {
      std::copy(t.begin() + static_cast<std::ptrdiff_t>(cursor),
                t.begin() + static_cast<std::ptrdiff_t>(cursor + v.size()), v.begin());
      cursor += v.size();
    });
    return weighted_sum(upstream, block_forward(xp, spec, pp).z);
  };
  const std::vector<long double> numeric = finite_diff_gradient<double>(loss, theta, step);

  GradCheckResult result;
  result.coordinates = theta.size();
  for (size_t t = 0; t < layout.names.size(); ++t) {
    const size_t lo = layout.offsets[t], hi = layout.offsets[t + 1];
    TensorGradError err;
    err.name = layout.names[t];
    const std::span<const double> a(analytic.data() + lo, hi - lo);
    const std::span<const long double> n(numeric.data() + lo, hi - lo);
    err.max_rel_err = max_relative_error(a, n);
    long double worst = -1;
    for (size_t k = 0; k < a.size(); ++k) {
      const long double d = std::abs(static_cast<long double>(a[k]) - n[k]);
      if (d > worst) {
        worst = d;
        err.worst_index = k;
      }
    }
    err.analytic = a.empty() ? 0.0 : a[err.worst_index];
    err.numeric = n.empty() ? 0.0 : static_cast<double>(n[err.worst_index]);
    result.max_rel_err = std::max(result.max_rel_err, err.max_rel_err);
    result.tensors.push_back(std::move(err));
  }
  return result;
}

FeatureMap<double> random_feature_map(int64_t channels, Spatial spatial, uint64_t seed) {
  std::mt19937_64 engine(seed * 0x2545F4914F6CDD1DULL + 1);
  std::vector<double> values(static_cast<size_t>(channels * spatial.positions()));
  for (double& v : values) v = static_cast<double>(engine() >> 11) * 0x1.0p-52 - 1.0;
  return FeatureMap<double>(channels, spatial, std::move(values));
}

}  // namespace gcnet
