#include "doctest.h"
#include "gcnet/backward.hpp"
#include "gcnet/gradcheck.hpp"

using namespace gcnet;

namespace {

std::vector<BlockSpec> differentiable_specs() {
  return {BlockSpec::snl(8),
          BlockSpec::snl_factored(8),
          BlockSpec::se(8, 2),
          BlockSpec::gc(8, 2),
          BlockSpec::framework(8, 2, Pooling::avg, Fusion::add),
          BlockSpec::framework(8, 2, Pooling::avg, Fusion::scale),
          BlockSpec::framework(8, 2, Pooling::att, Fusion::add),
          BlockSpec::framework(8, 2, Pooling::att, Fusion::scale)};
}

}  // namespace

TEST_CASE("analytic gradients agree with central differences") {
  for (const BlockSpec& spec : differentiable_specs()) {
    CAPTURE(spec.tag());
    for (uint64_t seed = 0; seed < 3; ++seed) {
      const Spatial s = Spatial::flat(12);
      const auto x = random_feature_map(8, s, seed);
      const auto upstream = random_feature_map(8, s, seed + 1000);
      const auto p = init_params(spec, seed, InitScheme::random);
      const GradCheckResult r = check_block_gradients(spec, p, x, upstream, 1e-5);
      CAPTURE(r.max_rel_err);
      CHECK(r.max_rel_err <= 1e-6);
      CHECK(r.coordinates == 96 + p.parameter_count());
    }
  }
}

TEST_CASE("gradients at identity initialization") {
  for (const BlockSpec& spec : differentiable_specs()) {
    CAPTURE(spec.tag());
    const auto x = random_feature_map(8, Spatial{3, 4, std::nullopt}, 4);
    const auto upstream = random_feature_map(8, x.spatial(), 5);
    CHECK(check_block_gradients(spec, init_params(spec, 4), x, upstream).max_rel_err <= 1e-6);
  }
}

TEST_CASE("GC with W_v2 = 0 by the chain rule") {
  const BlockSpec spec = BlockSpec::gc(8, 2);
  auto p = init_params(spec, 3, InitScheme::random);
  p.w_v2 = LinearWeight<double>::zeros(8, 4);
  const auto x = random_feature_map(8, Spatial::flat(6), 3);
  const auto upstream = random_feature_map(8, Spatial::flat(6), 4);
  const BlockGradients<double> g = block_backward(x, spec, p, upstream);

  CHECK(g.grad_x == upstream);

  // Gradients of everything before W_v2 vanish.
  for (double v : g.grad_params.w_k->data) CHECK(v == 0.0);
  for (double v : g.grad_params.w_v1->data) CHECK(v == 0.0);

  const auto context = global_attention_pool<double>(x, softmax_positions<double>(
                                                            linear_map(*p.w_k, x).data()));
  const auto hidden = relu<double>(layer_norm<double>(apply<double>(*p.w_v1, context), *p.ln));
  std::vector<double> pooled(8, 0.0);
  for (int64_t k = 0; k < 8; ++k) {
    for (int64_t j = 0; j < 6; ++j) pooled[static_cast<size_t>(k)] += upstream.at(k, j);
  }
  for (int64_t o = 0; o < 8; ++o) {
    for (int64_t h = 0; h < 4; ++h) {
      CHECK(g.grad_params.w_v2->at(o, h) ==
            doctest::Approx(pooled[static_cast<size_t>(o)] * hidden[static_cast<size_t>(h)]).epsilon(1e-12));
    }
  }
}

TEST_CASE("all-zero SE passes half the upstream gradient") {
  const BlockSpec spec = BlockSpec::se(8, 2);
  const auto p = init_params(spec, 0, InitScheme::zero);
  p.for_each_tensor([](const char*, const std::vector<double>& v) {
    for (double e : v) CHECK(e == 0.0);
  });
  const auto x = random_feature_map(8, Spatial::flat(12), 6);
  const auto upstream = random_feature_map(8, Spatial::flat(12), 7);
  const auto g = block_backward(x, spec, p, upstream);
  for (size_t k = 0; k < upstream.data().size(); ++k) CHECK(g.grad_x.data()[k] == 0.5 * upstream.data()[k]);
}

TEST_CASE("backward rejects what it cannot differentiate") {
  const auto x = random_feature_map(8, Spatial::flat(4), 1);
  CHECK_THROWS_AS(block_backward(x, BlockSpec::nl(8, NlVariant::dot),
                                 init_params(BlockSpec::nl(8, NlVariant::dot), 1), x),
                  SpecError);
  const BlockSpec gc = BlockSpec::gc(8, 2);
  CHECK_THROWS_AS(block_backward(x, gc, init_params(gc, 1), random_feature_map(8, Spatial::flat(5), 1)),
                  DimensionError);
}

TEST_CASE("step sweep shows truncation and round-off regimes") {
  const BlockSpec spec = BlockSpec::gc(8, 2);
  const auto p = init_params(spec, 1, InitScheme::random);
  const auto x = random_feature_map(8, Spatial::flat(12), 1);
  const auto upstream = random_feature_map(8, Spatial::flat(12), 2);
  const double coarse = check_block_gradients(spec, p, x, upstream, 1e-4).max_rel_err;
  const double middle = check_block_gradients(spec, p, x, upstream, 1e-5).max_rel_err;
  const double fine = check_block_gradients(spec, p, x, upstream, 1e-6).max_rel_err;
  CAPTURE(coarse);
  CAPTURE(middle);
  CAPTURE(fine);
  CHECK(middle < coarse);
  CHECK(middle < fine);
}
