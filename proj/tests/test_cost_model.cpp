#include <cmath>

#include "doctest.h"
#include "gcnet/cost_model.hpp"

using namespace gcnet;

namespace {

struct Tally {
  int64_t params = 0;
  int64_t macs = 0;
};

// Independent layer-by-layer enumeration of a bottleneck ResNet at 224x224,
// stride on the first 1x1 conv of each stage.
Tally reference_resnet(const std::vector<int64_t>& depth) {
  Tally t;
  auto conv = [&](int64_t in, int64_t out, int64_t k, int64_t side) {
    t.params += in * out * k * k + 2 * out;
    t.macs += in * out * k * k * side * side;
  };
  conv(3, 64, 7, 112);
  int64_t in = 64;
  const int64_t widths[] = {64, 128, 256, 512};
  const int64_t sides[] = {56, 28, 14, 7};
  for (int s = 0; s < 4; ++s) {
    for (int64_t b = 0; b < depth[static_cast<size_t>(s)]; ++b) {
      conv(in, widths[s], 1, sides[s]);
      conv(widths[s], widths[s], 3, sides[s]);
      conv(widths[s], 4 * widths[s], 1, sides[s]);
      if (b == 0) conv(in, 4 * widths[s], 1, sides[s]);
      in = 4 * widths[s];
    }
  }
  t.params += 2048 * 1000 + 1000;
  t.macs += 2048 * 1000;
  return t;
}

InsertionPlan plan_all(BlockSpec block, std::vector<StageId> stages = {StageId::c3, StageId::c4, StageId::c5}) {
  return InsertionPlan{std::move(stages), InsertMode::all_blocks, block};
}

InsertionPlan plan_one(BlockSpec block) { return InsertionPlan{{}, InsertMode::last_block_of_c4, block}; }

double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace

TEST_CASE("block parameter counts") {
  CHECK(count_block(BlockSpec::gc(1024, 16), 1024, 14, 14).params_total == 132224);
  CHECK(count_block(BlockSpec::snl(1024), 1024, 14, 14).params_total == 1049600);
  CHECK(count_block(BlockSpec::snl_factored(1024), 1024, 14, 14).params_total == 1049600);
  CHECK(count_block(BlockSpec::nl(1024, NlVariant::embedded_gaussian), 1024, 14, 14).params_total == 2097152);
  CHECK(count_block(BlockSpec::se(1024, 16), 1024, 14, 14).params_total == 131072);

  for (int64_t r : {1, 2, 4, 8, 16, 32}) {
    for (int64_t c : {64, 256, 512, 2048}) {
      CHECK(count_block(BlockSpec::gc(c, r), c, 7, 7).params_total == c + 2 * c * c / r + 2 * (c / r));
    }
  }
}

TEST_CASE("block FLOP terms") {
  SUBCASE("factored SNL applies W_v once") {
    const auto unf = count_block(BlockSpec::snl(64), 64, 14, 14);
    const auto fac = count_block(BlockSpec::snl_factored(64), 64, 14, 14);
    CHECK(unf.term("W_v")->macs == 802816);
    CHECK(fac.term("W_v")->macs == 4096);
    CHECK(count_block(BlockSpec::snl_factored(64), 64, 56, 56).term("W_v")->macs == 4096);
  }
  SUBCASE("NL attention products grow with the square of N_p") {
    for (NlVariant v : {NlVariant::gaussian, NlVariant::embedded_gaussian, NlVariant::dot}) {
      const auto small = count_block(BlockSpec::nl(256, v), 256, 7, 7);
      const auto big = count_block(BlockSpec::nl(256, v), 256, 14, 14);
      for (const char* name : {"attention.logits", "attention.aggregate"}) {
        CHECK(big.term(name)->macs == 16 * small.term(name)->macs);
      }
    }
  }
  SUBCASE("terms add up") {
    const auto r = count_block(BlockSpec::gc(256, 16), 256, 14, 14);
    int64_t p = 0, m = 0;
    for (const CostTerm& t : r.terms) {
      p += t.params;
      m += t.macs;
    }
    CHECK(p == r.params_total);
    CHECK(m == r.flops_total);
    CHECK(r.term("W_k")->macs == 196 * 256);
    CHECK(r.term("pool")->macs == 196 * 256);
    CHECK(r.term("W_v1")->macs == 256 * 16);
    CHECK(r.term("ln")->params == 32);
    CHECK(r.term("softmax")->macs == 0);
    CHECK(r.term("no-such-term") == nullptr);
  }
  SUBCASE("invalid specs") {
    CHECK_THROWS_AS(count_block(BlockSpec::gc(8, 16), 8, 7, 7), SpecError);
    CHECK_THROWS(count_block(BlockSpec::gc(64, 16), 64, 0, 7));
  }
}

TEST_CASE("ResNet baselines") {
  const auto r50 = count_backbone(BackboneDesc::resnet50());
  const Tally ref50 = reference_resnet({3, 4, 6, 3});
  CHECK(r50.params_total == 25557032);
  CHECK(r50.params_total == ref50.params);
  CHECK(r50.flops_total == ref50.macs);
  CHECK(rel(static_cast<double>(r50.params_total), 25.56e6) <= 1e-3);
  CHECK(rel(static_cast<double>(r50.flops_total), 3.86e9) <= 0.02);
  CHECK(r50.params_added == 0);
  CHECK(r50.per_stage.size() == 6);

  const auto r101 = count_backbone(BackboneDesc::resnet101());
  const Tally ref101 = reference_resnet({3, 4, 23, 3});
  CHECK(r101.params_total == ref101.params);
  CHECK(r101.flops_total == ref101.macs);
  CHECK(r101.params_total == 44549160);

  const auto stages = BackboneDesc::resnet50().stages();
  CHECK(stages[0].out_channels == 256);
  CHECK(stages[0].height == 56);
  CHECK(stages[3].out_channels == 2048);
  CHECK(stages[3].height == 7);
}

TEST_CASE("inserted blocks") {
  const BackboneDesc r50 = BackboneDesc::resnet50();
  const auto base = count_backbone(r50);

  SUBCASE("single blocks at the end of c4") {
    const auto nl = count_backbone(r50, plan_one(BlockSpec::nl(0, NlVariant::embedded_gaussian)));
    const auto snl = count_backbone(r50, plan_one(BlockSpec::snl_factored(0)));
    const auto gc = count_backbone(r50, plan_one(BlockSpec::gc(0, 16)));
    CHECK(nl.params_added == 2097152);
    CHECK(snl.params_added == 1049600);
    CHECK(gc.params_added == 132224);
    CHECK(format_millions(gc.params_total) == "25.69");
    CHECK(rel(static_cast<double>(nl.params_added), 2.10e6) <= 0.01);
    CHECK(format_millions(nl.params_total) == "27.65");
    CHECK(format_millions(snl.params_total) == "26.61");
  }
  SUBCASE("GC after every unit of c3, c4 and c5") {
    const auto gc = count_backbone(r50, plan_all(BlockSpec::gc(0, 16)));
    CHECK(gc.params_added == 4 * 33344 + 6 * 132224 + 3 * 526592);
    CHECK(rel(static_cast<double>(gc.params_added), 2.52e6) <= 0.01);
    CHECK(static_cast<double>(gc.flops_added) / static_cast<double>(base.flops_total) <= 0.003);
    CHECK(format_billions(gc.flops_total) == "3.87");
  }
  SUBCASE("cost is additive over insertion sites") {
    const BlockSpec specs[] = {BlockSpec::gc(0, 16), BlockSpec::se(0, 16), BlockSpec::snl(0),
                               BlockSpec::nl(0, NlVariant::dot),
                               BlockSpec::framework(0, 4, Pooling::att, Fusion::scale)};
    for (const BlockSpec& spec : specs) {
      const auto with = count_backbone(r50, plan_all(spec));
      int64_t p = 0, m = 0;
      for (const StageDesc& st : r50.stages()) {
        if (st.id == StageId::c2) continue;
        const auto one = count_block(spec, st.out_channels, st.height, st.width_px);
        p += st.blocks * one.params_total;
        m += st.blocks * one.flops_total;
      }
      CHECK(with.params_total == base.params_total + p);
      CHECK(with.flops_total == base.flops_total + m);
      CHECK(with.params_added == with.params_total - base.params_total);
      CHECK(with.flops_added == with.flops_total - base.flops_total);
    }
  }
  SUBCASE("fewer parameters as the ratio grows") {
    int64_t previous = INT64_MAX;
    for (int64_t r : {4, 8, 16, 32}) {
      const int64_t added = count_backbone(r50, plan_all(BlockSpec::gc(0, r))).params_added;
      CHECK(added < previous);
      previous = added;
    }
  }
  SUBCASE("position does not change cost") {
    BlockSpec after_1x1 = BlockSpec::gc(0, 16);
    after_1x1.position = Position::after_1x1;
    CHECK(count_backbone(r50, plan_all(after_1x1)).params_total ==
          count_backbone(r50, plan_all(BlockSpec::gc(0, 16))).params_total);
  }
  SUBCASE("invalid plans") {
    CHECK_THROWS_AS(count_backbone(r50, plan_all(BlockSpec::gc(0, 16), {StageId::c2})), SpecError);
    CHECK_THROWS_AS(count_backbone(r50, plan_all(BlockSpec::gc(0, 16), {})), SpecError);
    CHECK_THROWS_AS(count_backbone(r50, plan_all(BlockSpec::gc(0, 16), {StageId::c3, StageId::c3})),
                    SpecError);
    BackboneDesc tiny = r50;
    tiny.input_height = 0;
    CHECK_THROWS_AS(count_backbone(tiny), SpecError);
  }
}

TEST_CASE("cost table") {
  SUBCASE("baseline row") {
    const CostTable t = emit_cost_table({CostRowSpec{"baseline", BackboneDesc::resnet50(), std::nullopt}});
    REQUIRE(t.rows.size() == 1);
    CHECK(t.rows[0] == std::vector<std::string>{"baseline", "25.56", "3.86"});
    CHECK(t.render() == "block | #params(M) | FLOPs(G)\nbaseline | 25.56 | 3.86\n");
  }
  SUBCASE("empty input gives the header only") {
    const CostTable t = emit_cost_table({});
    CHECK(t.rows.empty());
    CHECK(t.header.size() == 3);
  }
  SUBCASE("row order is preserved") {
    const CostTable t = emit_cost_table({CostRowSpec{"b", BackboneDesc::resnet101(), std::nullopt},
                                         CostRowSpec{"a", BackboneDesc::resnet50(), std::nullopt}});
    CHECK(t.rows[0][0] == "b");
    CHECK(t.rows[1][0] == "a");
    CHECK(t.rows[0][1] == "44.55");
  }
  CHECK(format_millions(25557032) == "25.56");
  CHECK(format_billions(3858000000) == "3.86");
}
