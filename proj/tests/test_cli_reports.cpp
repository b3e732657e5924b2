#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sys/wait.h>

#include "doctest.h"
#include "gcnet/commands.hpp"
#include "gcnet/cost_config.hpp"
#include "gcnet/gradcheck.hpp"
#include "gcnet/tensor_file.hpp"

using namespace gcnet;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  const fs::path dir = fs::temp_directory_path() / ("gcnet_cli_test_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir;
}

fs::path write_map(const fs::path& path, const FeatureMap<double>& map) {
  write_tensor_file(path, to_tensor_file(map));
  return path;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// Runs the CLI, returns its exit status; stdout goes to `out`.
int run_cli(const std::string& args, const fs::path& out) {
  const std::string cmd = std::string(GCNET_CLI) + " " + args + " > " + out.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const Check& find_check(const RunReport& r, const std::string& name) {
  for (const Check& c : r.checks()) {
    if (c.name == name) return c;
  }
  throw std::out_of_range(name);
}

bool has_check(const RunReport& r, const std::string& name) {
  for (const Check& c : r.checks()) {
    if (c.name == name) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("tensor file encoding") {
  SUBCASE("byte layout") {
    const TensorFile t{{1, 1, 2}, {1.0f, -2.0f}};
    const std::vector<uint8_t> bytes = encode_tensor(t);
    REQUIRE(bytes.size() == 4 + 4 + 3 * 8 + 2 * 4);
    CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "GCT1");
    CHECK(bytes[4] == 3);
    CHECK(bytes[5] == 0);
    CHECK(bytes[8 + 16] == 2);
    // 1.0f = 0x3f800000 little-endian.
    CHECK(bytes[32] == 0x00);
    CHECK(bytes[35] == 0x3f);
    CHECK(decode_tensor(bytes) == t);
  }
  SUBCASE("round trip is lossless at 32 bits") {
    const auto map = random_feature_map(5, Spatial{2, 3, 4}, 8).cast<float>();
    const TensorFile t = to_tensor_file(map);
    CHECK(t.dims == std::vector<uint64_t>{5, 4, 2, 3});
    const TensorFile back = decode_tensor(encode_tensor(t));
    CHECK(back == t);
    CHECK(to_feature_map(back).cast<float>() == map);
    CHECK(to_feature_map(back).spatial() == map.spatial());
  }
  SUBCASE("malformed input") {
    std::vector<uint8_t> bytes = encode_tensor(TensorFile{{2, 1, 1}, {0.5f, 0.25f}});
    std::vector<uint8_t> bad_magic = bytes;
    bad_magic[3] = '2';
    CHECK_THROWS_AS(decode_tensor(bad_magic), FormatError);
    std::vector<uint8_t> bad_rank = bytes;
    bad_rank[4] = 2;
    CHECK_THROWS_AS(decode_tensor(bad_rank), FormatError);
    std::vector<uint8_t> short_payload(bytes.begin(), bytes.end() - 1);
    CHECK_THROWS_AS(decode_tensor(short_payload), FormatError);
    bytes.push_back(0);
    CHECK_THROWS_AS(decode_tensor(bytes), FormatError);
    CHECK_THROWS_AS(decode_tensor(std::vector<uint8_t>{'G', 'C'}), FormatError);
    CHECK_THROWS_AS(encode_tensor(TensorFile{{2, 2}, {1, 2, 3, 4}}), FormatError);
    CHECK_THROWS_AS(to_feature_map(TensorFile{{1, 1, 1}, {NAN}}), FormatError);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(read_tensor_file("/nonexistent/x.gct"), IoError);
  }
}

TEST_CASE("run report serialization") {
  RunReport r("demo", 3);
  r.echo("block", "gc(r=16)");
  r.result("a", 0.1);
  r.note("a", "text");
  r.check("err", 1e-12, 1e-10);
  r.check("ratio", 0.5, 1.0, Comparison::at_least);
  CHECK_FALSE(r.pass());
  CHECK(r.result_value("a") == 0.1);
  CHECK_THROWS(r.result_value("b"));
  CHECK_THROWS_AS(r.result("bad", NAN), NumericError);
  CHECK(r.serialize() ==
        "command = demo\n"
        "seed = 3\n"
        "spec.block = gc(r=16)\n"
        "result.a = 0.10000000000000001\n"
        "note.a = text\n"
        "check.err.value = 9.9999999999999998e-13\n"
        "check.err.max = 1e-10\n"
        "check.err.pass = true\n"
        "check.ratio.value = 0.5\n"
        "check.ratio.min = 1\n"
        "check.ratio.pass = false\n"
        "pass = false\n");
}

TEST_CASE("cost config parsing") {
  SUBCASE("defaults") {
    const auto rows = parse_cost_config("[row x]\nblock = gc\n");
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].plan);
    CHECK(rows[0].plan->stages.size() == 3);
    CHECK(rows[0].plan->block.ratio == 16);
    CHECK(rows[0].desc == BackboneDesc::resnet50());
  }
  SUBCASE("resolution and classes") {
    const auto rows = parse_cost_config("[row y]  # comment\narch = resnet101\nresolution = 320x256\nclasses = 10\n");
    CHECK(rows[0].desc.arch == Arch::resnet101);
    CHECK(rows[0].desc.input_height == 320);
    CHECK(rows[0].desc.input_width == 256);
    CHECK(rows[0].desc.num_classes == 10);
    CHECK_FALSE(rows[0].plan);
  }
  SUBCASE("errors name the line") {
    auto message = [](const std::string& text) {
      try {
        parse_cost_config(text);
      } catch (const FormatError& e) {
        return std::string(e.what());
      }
      return std::string("no error");
    };
    CHECK(message("[row a]\n\nfoo = 1\n").find("line 3") != std::string::npos);
    CHECK(message("arch = resnet50\n").find("line 1") != std::string::npos);
    CHECK(message("[row a]\nratio = -2\n").find("line 2") != std::string::npos);
    CHECK(message("[row a]\nblock = bogus\n").find("line 2") != std::string::npos);
    CHECK(message("[row a]\nstages = c2\nblock = gc\n").find("line 1") != std::string::npos);
    CHECK(message("[row a]\nblock = framework\n").find("line 1") != std::string::npos);
    CHECK(message("[table]\n").find("line 1") != std::string::npos);
    CHECK(message("[row a]\njust words\n").find("line 2") != std::string::npos);
  }
  CHECK(parse_cost_config("# nothing\n").empty());
}

TEST_CASE("check-equivalence command") {
  SUBCASE("defaults pass") {
    const RunReport r = cmd_check_equivalence(EquivalenceOptions{});
    CHECK(r.pass());
    CHECK(r.result_value("instances") == 108);
    CHECK(find_check(r, "snl_vs_factored.max_rel_err").value <= 1e-10);
  }
  SUBCASE("single position") {
    EquivalenceOptions o;
    o.sizes = {{4, 1}};
    CHECK(cmd_check_equivalence(o).pass());
  }
  SUBCASE("perturbed copy fails every comparison") {
    EquivalenceOptions o;
    o.sizes = {{4, 9}, {16, 9}};
    o.instances_per_size = 3;
    o.perturb = true;
    const RunReport r = cmd_check_equivalence(o);
    CHECK_FALSE(r.pass());
    for (const Check& c : r.checks()) CHECK_FALSE(c.pass);
  }
  SUBCASE("bad sizes") {
    EquivalenceOptions o;
    o.sizes = {};
    CHECK_THROWS_AS(cmd_check_equivalence(o), UsageError);
  }
  SUBCASE("deterministic") {
    EquivalenceOptions o;
    o.instances_per_size = 2;
    o.seed = 17;
    CHECK(cmd_check_equivalence(o).serialize() == cmd_check_equivalence(o).serialize());
  }
}

TEST_CASE("gradcheck command") {
  SUBCASE("GC") {
    GradcheckOptions o;
    o.seed = 1;
    const RunReport r = cmd_gradcheck(o);
    CHECK(r.pass());
    CHECK(r.result_value("coordinates") == 96 + 8 + 2 * 8 * 4 + 2 * 4);
  }
  SUBCASE("all-zero SE") {
    GradcheckOptions o;
    o.spec = BlockSpec::se(8, 2);
    o.scheme = InitScheme::zero;
    const RunReport r = cmd_gradcheck(o);
    CHECK(r.pass());
    CHECK(find_check(r, "se_zero.grad_x_vs_half_upstream").value == 0.0);
  }
  SUBCASE("step sweep") {
    GradcheckOptions o;
    o.sweep = true;
    const RunReport r = cmd_gradcheck(o);
    CHECK(r.pass());
    CHECK(r.result_value("sweep.h_1e-05") < r.result_value("sweep.h_1e-04"));
    CHECK(r.result_value("sweep.h_1e-05") < r.result_value("sweep.h_1e-06"));
  }
  SUBCASE("NL is refused") {
    GradcheckOptions o;
    o.spec = BlockSpec::nl(8, NlVariant::dot);
    CHECK_THROWS_AS(cmd_gradcheck(o), UsageError);
  }
}

TEST_CASE("cost-table command") {
  const CostTableOutput out = cmd_cost_table(fs::path(GCNET_SOURCE_DIR) / "configs/resnet_cost_table.cfg");
  CHECK(out.report.pass());
  CHECK(out.report.checks().size() >= 12);
  CHECK(out.table.rows.front() == std::vector<std::string>{"baseline", "25.56", "3.86"});
  CHECK(out.report.result_value("resnet101_baseline.params") == 44549160);
  CHECK(has_check(out.report, "plus1gc.params_added_rel_err"));
  CHECK(has_check(out.report, "plusall_gc.flops_increase"));
  CHECK_THROWS_AS(cmd_cost_table(fs::path(GCNET_SOURCE_DIR) / "configs/empty.cfg"), UsageError);
  CHECK_THROWS_AS(cmd_cost_table("/nonexistent/table.cfg"), IoError);
}

TEST_CASE("att-stats command") {
  const fs::path dir = scratch_dir();
  const fs::path random_map = write_map(dir / "random.gct", random_feature_map(8, Spatial{3, 3, std::nullopt}, 2));

  SUBCASE("constant map under gaussian NL") {
    const fs::path constant = write_map(dir / "const.gct", FeatureMap<double>(4, Spatial{2, 2, std::nullopt},
                                                                              std::vector<double>(16, 0.5)));
    AttStatsOptions o;
    o.spec = BlockSpec::nl(0, NlVariant::gaussian);
    const RunReport r = cmd_att_stats(constant, o);
    for (const auto& [name, value] : r.results()) CHECK(value == 0.0);
    CHECK(r.results().size() >= 3);
  }
  SUBCASE("GC is query independent") {
    AttStatsOptions o;
    o.spec = BlockSpec::gc(0, 4);
    const RunReport r = cmd_att_stats(random_map, o);
    CHECK(r.pass());
    CHECK(r.result_value("output.cosine") == 0.0);
    CHECK(r.result_value("att.cosine") == 0.0);
    CHECK(r.result_value("att.jsd") == 0.0);
    CHECK(has_check(r, "query_independent.output.cosine"));
  }
  SUBCASE("dot NL has no JSD") {
    AttStatsOptions o;
    o.spec = BlockSpec::nl(0, NlVariant::dot);
    const RunReport r = cmd_att_stats(random_map, o);
    CHECK_THROWS(r.result_value("att.jsd"));
    CHECK(r.serialize().find("note.att.jsd = n/a (attention rows are not probability vectors)") != std::string::npos);
  }
  SUBCASE("bad file") {
    std::ofstream(dir / "junk.gct") << "not a tensor";
    CHECK_THROWS_AS(cmd_att_stats(dir / "junk.gct", AttStatsOptions{}), FormatError);
  }
  fs::remove_all(dir);
}

TEST_CASE("forward command") {
  const fs::path dir = scratch_dir();
  const fs::path in = write_map(dir / "in.gct", random_feature_map(16, Spatial{2, 3, std::nullopt}, 4));

  SUBCASE("fresh GC reproduces the input payload") {
    ForwardOptions o;
    o.spec = BlockSpec::gc(0, 4);
    for (Precision p : {Precision::f32, Precision::f64}) {
      o.precision = p;
      const RunReport r = cmd_forward(in, dir / "out.gct", o);
      CHECK(r.result_value("max_abs_delta") == 0.0);
      CHECK(slurp(dir / "out.gct") == slurp(in));
    }
  }
  SUBCASE("random SE writes a deterministic, changed output") {
    ForwardOptions o;
    o.spec = BlockSpec::se(0, 4);
    o.scheme = InitScheme::random;
    o.seed = 3;
    cmd_forward(in, dir / "a.gct", o);
    cmd_forward(in, dir / "b.gct", o);
    CHECK(slurp(dir / "a.gct") == slurp(dir / "b.gct"));
    CHECK(slurp(dir / "a.gct") != slurp(in));
  }
  SUBCASE("declared sizes must match the file") {
    ForwardOptions o;
    o.expected_positions = 7;
    CHECK_THROWS_AS(cmd_forward(in, dir / "out.gct", o), DimensionError);
    o.expected_positions.reset();
    o.expected_channels = 8;
    CHECK_THROWS_AS(cmd_forward(in, dir / "out.gct", o), DimensionError);
  }
  SUBCASE("unwritable output") {
    CHECK_THROWS_AS(cmd_forward(in, "/nonexistent/dir/out.gct", ForwardOptions{}), IoError);
  }
  fs::remove_all(dir);
}

TEST_CASE("CLI exit status") {
  const fs::path dir = scratch_dir();
  const fs::path log = dir / "log.txt";
  const std::string cfg = std::string(GCNET_SOURCE_DIR) + "/configs/";

  CHECK(run_cli("check-equivalence --sizes 4x1,16x9 --instances 2", log) == 0);
  CHECK(slurp(log).find("pass = true") != std::string::npos);
  CHECK(run_cli("check-equivalence --sizes 4x9 --perturb", log) == 1);
  CHECK(slurp(log).find("pass = false") != std::string::npos);
  CHECK(run_cli("check-equivalence --sizes 4by9", log) == 2);

  CHECK(run_cli("gradcheck --block gc --c 8 --np 12 --seed 1", log) == 0);
  CHECK(run_cli("gradcheck --block framework --pooling att --fusion scale --c 8 --h 3 --w 4", log) == 0);
  CHECK(run_cli("gradcheck --block framework --c 8", log) == 2);
  CHECK(run_cli("gradcheck --block gc --c 8 --ratio 16", log) == 2);

  CHECK(run_cli("cost-table " + cfg + "resnet_cost_table.cfg", log) == 0);
  CHECK(slurp(log).find("baseline | 25.56 | 3.86") != std::string::npos);
  CHECK(run_cli("cost-table " + cfg + "empty.cfg", log) == 2);
  CHECK(run_cli("cost-table /nonexistent.cfg", log) == 3);
  std::ofstream(dir / "broken.cfg") << "[row a]\nwidth = 3\n";
  CHECK(run_cli("cost-table " + (dir / "broken.cfg").string(), log) == 2);
  CHECK(slurp(log).find("line 2") != std::string::npos);

  const fs::path map = dir / "map.gct";
  CHECK(run_cli("make-tensor --c 8 --h 3 --w 3 --seed 5 --out " + map.string(), log) == 0);
  CHECK(run_cli("att-stats " + map.string() + " --block gc --ratio 4", log) == 0);
  CHECK(run_cli("att-stats " + map.string() + " --variant dot", log) == 0);
  CHECK(slurp(log).find("note.att.jsd = n/a") != std::string::npos);
  CHECK(run_cli("forward " + map.string() + " --block gc --ratio 4 --out " + (dir / "z.gct").string(), log) == 0);
  CHECK(slurp(dir / "z.gct") == slurp(map));
  CHECK(run_cli("forward " + map.string() + " --np 10 --out " + (dir / "z.gct").string(), log) == 2);
  CHECK(run_cli("forward " + map.string() + " --precision 16 --out " + (dir / "z.gct").string(), log) == 2);
  CHECK(run_cli("forward /nonexistent.gct --out " + (dir / "z.gct").string(), log) == 3);
  std::ofstream(dir / "junk.gct") << "GCT9";
  CHECK(run_cli("att-stats " + (dir / "junk.gct").string(), log) == 2);

  CHECK(run_cli("no-such-command", log) == 2);
  CHECK(run_cli("", log) == 2);
  fs::remove_all(dir);
}
