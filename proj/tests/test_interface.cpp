#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "proxquad/cli.hpp"

using namespace proxquad;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "proxquad");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::size_t count_files(const fs::path& dir, const std::string& ext) {
  if (!fs::exists(dir)) return 0;
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) n += e.path().extension() == ext;
  return n;
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::string l;
  std::size_t n = 0;
  while (std::getline(in, l)) ++n;
  return n;
}

// One small workspace shared by the CLI tests, generated once.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    tmp_ = new cli::TempDir("cli-test");
    cfg_ = (tmp_->path / "config.json").string();
    out_ = (tmp_->path / "out").string();
    std::ofstream(cfg_) << R"({
      "corpus": {"sessions": 3, "test_sessions": 1, "session_duration": 10.0},
      "sweep": {"T_values": [64], "replicas": [1]},
      "train": {"max_epochs": 2},
      "seed": 11
    })";
    ASSERT_EQ(run_cli({"--config", cfg_, "--out", out_, "gen-data"}).code, 0);
  }
  static void TearDownTestSuite() {
    delete tmp_;
    tmp_ = nullptr;
  }
  static std::vector<std::string> base(std::vector<std::string> rest) {
    std::vector<std::string> a{"--config", cfg_, "--out", out_};
    a.insert(a.end(), rest.begin(), rest.end());
    return a;
  }

  static inline cli::TempDir* tmp_ = nullptr;
  static inline std::string cfg_, out_;
};

}  // namespace

TEST(Config, DefaultsValidateAndRoundTrip) {
  const WorkbenchConfig c;
  EXPECT_NO_THROW(c.validate());
  const WorkbenchConfig back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
}

TEST(Config, PartialOverridesAndHash) {
  const WorkbenchConfig c = config_from_json(json::parse(R"({"controller": {"delta": 1.2}, "seed": 4})"));
  EXPECT_EQ(c.controller.delta, 1.2);
  EXPECT_EQ(c.controller.tau, ControllerParams{}.tau);
  EXPECT_EQ(c.seed, 4u);
  EXPECT_NE(config_hash(c), config_hash(WorkbenchConfig{}));
  WorkbenchConfig moved = c;
  moved.output_dir = "/elsewhere";
  EXPECT_EQ(config_hash(moved), config_hash(c));
  EXPECT_EQ(config_hash(c).size(), 16u);
}

TEST(Config, Rejections) {
  EXPECT_THROW(config_from_json(json::parse("[1]")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"controller": {"tau": 0}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"controller": {"tau": "x"}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"sweep": {"T_values": [1, 2], "replicas": [1]}})")), ConfigError);
  EXPECT_THROW(config_from_json(json::parse(R"({"sweep": {"T_values": [8], "replicas": [51]}})")), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
  EXPECT_EQ(fnv1a64("foobar"), 0x85944171f73967e8ull);
  EXPECT_EQ(hex64(0xabcull), "0000000000000abc");
}

TEST(ModelIo, RoundTripIsExact) {
  nn::MLPModel m = nn::init_model({6, {7, 3}, 5}, 2);
  m.norm = {nn::Vector::Random(6), nn::Vector::Random(6).cwiseAbs(), nn::Vector::Random(5), nn::Vector::Random(5).cwiseAbs()};
  m.layers[1].bias(0) = -0.0;
  m.layers[0].weight(0, 0) = 1e-310;
  const std::string bytes = serialize_model(m, {{"role", "m1"}});
  const LoadedModel back = deserialize_model(bytes);
  EXPECT_EQ(back.header["role"], "m1");
  EXPECT_EQ(back.model.spec, m.spec);
  for (std::size_t l = 0; l < m.layers.size(); ++l) {
    EXPECT_EQ(back.model.layers[l].weight, m.layers[l].weight);
    EXPECT_EQ(back.model.layers[l].bias, m.layers[l].bias);
  }
  EXPECT_TRUE(std::signbit(back.model.layers[1].bias(0)));
  EXPECT_EQ(back.model.norm.out_scale, m.norm.out_scale);
  EXPECT_EQ(serialize_model(back.model, {{"role", "m1"}}), bytes);
}

TEST(ModelIo, RejectsCorruptFiles) {
  const std::string good = serialize_model(nn::init_model({2, {3}, 1}, 1));
  EXPECT_THROW(deserialize_model("nonsense"), ModelFormatError);
  EXPECT_THROW(deserialize_model(good.substr(0, good.size() - 3)), ModelFormatError);
  EXPECT_THROW(deserialize_model(good + "x"), ModelFormatError);
  std::string nan = good;
  const double q = std::numeric_limits<double>::quiet_NaN();
  std::memcpy(nan.data() + nan.size() - 8, &q, 8);
  EXPECT_THROW(deserialize_model(nan), ModelFormatError);
}

TEST(ModelIo, LoadApproachChecksShapes) {
  cli::TempDir tmp("model-io");
  write_model(tmp.path / "m2.pqm", nn::init_model({3, {4}, 4}, 1));
  EXPECT_THROW(load_approach(tmp.path, ApproachKind::A2), ModelFormatError);
  EXPECT_THROW(load_approach(tmp.path, ApproachKind::A1), ConfigError);
}

TEST_F(Cli, GenDataLayout) {
  const fs::path data = fs::path(out_) / "data";
  EXPECT_TRUE(fs::exists(data / "manifest.json"));
  EXPECT_EQ(count_files(data, ".jsonl"), 3u);
  EXPECT_EQ(count_lines(data / "session_000.jsonl"), 301u);
  const json m = read_manifest(data);
  EXPECT_EQ(m["seed"], 11);
  EXPECT_EQ(m["config"]["corpus"]["sessions"], 3);
}

TEST_F(Cli, GenDataIsIndependentOfOutputLocation) {
  cli::TempDir other("cli-elsewhere");
  ASSERT_EQ(run_cli({"--config", cfg_, "--out", other.path.string(), "gen-data"}).code, 0);
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(fs::path(out_) / "data")) {
    EXPECT_TRUE(cli::same_bytes(e.path(), other.path / "data" / e.path().filename())) << e.path();
    ++n;
  }
  EXPECT_EQ(n, 4u);
}

TEST_F(Cli, VerifyPassesOnFreshCorpus) {
  const Result r = run_cli(base({"verify"}));
  EXPECT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_NE(r.out.find("verify: OK"), std::string::npos);
}

TEST_F(Cli, VerifyCatchesTamperedLabel) {
  cli::TempDir copy("cli-tamper");
  fs::copy(fs::path(out_) / "data", copy.path / "data");
  const fs::path f = copy.path / "data" / "session_001.jsonl";
  std::ifstream in(f);
  std::ostringstream rewritten;
  std::string line;
  for (int k = 0; std::getline(in, line); ++k) {
    if (k == 5) {
      json j = json::parse(line);
      j["u"][3] = j["u"][3].get<double>() + 1e-9;
      line = j.dump();
    }
    rewritten << line << '\n';
  }
  in.close();
  std::ofstream(f, std::ios::trunc) << rewritten.str();
  const Result r = run_cli(base({"verify", "--data", (copy.path / "data").string()}));
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("1 labels differ"), std::string::npos) << r.out;
}

TEST_F(Cli, TrainWritesOneModelPerRole) {
  ASSERT_EQ(run_cli(base({"train", "--approach", "a1", "--T", "64"})).code, 0);
  ASSERT_EQ(run_cli(base({"train", "--approach", "a3", "--T", "64"})).code, 0);
  ASSERT_EQ(run_cli(base({"train", "--approach", "a2", "--T", "32"})).code, 0);
  const fs::path models = fs::path(out_) / "models";
  EXPECT_EQ(count_files(models / "a1_T64", ".pqm"), 1u);
  EXPECT_EQ(count_files(models / "a3_T64", ".pqm"), 2u);
  EXPECT_EQ(count_files(models / "a2_T32", ".pqm"), 1u);
  EXPECT_TRUE(fs::exists(models / "a3_T64" / "report.json"));

  const Result v = run_cli(base({"verify", "--model-dir", (models / "a3_T64").string()}));
  EXPECT_EQ(v.code, 0) << v.out << v.err;

  const Result roll = run_cli(base({"rollout", "--approach", "a3", "--scenario", "approach_45", "--duration", "2"}));
  EXPECT_EQ(roll.code, 0) << roll.err;
  const fs::path trace = fs::path(out_) / "rollouts" / "a3_approach_45_s11.jsonl";
  ASSERT_TRUE(fs::exists(trace));
  EXPECT_EQ(count_lines(trace), 61u);
  const Result vt = run_cli(base({"verify", "--trace", trace.string()}));
  EXPECT_EQ(vt.code, 0) << vt.out << vt.err;
}

TEST_F(Cli, TrainRejectsGroundTruthAndOversizedT) {
  EXPECT_EQ(run_cli(base({"train", "--approach", "gt", "--T", "64"})).code, 1);
  const Result r = run_cli(base({"train", "--approach", "a1", "--T", "100000"}));
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("exceeds"), std::string::npos);
  EXPECT_FALSE(fs::exists(fs::path(out_) / "models" / "a1_T100000"));
}

TEST_F(Cli, RolloutUnknownScenarioWritesNothing) {
  cli::TempDir fresh("cli-roll");
  const Result r = run_cli({"--config", cfg_, "--out", fresh.path.string(), "rollout", "--approach", "gt",
                            "--scenario", "approach_30"});
  EXPECT_NE(r.code, 0);
  EXPECT_NE(r.err.find("unknown scenario"), std::string::npos);
  EXPECT_FALSE(fs::exists(fresh.path / "rollouts"));

  const Result m = run_cli({"--config", cfg_, "--out", fresh.path.string(), "rollout", "--approach", "a2",
                            "--scenario", "still"});
  EXPECT_NE(m.code, 0);
  EXPECT_FALSE(fs::exists(fresh.path / "rollouts"));
}

TEST_F(Cli, GroundTruthRolloutsAndTraceVerification) {
  const Result r =
      run_cli(base({"rollout", "--approach", "gt", "--scenario", "scripted:0.5", "--runs", "2", "--duration", "3"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path dir = fs::path(out_) / "rollouts";
  EXPECT_TRUE(fs::exists(dir / "gt_scripted-0.500000_s11.jsonl"));
  EXPECT_TRUE(fs::exists(dir / "gt_scripted-0.500000_s12.jsonl"));
  EXPECT_EQ(count_lines(dir / "metrics_gt_scripted-0.500000.csv"), 3u);
  const Result v = run_cli(base({"verify", "--trace", (dir / "gt_scripted-0.500000_s12.jsonl").string()}));
  EXPECT_EQ(v.code, 0) << v.out;

  // Same trace, different config: refused rather than silently compared.
  const Result other = run_cli({"--out", out_, "verify", "--trace", (dir / "gt_scripted-0.500000_s12.jsonl").string()});
  EXPECT_EQ(other.code, 2);
}

TEST_F(Cli, SweepWritesTables) {
  const Result r = run_cli(base({"sweep"}));
  ASSERT_EQ(r.code, 0) << r.err;
  const fs::path dir = fs::path(out_) / "sweep";
  EXPECT_EQ(count_lines(dir / "sweep.csv"), 1u + 12);
  EXPECT_EQ(count_lines(dir / "plot.csv"), 1u + 12);
  EXPECT_TRUE(fs::exists(dir / "meta.json"));
}

TEST(CliArgs, UsageErrors) {
  EXPECT_NE(run_cli({}).code, 0);
  EXPECT_NE(run_cli({"fly"}).code, 0);
  EXPECT_NE(run_cli({"train", "--approach", "a1"}).code, 0);
  EXPECT_NE(run_cli({"--config", "/nonexistent.json", "gen-data"}).code, 0);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}
