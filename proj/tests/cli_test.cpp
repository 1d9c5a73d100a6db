#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "vtf/cli.hpp"

using namespace vtf;

namespace {

struct TempDir {
  fs::path path;

  TempDir() {
    std::random_device rd;
    path = fs::temp_directory_path() / ("vtf_cli_test_" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }

  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

struct Run {
  int code = -1;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "vtfpar");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string read(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

std::vector<std::string> tiny_data(const TempDir& dir, const std::string& name = "data") {
  return {"gen-data", "--out", dir / name, "--count", "16", "--frames", "2", "--height", "8", "--width", "4"};
}

}  // namespace

TEST(Cli, NoSubcommandIsUsage) { EXPECT_EQ(run({}).code, exit_code::usage); }

TEST(Cli, UnknownFlagIsUsage) {
  EXPECT_EQ(run({"dump-prompts", "--bogus"}).code, exit_code::usage);
  EXPECT_EQ(run({"frobnicate"}).code, exit_code::usage);
}

TEST(Cli, HelpIsOk) { EXPECT_EQ(run({"--help"}).code, exit_code::ok); }

TEST(Cli, DumpPromptsOneLinePerClass) {
  const auto r = run({"dump-prompts"});
  EXPECT_EQ(r.code, exit_code::ok);
  EXPECT_EQ(lines(r.out), 43u);
  EXPECT_NE(r.out.find("Age ≤ 40\tage less than 40\tthe pedestrian has an attribute age less than 40\n"),
            std::string::npos);
  EXPECT_EQ(run({"dump-prompts"}).out, r.out);
}

TEST(Cli, DumpPromptsCustomSchema) {
  TempDir dir;
  std::ofstream(dir / "s.yaml") << "groups:\n  - name: hat\n    kind: binary\n    classes:\n      - {name: yes, raw: hat}\n";
  const auto r = run({"dump-prompts", "--schema", dir / "s.yaml"});
  EXPECT_EQ(r.code, exit_code::ok);
  EXPECT_EQ(r.out, "hat\that\tthe pedestrian has an attribute hat\n");
}

TEST(Cli, BadSchemaIsDataError) {
  TempDir dir;
  std::ofstream(dir / "s.yaml") << "groups: 3\n";
  EXPECT_EQ(run({"dump-prompts", "--schema", dir / "s.yaml"}).code, exit_code::data);
  EXPECT_EQ(run({"dump-prompts", "--schema", dir / "missing.yaml"}).code, exit_code::data);
}

TEST(Cli, GenDataPrintsManifestAndRepeats) {
  TempDir dir;
  auto r = run(tiny_data(dir, "a"));
  ASSERT_EQ(r.code, exit_code::ok) << r.err;
  EXPECT_EQ(r.out, (fs::path(dir / "a") / "manifest.yaml").string() + "\n");
  ASSERT_EQ(run(tiny_data(dir, "b")).code, exit_code::ok);
  EXPECT_EQ(read(dir / "a/manifest.yaml"), read(dir / "b/manifest.yaml"));
  EXPECT_EQ(read(dir / "a/train/train_000003/000001.vtf"), read(dir / "b/train/train_000003/000001.vtf"));
}

TEST(Cli, GenDataBadSplitIsUsage) {
  TempDir dir;
  auto args = tiny_data(dir);
  args.insert(args.end(), {"--split", "1.5"});
  const auto r = run(args);
  EXPECT_EQ(r.code, exit_code::usage);
  EXPECT_NE(r.err.find("split"), std::string::npos);
}

TEST(Cli, TrainMissingDatasetIsDataError) {
  TempDir dir;
  EXPECT_EQ(run({"train", "--data", dir / "nope", "--out", dir / "run"}).code, exit_code::data);
}

TEST(Cli, TrainOneEpochThenEval) {
  TempDir dir;
  ASSERT_EQ(run(tiny_data(dir)).code, exit_code::ok);
  const auto r = run({"train", "--data", dir / "data", "--out", dir / "run", "--epochs", "1"});
  ASSERT_EQ(r.code, exit_code::ok) << r.err;
  EXPECT_EQ(lines(read(dir / "run/train_log.tsv")), 2u);
  EXPECT_TRUE(fs::exists(dir / "run/model.vtfp"));
  EXPECT_NE(r.out.find("checkpoint\t"), std::string::npos);
  EXPECT_EQ(load_run_config(dir / "run/config.yaml").train.epochs, 1u);

  const auto e = run({"eval", "--data", dir / "data", "--checkpoint", dir / "run/model.vtfp"});
  ASSERT_EQ(e.code, exit_code::ok) << e.err;
  EXPECT_EQ(lines(e.out), 16u);
  EXPECT_EQ(e.out.rfind("MACRO\t", 0), e.out.npos);
  EXPECT_NE(e.out.find("\nMACRO\t"), std::string::npos);
  EXPECT_EQ(read(dir / "run/eval_test.tsv"), e.out);
  EXPECT_TRUE(fs::exists(dir / "run/eval_test.yaml"));
}

TEST(Cli, CheckpointEveryWritesIntermediate) {
  TempDir dir;
  ASSERT_EQ(run(tiny_data(dir)).code, exit_code::ok);
  ASSERT_EQ(
      run({"train", "--data", dir / "data", "--out", dir / "run", "--epochs", "2", "--checkpoint-every", "1"}).code,
      exit_code::ok);
  EXPECT_TRUE(fs::exists(dir / "run/model_epoch1.vtfp"));
  EXPECT_FALSE(fs::exists(dir / "run/model_epoch2.vtfp"));
}

TEST(Cli, NoFusionCheckpointHasNoFusionBlocks) {
  TempDir dir;
  ASSERT_EQ(run(tiny_data(dir)).code, exit_code::ok);
  ASSERT_EQ(run({"train", "--data", dir / "data", "--out", dir / "run", "--epochs", "1", "--no-fusion"}).code,
            exit_code::ok);
  const auto state = load_checkpoint(dir / "run/model.vtfp");
  EXPECT_TRUE(state.count("fusion_fc.weight"));
  for (const auto& [name, t] : state) EXPECT_NE(name.rfind("fusion.blocks", 0), 0u) << name;
  EXPECT_EQ(run({"eval", "--data", dir / "data", "--checkpoint", dir / "run/model.vtfp"}).code, exit_code::ok);
}

TEST(Cli, EvalShapeMismatchIsDataError) {
  TempDir dir;
  ASSERT_EQ(run(tiny_data(dir)).code, exit_code::ok);
  ASSERT_EQ(run({"train", "--data", dir / "data", "--out", dir / "run", "--epochs", "1"}).code, exit_code::ok);
  std::ofstream(dir / "wide.yaml") << "vision: {dim: 128}\n";
  const auto r =
      run({"eval", "--data", dir / "data", "--checkpoint", dir / "run/model.vtfp", "--config", dir / "wide.yaml"});
  EXPECT_EQ(r.code, exit_code::data);
}

TEST(Cli, EvalNeedsOneModelSource) {
  TempDir dir;
  ASSERT_EQ(run(tiny_data(dir)).code, exit_code::ok);
  EXPECT_EQ(run({"eval", "--data", dir / "data"}).code, exit_code::usage);
  EXPECT_EQ(run({"eval", "--data", dir / "data", "--split", "val", "--init-seed", "1"}).code, exit_code::usage);
}

TEST(Cli, ConfigPrecedence) {
  TempDir dir;
  std::ofstream(dir / "c.yaml") << "train: {epochs: 3, lr: 0.01}\n";
  cli::RunOverrides o;
  o.config = dir / "c.yaml";
  EXPECT_EQ(o.resolve().train.epochs, 3u);
  EXPECT_EQ(o.resolve().train.lr, 0.01);
  o.epochs = 5;
  EXPECT_EQ(o.resolve().train.epochs, 5u);
  EXPECT_EQ(o.resolve().train.lr, 0.01);
  EXPECT_EQ(cli::RunOverrides{}.resolve().train.epochs, 20u);
}

TEST(Cli, UnknownConfigKeyIsDataError) {
  TempDir dir;
  ASSERT_EQ(run(tiny_data(dir)).code, exit_code::ok);
  std::ofstream(dir / "c.yaml") << "train:\n  epochs: 1\n  momentum: 0.9\n";
  const auto r = run({"train", "--data", dir / "data", "--out", dir / "run", "--config", dir / "c.yaml"});
  EXPECT_EQ(r.code, exit_code::data);
  EXPECT_NE(r.err.find(":3"), std::string::npos);
}

TEST(Cli, AblateFramesOneRowPerCount) {
  TempDir dir;
  ASSERT_EQ(run(tiny_data(dir)).code, exit_code::ok);
  const auto r = run({"ablate-frames", "--data", dir / "data", "--frame-counts", "1,2", "--epochs", "1", "--out",
                      dir / "ablate.tsv"});
  ASSERT_EQ(r.code, exit_code::ok) << r.err;
  EXPECT_EQ(lines(r.out), 3u);
  EXPECT_EQ(r.out.rfind("frames\tprecision\trecall\tf1\n1\t", 0), 0u);
  EXPECT_EQ(read(dir / "ablate.tsv"), r.out);
}

TEST(Cli, RandomCheckpointStaysAtChance) {
  TempDir dir;
  std::string schema = "groups:\n";
  for (const char* raw : {"hat", "backpack", "glasses", "umbrella", "scarf", "boots", "gloves", "jacket"}) {
    schema += std::string("  - name: ") + raw + "\n    kind: binary\n    classes:\n      - {name: yes, raw: " + raw + "}\n";
  }
  std::ofstream(dir / "binary.yaml") << schema;
  ASSERT_EQ(run({"gen-data", "--out", dir / "data", "--schema", dir / "binary.yaml", "--count", "100"}).code,
            exit_code::ok);
  for (int seed = 1; seed <= 5; ++seed) {
    const auto r = run({"eval", "--data", dir / "data", "--init-seed", std::to_string(seed), "--report",
                        dir / ("r" + std::to_string(seed) + ".tsv")});
    ASSERT_EQ(r.code, exit_code::ok) << r.err;
    const auto macro = r.out.substr(r.out.find("MACRO\t"));
    std::istringstream row(macro);
    std::string tag;
    double p = 0, rc = 0, f1 = 0;
    row >> tag >> p >> rc >> f1;
    EXPECT_GE(f1, 0.0) << seed;
    EXPECT_LE(f1, 0.7) << seed;
  }
}

TEST(Cli, GradcheckPassesAndDetectsCorruption) {
  const auto ok = run({"gradcheck"});
  EXPECT_EQ(ok.code, exit_code::ok);
  EXPECT_NE(ok.out.find("gradcheck\tPASS\n"), std::string::npos);
  EXPECT_EQ(lines(ok.out), 21u);

  const auto bad = run({"gradcheck", "--corrupt", "softmax"});
  EXPECT_EQ(bad.code, exit_code::verification);
  EXPECT_NE(bad.out.find("gradcheck\tFAIL\n"), std::string::npos);
  EXPECT_FALSE(vtf::testing::backward_fault().has_value());

  EXPECT_EQ(run({"gradcheck", "--corrupt", "nonsense"}).code, exit_code::usage);
}
