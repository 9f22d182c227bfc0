#include <gtest/gtest.h>

#include <cstdlib>
#include <sys/wait.h>

#include "support.hpp"

using namespace mtmd;
using namespace mtmd::test;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd =
      std::string(MTMD_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, read_file(out), read_file(err)};
}

/// Generates a small market and a matching train config in `dir`.
void setup(const fs::path& dir, double learning_rate = 1e-3) {
  write_file(dir / "spec.json", R"({"n_stocks": 6, "n_concepts": 3, "n_dates": 80, "seed": 2})");
  const Json cfg = {{"learning_rate", learning_rate},
                    {"epochs", 2},
                    {"seed", 4},
                    {"model", {{"hidden", 4}, {"slots", 4}}},
                    {"data", {{"panel", "data/panel.csv"}, {"concepts", "data/concepts.csv"}}},
                    {"output_dir", "run"},
                    {"ablation_seeds", {0}}};
  write_file(dir / "cfg.json", cfg.dump(2));
  ASSERT_EQ(run("gen-data --spec " + (dir / "spec.json").string() + " --out " + (dir / "data").string(), dir).code, 0);
}

}  // namespace

TEST(Cli, EndToEndWorkflow) {
  const fs::path dir = temp_dir("cli_flow");
  setup(dir);
  for (const char* f : {"panel.csv", "concepts.csv", "membership.csv", "factors.csv"})
    EXPECT_TRUE(fs::exists(dir / "data" / f)) << f;

  const Outcome tr = run("train --config " + (dir / "cfg.json").string(), dir);
  ASSERT_EQ(tr.code, 0) << tr.err;
  EXPECT_NE(tr.err.find("epoch   2"), std::string::npos) << tr.err;
  const fs::path ckpt = dir / "run" / "checkpoint.bin";
  ASSERT_TRUE(fs::exists(ckpt));
  const Json log = Json::parse(read_file(dir / "run" / "log.json"));
  EXPECT_EQ(log.at("epochs").size(), 3u);

  const Outcome ev = run("eval --checkpoint " + ckpt.string() + " --split test --report " + (dir / "r.csv").string(), dir);
  ASSERT_EQ(ev.code, 0) << ev.err;
  EXPECT_EQ(ev.out.rfind("Methods", 0), 0u);
  EXPECT_EQ(read_file(dir / "r.csv").rfind("date,ic,rank_ic,p3,p5,p10,p30\n", 0), 0u);

  // Same data through the library gives the same report.
  const Checkpoint c = load_checkpoint(ckpt);
  const Dataset data = load_dataset(config_from_checkpoint(c).data);
  EXPECT_EQ(read_file(dir / "r.csv"), report_csv(evaluate(c, data, Split::test)));

  const Outcome ex = run("export-embeddings --checkpoint " + ckpt.string() + " --out " + (dir / "e.csv").string(), dir);
  ASSERT_EQ(ex.code, 0) << ex.err;
  EXPECT_EQ(read_file(dir / "e.csv").rfind("date,stock_id,stage,d0,d1,d2,d3\n", 0), 0u);
}

TEST(Cli, SeedOverrideChangesCheckpoint) {
  const fs::path dir = temp_dir("cli_seed");
  setup(dir);
  ASSERT_EQ(run("train --config " + (dir / "cfg.json").string(), dir).code, 0);
  const std::string a = read_file(dir / "run" / "checkpoint.bin");
  ASSERT_EQ(run("train --config " + (dir / "cfg.json").string() + " --seed 4", dir).code, 0);
  EXPECT_EQ(read_file(dir / "run" / "checkpoint.bin"), a);
  ASSERT_EQ(run("train --config " + (dir / "cfg.json").string() + " --seed 5", dir).code, 0);
  EXPECT_NE(read_file(dir / "run" / "checkpoint.bin"), a);
}

TEST(Cli, Ablate) {
  const fs::path dir = temp_dir("cli_ablate");
  setup(dir);
  const Outcome ab = run("ablate --config " + (dir / "cfg.json").string() + " --out " + (dir / "t.txt").string(), dir);
  ASSERT_EQ(ab.code, 0) << ab.err;
  EXPECT_EQ(read_file(dir / "t.txt"), ab.out);
  for (const char* l : {"\nB ", "\nP ", "\nH ", "\nA "}) EXPECT_NE(ab.out.find(l), std::string::npos) << l;
}

TEST(Cli, UsageErrorsExitOne) {
  const fs::path dir = temp_dir("cli_usage");
  EXPECT_EQ(run("", dir).code, 1);
  EXPECT_EQ(run("frobnicate", dir).code, 1);
  EXPECT_EQ(run("train", dir).code, 1);
  EXPECT_EQ(run("--help", dir).code, 0);
  setup(dir);
  write_file(dir / "bad.json", R"({"learning_rate": -1})");
  EXPECT_EQ(run("train --config " + (dir / "bad.json").string(), dir).code, 1);
  ASSERT_EQ(run("train --config " + (dir / "cfg.json").string(), dir).code, 0);
  EXPECT_EQ(run("eval --checkpoint " + (dir / "run" / "checkpoint.bin").string() + " --split holdout", dir).code, 1);
}

TEST(Cli, DataErrorsExitTwo) {
  const fs::path dir = temp_dir("cli_data");
  setup(dir);
  fs::remove(dir / "data" / "panel.csv");
  const Outcome tr = run("train --config " + (dir / "cfg.json").string(), dir);
  EXPECT_EQ(tr.code, 2);
  EXPECT_NE(tr.err.find("panel.csv"), std::string::npos) << tr.err;
  write_file(dir / "junk.bin", "not a checkpoint");
  EXPECT_EQ(run("eval --checkpoint " + (dir / "junk.bin").string(), dir).code, 2);
  write_file(dir / "broken.json", "{");
  EXPECT_EQ(run("train --config " + (dir / "broken.json").string(), dir).code, 2);
  write_file(dir / "badspec.json", R"({"n_stocks": 0})");
  EXPECT_EQ(run("gen-data --spec " + (dir / "badspec.json").string() + " --out " + (dir / "x").string(), dir).code, 2);
}

TEST(Cli, DivergenceExitsThree) {
  const fs::path dir = temp_dir("cli_numeric");
  setup(dir, 1e150);
  const Outcome tr = run("train --config " + (dir / "cfg.json").string(), dir);
  EXPECT_EQ(tr.code, 3) << tr.err;
  EXPECT_NE(tr.err.find("non-finite"), std::string::npos) << tr.err;
}

TEST(Cli, SampleConfigsLoad) {
  const fs::path root = MTMD_SOURCE_DIR;
  const TrainConfig desk = load_train_config(root / "samples" / "desk.json");
  EXPECT_EQ(desk.model.hidden, 16u);
  EXPECT_EQ(desk.model.slots, 8u);
  EXPECT_EQ(desk.ablation_seeds.size(), 5u);
  EXPECT_EQ(fs::path(desk.data.panel), (root / "data" / "panel.csv").lexically_normal());
  const SyntheticSpec spec = synthetic_spec_from_json(Json::parse(read_file(root / "samples" / "synthetic.json")));
  EXPECT_EQ(to_json(spec).dump(), to_json(SyntheticSpec{.seed = 7}).dump());
}
