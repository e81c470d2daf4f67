// SPDX-License-Identifier: Apache-2.0
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "nvdp/cli.hpp"

using namespace nvdp;
using namespace nvdp::cli;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "nvdp");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out;
  std::ostringstream err;
  Outcome o;
  o.code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  return nlohmann::json::parse(in);
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    root_ = fs::temp_directory_path() /
            ("nvdp_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(root_);
    fs::create_directories(root_);
  }
  void TearDown() override { fs::remove_all(root_); }

  // Small network and short runs so every command finishes quickly.
  std::vector<std::string> small(std::vector<std::string> args) const {
    for (const char* s : {"run.runs_dir=", "model.d_r=8", "model.d_z=8", "model.encoder_depth=2",
                          "model.decoder_hidden=8,8", "model.meta_hidden=8",
                          "tasks.eval_points=120", "train.eval_tasks=2"}) {
      args.push_back("--set");
      args.push_back(std::string(s) + (std::string(s) == "run.runs_dir=" ? root_.string() : ""));
    }
    return args;
  }

  fs::path train_small(const std::string& kind, const std::string& id) {
    const Outcome o = run_cli(small({"train", "--model", kind, "--iterations", "3", "--run-id", id}));
    EXPECT_EQ(o.code, kExitOk) << o.err;
    return root_ / id / "checkpoints" / "step-3.ckpt";
  }

  fs::path root_;
};

}  // namespace

TEST(CliConfig, DefaultsFollowTheTrainingProtocol) {
  const RunConfig c = RunConfig::from_flat({});
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 5e-4);
  EXPECT_EQ(c.train.batch_size, 16u);
  EXPECT_EQ(c.train.iterations, 50000);
  EXPECT_EQ(c.train.kl_scale, KlScale::per_point);
  EXPECT_EQ(c.model.kind, ModelKind::nvdp);
  EXPECT_EQ(c.model.d_r, 64);
  EXPECT_EQ(c.model.decoder_hidden, (std::vector<int>{64, 64}));
  EXPECT_EQ(c.eval.n_tasks, 1000u);
  EXPECT_EQ(c.eval.n_samples, 16);
  EXPECT_EQ(c.tasks.eval_points, 400u);
  EXPECT_EQ(c.active.n_acquire, 19);
}

TEST(CliConfig, IniAndOverridesCompose) {
  FlatConfig f = parse_config_text("# comment\n[model]\nkind = np\n[train]\nlearning_rate = 1e-3\n");
  apply_override(f, "train.learning_rate=2e-3");
  const RunConfig c = RunConfig::from_flat(f);
  EXPECT_EQ(c.model.kind, ModelKind::np);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 2e-3);
  EXPECT_FALSE(c.model.meta_activate_output);
  apply_override(f, "model.meta_activate_output=true");
  apply_override(f, "train.kl_scale=per_task");
  const RunConfig d = RunConfig::from_flat(f);
  EXPECT_TRUE(d.model.meta_activate_output);
  EXPECT_EQ(d.train.kl_scale, KlScale::per_task);
  EXPECT_THROW(apply_override(f, "no_equals_sign"), ConfigError);
}

TEST(CliConfig, UnknownKeysAndBadValuesNameTheField) {
  try {
    RunConfig::from_flat({{"train.lr", "1"}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.lr"), std::string::npos);
  }
  try {
    RunConfig::from_flat({{"train.batch_size", "many"}});
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.batch_size"), std::string::npos);
  }
  EXPECT_THROW(RunConfig::from_flat({{"train.kl_scale", "sometimes"}}), ConfigError);
  const auto keys = known_keys();
  EXPECT_TRUE(std::is_sorted(keys.begin(), keys.end()));
}

TEST_F(CliTest, UnknownModelKindExitsWithUsageCodeAndListsKinds) {
  const Outcome o = run_cli(small({"train", "--model", "gpt", "--iterations", "1"}));
  EXPECT_EQ(o.code, kExitUsage);
  for (const char* k : {"nvdp", "np", "np-vp", "cnp", "np-cnp", "np-cnp-vp"}) {
    EXPECT_NE(o.err.find(k), std::string::npos) << k;
  }
}

TEST_F(CliTest, MissingSubcommandOrFlagIsUsageError) {
  EXPECT_EQ(run_cli({}).code, kExitUsage);
  EXPECT_EQ(run_cli({"eval"}).code, kExitUsage);
  EXPECT_EQ(run_cli({"train", "--bogus"}).code, kExitUsage);
  EXPECT_EQ(run_cli({"--version"}).code, kExitOk);
}

TEST_F(CliTest, TrainWritesRunDirectory) {
  const fs::path ckpt = train_small("nvdp", "t1");
  EXPECT_TRUE(fs::exists(ckpt));
  EXPECT_TRUE(fs::exists(root_ / "t1" / "train_log.csv"));
  EXPECT_TRUE(fs::exists(root_ / "t1" / "metrics.csv"));
  const auto m = manifest(root_ / "t1");
  EXPECT_EQ(m["status"], "ok");
  EXPECT_EQ(m["config"]["train"]["learning_rate"], 5e-4);
  EXPECT_FALSE(m["version"].get<std::string>().empty());
  EXPECT_EQ(m["checkpoints"].size(), 1u);
}

TEST_F(CliTest, EvalIsDeterministicAndHonoursTaskCount) {
  const fs::path ckpt = train_small("nvdp", "t2");
  const Outcome a = run_cli(small({"eval", "--checkpoint", ckpt.string(), "--n-tasks", "3",
                                   "--run-id", "e1"}));
  const Outcome b = run_cli(small({"eval", "--checkpoint", ckpt.string(), "--n-tasks", "3",
                                   "--run-id", "e2"}));
  ASSERT_EQ(a.code, kExitOk) << a.err;
  ASSERT_EQ(b.code, kExitOk) << b.err;
  EXPECT_EQ(manifest(root_ / "e1")["tasks_consumed"], 3);
  EXPECT_EQ(manifest(root_ / "e1")["metrics"]["task_count"], 3);
  EXPECT_EQ(manifest(root_ / "e1")["metrics"]["ll"], manifest(root_ / "e2")["metrics"]["ll"]);
  const auto rows = read_results_csv(root_ / "e1" / "metrics.csv");
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].model, "nvdp");
}

TEST_F(CliTest, CheckpointKindMismatchIsUsageError) {
  const fs::path ckpt = train_small("cnp", "t3");
  const Outcome o = run_cli(small({"eval", "--checkpoint", ckpt.string(), "--model", "nvdp",
                                   "--n-tasks", "1", "--run-id", "e3"}));
  EXPECT_EQ(o.code, kExitUsage);
  EXPECT_EQ(manifest(root_ / "e3")["status"], "failed");
}

TEST_F(CliTest, FailedRunStillWritesManifest) {
  const Outcome o = run_cli(small({"eval", "--checkpoint", (root_ / "missing.ckpt").string(),
                                   "--run-id", "e4"}));
  EXPECT_NE(o.code, kExitOk);
  const auto m = manifest(root_ / "e4");
  EXPECT_EQ(m["status"], "failed");
  EXPECT_FALSE(m["error"].get<std::string>().empty());
}

TEST_F(CliTest, ActiveLearnWritesBothRulesPerStep) {
  const fs::path ckpt = train_small("nvdp", "t5");
  const Outcome o = run_cli(small({"active-learn", "--checkpoint", ckpt.string(), "--n-tasks",
                                   "2", "--set", "active.realizations=2", "--set",
                                   "active.metric_samples=2", "--run-id", "a1"}));
  ASSERT_EQ(o.code, kExitOk) << o.err;
  const auto rows = read_results_csv(root_ / "a1" / "active.csv");
  EXPECT_EQ(rows.size(), 2u * 20u * 2u);
  std::size_t random_rows = 0;
  for (const auto& r : rows) random_rows += r.model == "nvdp+random" ? 1 : 0;
  EXPECT_EQ(random_rows, 40u);
}

TEST_F(CliTest, GenTasksIsSeeded) {
  ASSERT_EQ(run_cli(small({"gen-tasks", "--n-tasks", "4", "--seed", "9", "--run-id", "g1"})).code,
            kExitOk);
  ASSERT_EQ(run_cli(small({"gen-tasks", "--n-tasks", "4", "--seed", "9", "--run-id", "g2"})).code,
            kExitOk);
  const std::string a = slurp(root_ / "g1" / "tasks.jsonl");
  EXPECT_EQ(a, slurp(root_ / "g2" / "tasks.jsonl"));
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 4);
}
