#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <set>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "relay/harness/checkpoint.hpp"
#include "relay/harness/config.hpp"
#include "relay/harness/experiments.hpp"
#include "relay/harness/metrics.hpp"
#include "scripted_policies.hpp"

namespace fs = std::filesystem;
using namespace relay;
using namespace relay::harness;
using scripted::ScriptedWorld;

namespace {

policyopt::Policy trained_looking_policy(std::uint64_t seed, bool with_switch) {
  auto p = composer::fresh_policy(seed, with_switch, with_switch);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(1.0, 3.0);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> x(terrainsim::kObservationSize);
    for (auto& v : x) v = nd(rng);
    p.normalizer().update(x);
  }
  return p;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("relay_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<char>& b) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  f.write(b.data(), static_cast<std::streamsize>(b.size()));
}

std::string format_error(const std::vector<char>& bytes) {
  try {
    decode_checkpoint(bytes, "ck");
  } catch (const FormatError& e) {
    return e.what();
  }
  return {};
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream f(p);
  std::size_t n = 0;
  for (std::string line; std::getline(f, line);) ++n;
  return n;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + RELAY_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string csv_for(const ScriptedWorld& w, std::uint64_t hash) {
  std::ostringstream out;
  MetricsCsv csv(out, hash);
  auto eps = composer::evaluate_composed(w.ensemble, terrainsim::jump_course(), {}, 20,
                                         {composer::SwitchMode::kSetup, {}, true});
  for (std::size_t i = 0; i < eps.size(); ++i) csv.write(metrics_row(0, "setup", "jump", eps[i]), i);
  return out.str();
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  for (bool sw : {false, true}) {
    auto p = trained_looking_policy(7, sw);
    const auto bytes = encode_checkpoint(p, 0x1234abcdULL);
    auto ck = decode_checkpoint(bytes);
    EXPECT_TRUE(ck.policy == p);
    EXPECT_EQ(ck.config_hash, 0x1234abcdULL);
    EXPECT_EQ(encode_checkpoint(ck.policy, 0x1234abcdULL), bytes);
  }
}

TEST(Checkpoint, FileRoundTripAndScriptedShapes) {
  auto dir = scratch("roundtrip");
  ScriptedWorld w;
  for (const policyopt::Policy* p : {static_cast<const policyopt::Policy*>(&w.walk), w.module.target.get(),
                                     static_cast<const policyopt::Policy*>(&w.module.setup)}) {
    save_checkpoint((dir / "p.rbpc").string(), *p, 5);
    EXPECT_TRUE(load_checkpoint((dir / "p.rbpc").string()).policy == *p);
  }
}

TEST(Checkpoint, HeaderLayout) {
  auto p = trained_looking_policy(1, true);
  const auto bytes = encode_checkpoint(p, 0x0102030405060708ULL);
  ASSERT_GT(bytes.size(), 21u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "RBPC");
  EXPECT_EQ(bytes[4], 1);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[8], 0x08);
  EXPECT_EQ(bytes[15], 0x01);
  EXPECT_EQ(bytes[16], 1);
  EXPECT_EQ(static_cast<std::size_t>(bytes[17]), p.net().parameters().size());
}

TEST(Checkpoint, TruncationIsFormatErrorWithoutMutation) {
  auto dir = scratch("truncate");
  auto p = trained_looking_policy(2, true);
  const auto bytes = encode_checkpoint(p, 9);
  for (std::size_t len : {std::size_t{0}, std::size_t{3}, std::size_t{10}, std::size_t{40}, bytes.size() / 2,
                          bytes.size() - 1}) {
    std::vector<char> cut(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(len));
    EXPECT_THROW(decode_checkpoint(cut), FormatError) << len;
    write_bytes(dir / "cut.rbpc", cut);
    auto dst = trained_looking_policy(3, false);
    const auto before = dst;
    EXPECT_THROW(load_checkpoint_into(dst, (dir / "cut.rbpc").string()), FormatError);
    EXPECT_TRUE(dst == before);
  }
}

TEST(Checkpoint, BadMagicAndTrailingBytes) {
  auto bytes = encode_checkpoint(trained_looking_policy(2, false), 0);
  auto bad = bytes;
  bad[0] = 'X';
  EXPECT_NE(format_error(bad).find("bad magic"), std::string::npos);
  auto longer = bytes;
  longer.push_back(0);
  EXPECT_NE(format_error(longer).find("trailing bytes"), std::string::npos);
}

TEST(Checkpoint, UnknownVersionRejected) {
  auto bytes = encode_checkpoint(trained_looking_policy(2, false), 0);
  bytes[4] = 2;
  EXPECT_EQ(format_error(bytes), "ck: unsupported checkpoint version 2 (expected 1)");
}

TEST(Checkpoint, HashMismatchWarnsOnly) {
  auto dir = scratch("hash");
  auto p = trained_looking_policy(4, false);
  save_checkpoint((dir / "p.rbpc").string(), p, 1);
  std::ostringstream warn;
  auto ck = load_checkpoint((dir / "p.rbpc").string(), 2, &warn);
  EXPECT_TRUE(ck.policy == p);
  EXPECT_NE(warn.str().find("config hash"), std::string::npos);
  std::ostringstream quiet;
  load_checkpoint((dir / "p.rbpc").string(), 1, &quiet);
  EXPECT_TRUE(quiet.str().empty());
}

TEST(Checkpoint, MissingFileNamesPath) {
  try {
    load_checkpoint("/nonexistent/dir/walk.rbpc");
    FAIL();
  } catch (const InvalidInput& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/dir/walk.rbpc"), std::string::npos);
  }
}

TEST(Config, ParsesKeysCommentsAndLists) {
  std::istringstream in(
      "# experiment\n"
      "seeds = 0, 1, 2\n"
      "kinds = block,hurdle\n"
      "\n"
      "setup_budget = 1500000  # steps\n"
      "awtv_alpha = 0.2\n"
      "rewards = awtv,target-value\n");
  auto cfg = parse_config(in, "exp.cfg");
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{0, 1, 2}));
  EXPECT_EQ(cfg.kinds, (std::vector<terrainsim::ArtifactKind>{terrainsim::ArtifactKind::kBlock,
                                                               terrainsim::ArtifactKind::kHurdle}));
  EXPECT_EQ(cfg.setup_budget, 1'500'000u);
  EXPECT_EQ(cfg.awtv.alpha, 0.2);
  EXPECT_EQ(cfg.rewards.size(), 2u);
}

TEST(Config, UnknownKeysAndBadValuesNameTheLine) {
  auto err = [](const std::string& text) {
    std::istringstream in(text);
    try {
      parse_config(in, "exp.cfg");
    } catch (const InvalidInput& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_EQ(err("seeds = 1\nbogus = 3\n"), "exp.cfg:2: unknown config key 'bogus'");
  EXPECT_NE(err("setup_budget = lots\n").find("exp.cfg:1:"), std::string::npos);
  EXPECT_NE(err("kinds = ramp\n").find("unknown artifact kind 'ramp'"), std::string::npos);
  EXPECT_NE(err("course = /nonexistent.course\n").find("does not exist"), std::string::npos);
  EXPECT_NE(err("no equals sign\n").find("exp.cfg:1: expected 'key = value'"), std::string::npos);
  EXPECT_NE(err("rewards = awtv,shiny\n").find("unknown reward 'shiny'"), std::string::npos);
}

TEST(Config, HashesTrackContent) {
  ExperimentConfig a, b;
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_EQ(a.canonical(), b.canonical());
  b.ppo.clip = 0.3;
  EXPECT_NE(a.hash(), b.hash());
  EXPECT_NE(a.policy_hash(), b.policy_hash());
  ExperimentConfig c;
  c.seeds = {0, 1, 2};
  c.experiment = "ablate";
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(a.policy_hash(), c.policy_hash());
  EXPECT_EQ(hash_hex(0xabcULL), "0000000000000abc");
  EXPECT_EQ(fnv1a(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a("a"), 0xaf63dc4c8601ec8cULL);
}

TEST(Metrics, RowsValidate) {
  MetricsRow r;
  r.distance = 1.5;
  EXPECT_THROW(r.validate(), InvalidInput);
  r.distance = 0.5;
  EXPECT_NO_THROW(r.validate());
  std::ostringstream out;
  MetricsCsv csv(out, 0xff);
  r.seed = 2;
  r.method = "setup";
  r.course = "block";
  r.steps = 10;
  r.switches = 3;
  r.failed_at = "block";
  csv.write(r, 4);
  EXPECT_EQ(out.str(), std::string(kMetricsHeader) + "\n00000000000000ff,2,setup,block,4,0,0.500000,10,3,block\n");
  EXPECT_EQ(csv.rows(), 1u);
}

TEST(Metrics, RerunsAreByteIdentical) {
  ScriptedWorld w;
  const auto a = csv_for(w, 42);
  const auto b = csv_for(w, 42);
  EXPECT_EQ(a, b);
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 21);
}

TEST(Metrics, SwitchEventsAreJsonLines) {
  ScriptedWorld w;
  auto ep = composer::run_composed_episode(w.ensemble, terrainsim::jump_course(), {}, 3,
                                           {composer::SwitchMode::kSetup, {}, false});
  std::ostringstream out;
  write_switch_events(out, 7, 1, "setup", 0, ep.events);
  std::istringstream in(out.str());
  std::size_t n = 0;
  for (std::string line; std::getline(in, line); ++n) {
    auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["method"], "setup");
    EXPECT_EQ(j["step"].get<int>(), ep.events[n].step);
    EXPECT_EQ(j["to"], policyopt::to_string(ep.events[n].to));
  }
  EXPECT_EQ(n, ep.events.size());
  EXPECT_GE(n, 3u);
}

TEST(Experiments, AblationArmsDifferOnlyInTreatment) {
  ScriptedWorld w;
  ExperimentConfig cfg;
  cfg.setup_budget = 0;
  Prerequisites pre;
  pre.walk = w.walk;
  pre.targets[0] = w.module.target;
  SetupVariant full;
  SetupVariant no_init;
  no_init.init_from_default = false;
  auto a = train_setup_arm(cfg, pre, terrainsim::ArtifactKind::kBlock, full);
  auto b = train_setup_arm(cfg, pre, terrainsim::ArtifactKind::kBlock, no_init);
  EXPECT_TRUE(a.module.setup.net() == w.walk.net());
  EXPECT_FALSE(b.module.setup.net() == w.walk.net());
  EXPECT_TRUE(b.module.setup.uses_switch());
  EXPECT_TRUE(a.curve.empty());
}

TEST(Experiments, MissingTargetRejectedBeforeTraining) {
  ScriptedWorld w;
  ExperimentConfig cfg;
  Prerequisites pre;
  pre.walk = w.walk;
  EXPECT_THROW(run_ablation(cfg, pre), InvalidInput);
  EXPECT_THROW(run_reward_compare(cfg, pre), InvalidInput);
}

TEST(Experiments, RankingIsStableByDecreasingSuccess) {
  std::vector<ArmOutcome> arms(4);
  const char* names[] = {"a", "b", "c", "d"};
  const double succ[] = {10, 50, 50, 70};
  for (int i = 0; i < 4; ++i) {
    arms[i].arm = names[i];
    arms[i].success_pct = succ[i];
  }
  EXPECT_EQ(rank_arms(arms), (std::vector<std::string>{"d", "b", "c", "a"}));
}

TEST(Experiments, ShuffleIsSeededPermutation) {
  const std::vector<terrainsim::ArtifactKind> kinds{terrainsim::ArtifactKind::kBlock, terrainsim::ArtifactKind::kGap,
                                                    terrainsim::ArtifactKind::kHurdle};
  std::set<std::vector<terrainsim::ArtifactKind>> seen;
  for (std::uint64_t s = 0; s < 200; ++s) {
    auto k = shuffled_kinds(kinds, s);
    EXPECT_EQ(k, shuffled_kinds(kinds, s));
    EXPECT_TRUE(std::is_permutation(k.begin(), k.end(), kinds.begin()));
    seen.insert(k);
  }
  EXPECT_EQ(seen.size(), 6u);
}

TEST(Experiments, MultiTerrainFailureCountsAddUp) {
  ScriptedWorld w;
  std::vector<composer::BehaviorModule> mods;
  for (auto k : {terrainsim::ArtifactKind::kGap, terrainsim::ArtifactKind::kHurdle}) {
    auto m = w.module;
    m.kind = k;
    mods.push_back(m);
  }
  for (const auto& m : mods) w.ensemble.add(m);
  ExperimentConfig cfg;
  cfg.kinds = {terrainsim::ArtifactKind::kBlock, terrainsim::ArtifactKind::kGap, terrainsim::ArtifactKind::kHurdle};
  auto arms = run_multi_terrain(cfg, w.ensemble, 0, 60);
  ASSERT_EQ(arms.size(), 2u);
  EXPECT_EQ(arms[0].outcome.arm, "with-setup");
  EXPECT_EQ(arms[1].outcome.arm, "without-setup");
  for (const auto& a : arms) {
    ASSERT_EQ(a.outcome.rows.size(), 60u);
    int failed = 0;
    for (const auto& r : a.outcome.rows) failed += r.success ? 0 : 1;
    int counted = a.other_failures;
    for (const auto& [k, n] : a.failures) counted += n;
    EXPECT_EQ(counted, failed);
  }
  std::set<std::string> courses;
  for (const auto& r : arms[0].outcome.rows) courses.insert(r.course);
  EXPECT_GT(courses.size(), 1u);
}

TEST(Experiments, MissingModuleRejected) {
  ScriptedWorld w;
  ExperimentConfig cfg;
  cfg.kinds = {terrainsim::ArtifactKind::kBlock, terrainsim::ArtifactKind::kGap};
  EXPECT_THROW(run_multi_terrain(cfg, w.ensemble, 0, 1), InvalidInput);
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = scratch("cli");
    ExperimentConfig cfg;
    const auto h = cfg.policy_hash();
    save_checkpoint((dir_ / "walk.rbpc").string(), w_.walk, h);
    for (const char* k : {"block", "gap", "hurdle"}) {
      save_checkpoint((dir_ / (std::string("target-") + k + ".rbpc")).string(), *w_.module.target, h);
      save_checkpoint((dir_ / (std::string("setup-") + k + ".rbpc")).string(), w_.module.setup, h);
    }
  }
  ScriptedWorld w_;
  fs::path dir_;
};

TEST_F(CliTest, TrainSetupWithZeroBudgetCopiesWalk) {
  fs::remove(dir_ / "setup-block.rbpc");
  ASSERT_EQ(run_cli("train-setup --budget 0 --checkpoints " + dir_.string() + " --out " + dir_.string()), 0);
  auto setup = load_checkpoint((dir_ / "setup-block.rbpc").string()).policy;
  EXPECT_TRUE(setup.net() == w_.walk.net());
  EXPECT_TRUE(setup.normalizer() == w_.walk.normalizer());
  EXPECT_TRUE(setup.uses_switch());
}

TEST_F(CliTest, MultiTerrainRowAccounting) {
  const auto out = dir_ / "multi";
  ASSERT_EQ(run_cli("multi-terrain --episodes 200 --seeds 3 --checkpoints " + dir_.string() + " --out " + out.string()),
            0);
  EXPECT_EQ(count_lines(out / "multi_terrain_with-setup.csv"), 601u);
  EXPECT_EQ(count_lines(out / "multi_terrain_without-setup.csv"), 601u);
  EXPECT_TRUE(fs::exists(out / "multi_terrain_report.txt"));
  EXPECT_TRUE(fs::exists(out / "multi_terrain_with-setup_events.jsonl"));
}

TEST_F(CliTest, EvaluateIsByteIdenticalAcrossRuns) {
  const auto a = dir_ / "eval_a";
  const auto b = dir_ / "eval_b";
  const std::string common = " --set final_episodes=30 --checkpoints " + dir_.string();
  ASSERT_EQ(run_cli("evaluate" + common + " --out " + a.string()), 0);
  ASSERT_EQ(run_cli("evaluate" + common + " --out " + b.string()), 0);
  EXPECT_EQ(read_bytes(a / "evaluate.csv"), read_bytes(b / "evaluate.csv"));
  EXPECT_EQ(count_lines(a / "evaluate.csv"), 61u);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_NE(run_cli("evaluate --checkpoints " + (dir_ / "missing").string() + " --out " + dir_.string()), 0);
  EXPECT_EQ(WEXITSTATUS(run_cli("compare --set setup_budget=abc --out " + dir_.string())), 2);
  auto bad = read_bytes(dir_ / "walk.rbpc");
  bad[4] = 9;
  write_bytes(dir_ / "walk.rbpc", bad);
  EXPECT_EQ(WEXITSTATUS(run_cli("evaluate --checkpoints " + dir_.string() + " --out " + dir_.string())), 4);
}
