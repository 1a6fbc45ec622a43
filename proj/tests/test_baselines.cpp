#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>
#include <vector>

#include "relay/baselines/arms.hpp"
#include "relay/baselines/classifier.hpp"
#include "relay/baselines/proximity.hpp"
#include "relay/baselines/rewards.hpp"
#include "scripted_policies.hpp"

using namespace relay;
using namespace relay::baselines;
using scripted::ScriptedWorld;
using terrainsim::Observation;

namespace {

VariantContext full_context() {
  static const std::vector<float> a{0.0f}, b{1.0f};
  VariantContext c;
  c.env_reward = -2.5;
  c.setup_action = std::span<const float>(a);
  c.target_action = std::span<const float>(b);
  c.advantage = 1.0;
  c.v_state = 10.0;
  return c;
}

double reward(RewardTag tag, const VariantContext& c) {
  RewardVariant v;
  v.tag = tag;
  return variant_reward(v, c);
}

std::string missing_field_message(RewardTag tag, VariantContext c) {
  try {
    reward(tag, c);
  } catch (const InvalidInput& e) {
    return e.what();
  }
  return {};
}

Observation feature_state(double f, double noise) {
  Observation o{};
  o[0] = f;
  o[1] = noise;
  return o;
}

}  // namespace

TEST(VariantReward, HandValues) {
  const auto c = full_context();
  EXPECT_EQ(reward(RewardTag::kOriginal, c), -2.5);
  EXPECT_EQ(reward(RewardTag::kConstant, c), 1.5);
  EXPECT_NEAR(reward(RewardTag::kTargetTorque, c), 0.1353352832366127, 1e-9);
  EXPECT_NEAR(reward(RewardTag::kTargetValue, c), 0.1, 1e-9);
  EXPECT_NEAR(reward(RewardTag::kAwtv, c), 0.085, 1e-9);
}

TEST(VariantReward, ConstantIgnoresContext) { EXPECT_EQ(reward(RewardTag::kConstant, VariantContext{}), 1.5); }

TEST(VariantReward, TorqueIsOneIffActionsCoincide) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> nd;
  for (int i = 0; i < 500; ++i) {
    std::vector<float> a{nd(rng), nd(rng)}, b{nd(rng), nd(rng)};
    VariantContext c;
    c.setup_action = std::span<const float>(a);
    c.target_action = std::span<const float>(b);
    const double r = reward(RewardTag::kTargetTorque, c);
    EXPECT_GT(r, 0.0);
    EXPECT_LT(r, 1.0);
    c.target_action = std::span<const float>(a);
    EXPECT_EQ(reward(RewardTag::kTargetTorque, c), 1.0);
  }
}

TEST(VariantReward, MissingFieldsRejected) {
  auto c = full_context();
  c.env_reward.reset();
  EXPECT_EQ(missing_field_message(RewardTag::kOriginal, c), "original reward needs the env reward context field");
  c = full_context();
  c.target_action.reset();
  EXPECT_EQ(missing_field_message(RewardTag::kTargetTorque, c),
            "target-torque reward needs the target action context field");
  c = full_context();
  c.v_state.reset();
  EXPECT_EQ(missing_field_message(RewardTag::kTargetValue, c),
            "target-value reward needs the state value context field");
  c = full_context();
  c.advantage.reset();
  EXPECT_EQ(missing_field_message(RewardTag::kAwtv, c), "awtv reward needs the advantage context field");
}

TEST(VariantReward, TagNamesRoundTrip) {
  for (RewardTag t : {RewardTag::kOriginal, RewardTag::kConstant, RewardTag::kTargetTorque, RewardTag::kTargetValue,
                      RewardTag::kAwtv}) {
    EXPECT_EQ(parse_reward_tag(to_string(t)), t);
  }
  EXPECT_FALSE(parse_reward_tag("bogus"));
}

TEST(VariantReward, HooksRequestTargetActionOnlyForTorque) {
  RewardVariant v;
  v.tag = RewardTag::kTargetTorque;
  EXPECT_TRUE(variant_hooks(v).needs_target_action);
  v.tag = RewardTag::kAwtv;
  auto hooks = variant_hooks(v);
  EXPECT_FALSE(hooks.needs_target_action);
  composer::RewardContext rc;
  rc.advantage = 1.0;
  rc.v_state = 10.0;
  EXPECT_NEAR(hooks.reward(rc), 0.085, 1e-12);
}

TEST(Proximity, SameStateGivesZero) {
  auto p = [](const Observation& o) { return 0.3 + 0.1 * o[0]; };
  Observation s = feature_state(2.0, 0.0);
  EXPECT_EQ(proximity_reward(p, s, s), 0.0);
}

TEST(Proximity, RewardsTelescope) {
  ProximityPredictor pred(1);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd;
  std::vector<Observation> ok, bad;
  for (int i = 0; i < 200; ++i) {
    ok.push_back(feature_state(1.0, nd(rng)));
    bad.push_back(feature_state(0.0, nd(rng)));
  }
  pred.add_episode(ok, true);
  pred.add_episode(bad, false);
  ASSERT_TRUE(pred.fit(5, rng));
  std::vector<Observation> traj;
  for (int i = 0; i < 50; ++i) traj.push_back(feature_state(nd(rng), nd(rng)));
  double sum = 0.0;
  for (std::size_t t = 0; t + 1 < traj.size(); ++t) sum += proximity_reward(pred, traj[t], traj[t + 1]);
  EXPECT_NEAR(sum, pred(traj.back()) - pred(traj.front()), 1e-9);
}

TEST(Proximity, SeparatesSyntheticBuffers) {
  ProximityPredictor pred(3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 0.3);
  for (int e = 0; e < 20; ++e) {
    std::vector<Observation> ok, bad;
    for (int i = 0; i < 20; ++i) {
      ok.push_back(feature_state(1.0, nd(rng)));
      bad.push_back(feature_state(0.0, nd(rng)));
    }
    pred.add_episode(ok, true);
    pred.add_episode(bad, false);
  }
  ASSERT_TRUE(pred.fit(20, rng));
  EXPECT_GT(pred(feature_state(1.0, 0.0)), pred(feature_state(0.0, 0.0)));
  EXPECT_GT(pred(feature_state(1.0, 0.0)), 0.5);
  EXPECT_LT(pred(feature_state(0.0, 0.0)), 0.5);
}

TEST(Proximity, FitWaitsForBothBuffers) {
  ProximityPredictor pred(0);
  std::mt19937_64 rng(0);
  pred.add_episode({feature_state(1.0, 0.0)}, true);
  EXPECT_FALSE(pred.fit(1, rng));
  EXPECT_FALSE(pred.fitted());
}

TEST(Proximity, BuffersPartitionStoredStates) {
  ProximityPredictor pred(0);
  std::mt19937_64 rng(5);
  std::bernoulli_distribution coin(0.4);
  std::size_t stored = 0;
  std::set<double> ok_ids, bad_ids;
  double id = 0.0;
  for (int e = 0; e < 100; ++e) {
    const bool success = coin(rng);
    std::vector<Observation> states;
    for (int i = 0; i < 1 + e % 7; ++i) states.push_back(feature_state(id++, 0.0));
    for (const auto& s : states) (success ? ok_ids : bad_ids).insert(s[0]);
    stored += states.size();
    pred.add_episode(states, success);
  }
  EXPECT_EQ(pred.success_buffer().size() + pred.failure_buffer().size(), stored);
  for (const auto& s : pred.success_buffer()) {
    EXPECT_TRUE(ok_ids.count(s[0]));
    EXPECT_FALSE(bad_ids.count(s[0]));
  }
  for (const auto& s : pred.failure_buffer()) EXPECT_TRUE(bad_ids.count(s[0]));
}

TEST(Proximity, BuffersDropOldestPastCapacity) {
  ProximityPredictor pred(0, 5);
  std::vector<Observation> states;
  for (int i = 0; i < 8; ++i) states.push_back(feature_state(i, 0.0));
  pred.add_episode(states, true);
  ASSERT_EQ(pred.success_buffer().size(), 5u);
  EXPECT_EQ(pred.success_buffer().front()[0], 3.0);
  EXPECT_EQ(pred.success_buffer().back()[0], 7.0);
}

TEST(ProximityArm, ZeroBudgetLeavesWalkCopy) {
  ScriptedWorld w;
  auto m = composer::BehaviorModule::create(terrainsim::ArtifactKind::kBlock, w.module.target, w.walk);
  composer::SetupOptions opt;
  opt.train.budget = 0;
  auto arm = train_proximity_arm(m, w.walk, {terrainsim::jump_course(), {}, {}}, {}, opt);
  EXPECT_TRUE(m.setup.net() == w.walk.net());
  EXPECT_FALSE(arm.predictor.fitted());
}

TEST(ProximityArm, FillsBuffersAndFits) {
  ScriptedWorld w;
  auto m = composer::BehaviorModule::create(terrainsim::ArtifactKind::kBlock, w.module.target, w.walk);
  policyopt::PPOConfig cfg;
  cfg.horizon = 64;
  cfg.minibatch = 16;
  composer::SetupOptions opt;
  opt.train.budget = 60000;
  opt.train.eval_every = 0;
  opt.train.eval_episodes = 5;
  auto arm = train_proximity_arm(m, w.walk, {terrainsim::jump_course(), {}, {}}, cfg, opt);
  EXPECT_FALSE(arm.curve.empty());
  EXPECT_GT(arm.predictor.success_buffer().size() + arm.predictor.failure_buffer().size(), 0u);
}

TEST(Classifier, SeparableDataFitsFully) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> nd;
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int i = 0; i < 1000; ++i) {
    std::vector<double> row{nd(rng), nd(rng), nd(rng)};
    const double margin = 2.0 * row[0] - row[1] + 0.5 * row[2];
    if (std::abs(margin) < 0.2) continue;
    x.push_back(row);
    y.push_back(margin > 0 ? 1 : 0);
  }
  BinaryClassifier clf(3, 1);
  auto stats = clf.fit(x, y, 200, rng);
  EXPECT_GE(stats.accuracy, 0.99);
  for (const auto& row : x) {
    const double p = clf.probability(row);
    EXPECT_GE(p, 0.0);
    EXPECT_LE(p, 1.0);
  }
}

TEST(Classifier, BadInputRejected) {
  BinaryClassifier clf(2, 0);
  std::mt19937_64 rng(0);
  EXPECT_THROW(clf.fit({}, {}, 1, rng), InvalidInput);
  EXPECT_THROW(clf.fit({{1.0, 2.0}}, {1, 0}, 1, rng), InvalidInput);
}

TEST(SwitchClassifier, SingleClassRejected) {
  SwitchData all_fail;
  all_fail.obs = {{0.0, 1.0}, {1.0, 0.0}};
  all_fail.success = {0, 0};
  all_fail.distance = {0.1, 0.2};
  EXPECT_THROW(train_switch_classifier(all_fail, 0), InvalidInput);
}

TEST(SwitchClassifier, ProbabilityRisesWithDistanceOnHeldOutData) {
  // The scripted target needs room to crouch before its jump point, so early
  // handovers succeed and late ones fail.
  ScriptedWorld w;
  const auto course = terrainsim::jump_course();
  auto train = collect_switch_data(w.ensemble, course, {}, 300, 1);
  auto held = collect_switch_data(w.ensemble, course, {}, 300, 2);
  ASSERT_GT(train.obs.size(), 200u);
  auto clf = train_switch_classifier(train, 3, 100);
  std::map<int, std::pair<double, int>> bins;
  for (std::size_t i = 0; i < held.obs.size(); ++i) {
    auto& b = bins[static_cast<int>(held.distance[i] * 4.0)];
    b.first += clf.probability(held.obs[i]);
    ++b.second;
  }
  double prev = -1.0;
  for (const auto& [bin, sum] : bins) {
    const double mean = sum.first / sum.second;
    EXPECT_GE(mean, prev - 1e-9) << "bin " << bin;
    prev = mean;
  }
  EXPECT_LT(bins.begin()->second.first / bins.begin()->second.second, 0.5);
  EXPECT_GT(bins.rbegin()->second.first / bins.rbegin()->second.second, 0.5);
}

TEST(SwitchData, HandoverHappensWithinDetectionRange) {
  ScriptedWorld w;
  auto data = collect_switch_data(w.ensemble, terrainsim::jump_course(), {}, 50, 7);
  ASSERT_EQ(data.obs.size(), data.success.size());
  for (double d : data.distance) {
    EXPECT_GE(d, 0.0);
    EXPECT_LE(d, terrainsim::kDetectDistance);
  }
}

TEST(WithoutSetup, FlatCourseNeverSwitches) {
  ScriptedWorld w;
  auto r = run_without_setup(w.ensemble, terrainsim::flat_course(), {}, 20);
  EXPECT_EQ(r.metrics.success_pct, 100.0);
  for (const auto& ep : r.episodes) EXPECT_TRUE(ep.events.empty());
}

TEST(WithoutSetup, NoSetupActivations) {
  ScriptedWorld w;
  auto r = run_without_setup(w.ensemble, terrainsim::jump_course(), {}, 20);
  for (const auto& ep : r.episodes) {
    EXPECT_EQ(ep.setup_steps, 0);
    for (const auto& e : ep.events) {
      EXPECT_NE(e.to, composer::PolicyId::kSetup);
      EXPECT_NE(e.from, composer::PolicyId::kSetup);
    }
  }
}

TEST(SinglePolicy, FixedSeedReproducible) {
  policyopt::PPOConfig cfg;
  cfg.horizon = 256;
  composer::TrainOptions opt;
  opt.budget = 1024;
  opt.eval_episodes = 5;
  opt.seed = 4;
  auto a = train_single_policy(terrainsim::jump_course(), cfg, opt);
  auto b = train_single_policy(terrainsim::jump_course(), cfg, opt);
  EXPECT_TRUE(a.policy == b.policy);
  ASSERT_EQ(a.curve.size(), b.curve.size());
  EXPECT_EQ(a.curve.back().success_pct, b.curve.back().success_pct);
  EXPECT_EQ(a.curve.back().update, 4u);
}
