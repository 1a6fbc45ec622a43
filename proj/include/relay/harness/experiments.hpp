#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "relay/baselines/arms.hpp"
#include "relay/baselines/proximity.hpp"
#include "relay/baselines/rewards.hpp"
#include "relay/composer/setup_training.hpp"
#include "relay/harness/config.hpp"
#include "relay/harness/metrics.hpp"

namespace relay::harness {

using composer::BehaviorModule;
using composer::Ensemble;
using composer::TrainingCurve;
using policyopt::Policy;
using terrainsim::ArtifactKind;

/// Walk policy plus frozen targets for the configured kinds, one seed.
struct Prerequisites {
  std::uint64_t seed = 0;
  Policy walk;
  TrainingCurve walk_curve;
  std::array<std::shared_ptr<const Policy>, terrainsim::kArtifactKinds> targets{};
  std::array<TrainingCurve, terrainsim::kArtifactKinds> target_curves{};

  const std::shared_ptr<const Policy>& target(ArtifactKind k) const {
    const auto& t = targets[static_cast<std::size_t>(k)];
    if (!t) throw InvalidInput(std::string("no target policy for ") + terrainsim::to_string(k));
    return t;
  }
};

inline composer::TrainOptions train_options(const ExperimentConfig& cfg, std::size_t budget, std::uint64_t seed) {
  composer::TrainOptions o;
  o.budget = budget;
  o.seed = seed;
  o.eval_every = cfg.eval_every;
  o.eval_episodes = cfg.eval_episodes;
  o.workers = cfg.workers;
  return o;
}

inline Policy train_walk(const ExperimentConfig& cfg, std::uint64_t seed, TrainingCurve* curve = nullptr) {
  auto o = train_options(cfg, cfg.walk_budget, seed);
  o.eval_every = 10;
  auto t = composer::train_default(cfg.ppo, o, cfg.dynamics);
  if (curve != nullptr) *curve = std::move(t.curve);
  return std::move(t.policy);
}

inline std::shared_ptr<const Policy> train_target_policy(const ExperimentConfig& cfg, ArtifactKind kind,
                                                         std::uint64_t seed, TrainingCurve* curve = nullptr) {
  auto o = train_options(cfg, cfg.target_budget, seed * 100 + static_cast<std::uint64_t>(kind) + 1);
  o.eval_every = 25;
  if (cfg.target_stop > 0.0) o.stop_at_success = cfg.target_stop;
  auto t = composer::train_target(kind, cfg.ppo, o, cfg.dynamics);
  if (curve != nullptr) *curve = std::move(t.curve);
  return std::make_shared<const Policy>(std::move(t.policy));
}

inline Prerequisites train_prerequisites(const ExperimentConfig& cfg, std::uint64_t seed) {
  Prerequisites p;
  p.seed = seed;
  p.walk = train_walk(cfg, seed, &p.walk_curve);
  for (ArtifactKind k : cfg.kinds) {
    const auto i = static_cast<std::size_t>(k);
    p.targets[i] = train_target_policy(cfg, k, seed, &p.target_curves[i]);
  }
  return p;
}

/// Which treatment a setup-training arm receives.
struct SetupVariant {
  std::string name = "setup";
  bool init_from_default = true;
  bool extended_reward = true;
  baselines::RewardVariant reward;  // AWTV unless changed
  bool proximity = false;
};

struct SetupArm {
  std::string name;
  BehaviorModule module;
  TrainingCurve curve;
};

inline composer::SetupOptions setup_options(const ExperimentConfig& cfg, std::uint64_t seed) {
  composer::SetupOptions so;
  so.train = train_options(cfg, cfg.setup_budget, seed * 1000 + 17);
  so.awtv = cfg.awtv;
  so.awtv.gamma = cfg.ppo.gamma;
  return so;
}

inline policyopt::PPOConfig setup_ppo(const ExperimentConfig& cfg) {
  auto p = cfg.ppo;
  p.horizon = cfg.setup_horizon;
  return p;
}

inline SetupArm train_setup_arm(const ExperimentConfig& cfg, const Prerequisites& pre, ArtifactKind kind,
                                const SetupVariant& variant) {
  SetupArm arm{variant.name,
               BehaviorModule::create(kind, pre.target(kind), pre.walk, variant.init_from_default, pre.seed + 4242),
               {}};
  composer::EpisodeSpec spec{terrainsim::single_artifact_course(kind), cfg.dynamics, {}};
  auto so = setup_options(cfg, pre.seed);
  so.extended_reward = variant.extended_reward;
  if (variant.proximity) {
    arm.curve = baselines::train_proximity_arm(arm.module, pre.walk, spec, setup_ppo(cfg), so, {1, pre.seed}).curve;
  } else {
    auto rv = variant.reward;
    rv.awtv = so.awtv;
    arm.curve = composer::train_setup(arm.module, pre.walk, spec, setup_ppo(cfg), so, baselines::variant_hooks(rv));
  }
  return arm;
}

/// Final result of one arm on one seed, with its per-episode rows.
struct ArmOutcome {
  std::string arm;
  std::uint64_t seed = 0;
  std::string course;
  double success_pct = 0.0;
  double distance_pct = 0.0;
  TrainingCurve curve;
  std::vector<MetricsRow> rows;
  std::vector<std::vector<composer::SwitchEvent>> events;
};

inline ArmOutcome summarize(const std::string& arm, std::uint64_t seed, const std::string& course,
                            const std::vector<composer::ComposedEpisode>& episodes, TrainingCurve curve = {}) {
  ArmOutcome out;
  out.arm = arm;
  out.seed = seed;
  out.course = course;
  out.curve = std::move(curve);
  const auto m = composer::composed_metrics(episodes);
  out.success_pct = m.success_pct;
  out.distance_pct = m.distance_pct;
  for (const auto& ep : episodes) {
    out.rows.push_back(metrics_row(seed, arm, course, ep));
    out.events.push_back(ep.events);
  }
  return out;
}

/// Setup-policy ensemble evaluated with the setup phase enabled.
inline ArmOutcome evaluate_setup_arm(const ExperimentConfig& cfg, const Policy& walk, const SetupArm& arm,
                                     std::uint64_t seed) {
  Ensemble ens;
  ens.walk = &walk;
  ens.add(arm.module);
  const auto course = terrainsim::single_artifact_course(arm.module.kind);
  auto eps = composer::evaluate_composed(ens, course, cfg.dynamics, cfg.final_episodes,
                                         {composer::SwitchMode::kSetup, {}, true});
  return summarize(arm.name, seed, course.id, eps, arm.curve);
}

inline ArmOutcome evaluate_without_setup(const ExperimentConfig& cfg, const Prerequisites& pre, ArtifactKind kind) {
  auto module = BehaviorModule::create(kind, pre.target(kind), pre.walk);
  Ensemble ens;
  ens.walk = &pre.walk;
  ens.add(module);
  const auto course = terrainsim::single_artifact_course(kind);
  auto r = baselines::run_without_setup(ens, course, cfg.dynamics, cfg.final_episodes);
  return summarize("without-setup", pre.seed, course.id, r.episodes);
}

inline ArmOutcome run_learned_switch_arm(const ExperimentConfig& cfg, const Prerequisites& pre, ArtifactKind kind) {
  auto module = BehaviorModule::create(kind, pre.target(kind), pre.walk);
  Ensemble ens;
  ens.walk = &pre.walk;
  ens.add(module);
  const auto course = terrainsim::single_artifact_course(kind);
  auto data = baselines::collect_switch_data(ens, course, cfg.dynamics, cfg.switch_episodes, pre.seed + 77);
  auto clf = baselines::train_switch_classifier(data, pre.seed + 78);
  auto r = baselines::run_learned_switch(ens, clf, course, cfg.dynamics, cfg.final_episodes);
  return summarize("learned-switch", pre.seed, course.id, r.episodes);
}

inline ArmOutcome run_single_policy_arm(const ExperimentConfig& cfg, std::uint64_t seed, ArtifactKind kind) {
  const auto course = terrainsim::single_artifact_course(kind);
  auto o = train_options(cfg, cfg.single_policy_budget(), seed * 1000 + 99);
  auto t = baselines::train_single_policy(course, cfg.ppo, o, cfg.dynamics);
  auto outcomes = composer::evaluate_policy(t.policy, {course, cfg.dynamics, {}}, cfg.final_episodes);
  std::vector<composer::ComposedEpisode> eps;
  for (const auto& o2 : outcomes) eps.push_back({o2, {}, 0});
  return summarize("single-policy", seed, course.id, eps, t.curve);
}

/// Arms by decreasing success; ties keep input order.
inline std::vector<std::string> rank_arms(const std::vector<ArmOutcome>& arms) {
  std::vector<const ArmOutcome*> sorted;
  for (const auto& a : arms) sorted.push_back(&a);
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const ArmOutcome* a, const ArmOutcome* b) { return a->success_pct > b->success_pct; });
  std::vector<std::string> out;
  for (const auto* a : sorted) out.push_back(a->arm);
  return out;
}

/// Setup policy vs. the comparison arms on the first configured kind.
inline std::vector<ArmOutcome> run_comparison(const ExperimentConfig& cfg, const Prerequisites& pre,
                                              const std::vector<std::string>& arms) {
  const ArtifactKind kind = cfg.kinds.front();
  std::vector<ArmOutcome> out;
  for (const auto& a : arms) {
    if (a == "setup") {
      out.push_back(evaluate_setup_arm(cfg, pre.walk, train_setup_arm(cfg, pre, kind, {}), pre.seed));
    } else if (a == "proximity") {
      SetupVariant v;
      v.name = "proximity";
      v.proximity = true;
      out.push_back(evaluate_setup_arm(cfg, pre.walk, train_setup_arm(cfg, pre, kind, v), pre.seed));
    } else if (a == "without-setup") {
      out.push_back(evaluate_without_setup(cfg, pre, kind));
    } else if (a == "learned-switch") {
      out.push_back(run_learned_switch_arm(cfg, pre, kind));
    } else if (a == "single-policy") {
      out.push_back(run_single_policy_arm(cfg, pre.seed, kind));
    } else {
      throw InvalidInput("unknown comparison arm '" + a + "'");
    }
  }
  return out;
}

/// Full method, fresh initialization, and no extended reward on one seed.
inline std::vector<ArmOutcome> run_ablation(const ExperimentConfig& cfg, const Prerequisites& pre) {
  const ArtifactKind kind = cfg.kinds.front();
  pre.target(kind);
  std::vector<SetupVariant> variants(3);
  variants[0].name = "full";
  variants[1].name = "without-init";
  variants[1].init_from_default = false;
  variants[2].name = "without-extended";
  variants[2].extended_reward = false;
  std::vector<ArmOutcome> out;
  for (const auto& v : variants) out.push_back(evaluate_setup_arm(cfg, pre.walk, train_setup_arm(cfg, pre, kind, v), pre.seed));
  return out;
}

/// One setup arm per configured reward variant, equal budgets.
inline std::vector<ArmOutcome> run_reward_compare(const ExperimentConfig& cfg, const Prerequisites& pre) {
  const ArtifactKind kind = cfg.kinds.front();
  pre.target(kind);
  std::vector<ArmOutcome> out;
  for (const auto& r : cfg.rewards) {
    auto tag = baselines::parse_reward_tag(r);
    if (!tag) throw InvalidInput("unknown reward variant '" + r + "'");
    SetupVariant v;
    v.name = r;
    v.reward.tag = *tag;
    out.push_back(evaluate_setup_arm(cfg, pre.walk, train_setup_arm(cfg, pre, kind, v), pre.seed));
  }
  return out;
}

/// Kinds in an order shuffled by the episode seed.
inline std::vector<ArtifactKind> shuffled_kinds(std::vector<ArtifactKind> kinds, std::uint64_t episode_seed) {
  std::mt19937_64 rng(episode_seed ^ 0x7f4a7c159e3779b9ULL);
  std::shuffle(kinds.begin(), kinds.end(), rng);
  return kinds;
}

struct MultiTerrainArm {
  ArmOutcome outcome;
  std::map<ArtifactKind, int> failures;  // by the artifact being negotiated at failure
  int other_failures = 0;                // timeouts or failures away from any artifact
};

/// With-setup and without-setup arms over `episodes` shuffled sequences of
/// one artifact of each configured kind separated by 3 m of flat.
inline std::vector<MultiTerrainArm> run_multi_terrain(const ExperimentConfig& cfg, const Ensemble& ensemble,
                                                      std::uint64_t seed, std::size_t episodes) {
  ensemble.require_course(terrainsim::sequence_course(cfg.kinds));
  std::vector<MultiTerrainArm> out;
  for (auto mode : {composer::SwitchMode::kSetup, composer::SwitchMode::kDirect}) {
    std::vector<composer::ComposedEpisode> eps;
    std::vector<std::string> ids;
    for (std::size_t i = 0; i < episodes; ++i) {
      const std::uint64_t episode_seed = composer::kEvalSeedBase + seed * 1'000'003 + i;
      const auto course = terrainsim::sequence_course(shuffled_kinds(cfg.kinds, episode_seed));
      eps.push_back(composer::run_composed_episode(ensemble, course, cfg.dynamics, episode_seed, {mode, {}, true}));
      ids.push_back(course.id);
    }
    MultiTerrainArm arm;
    arm.outcome = summarize(mode == composer::SwitchMode::kSetup ? "with-setup" : "without-setup", seed, "sequence", eps);
    for (std::size_t i = 0; i < eps.size(); ++i) {
      arm.outcome.rows[i].course = ids[i];
      const auto& o = eps[i].outcome;
      if (o.success) continue;
      if (o.failed_at) {
        ++arm.failures[*o.failed_at];
      } else {
        ++arm.other_failures;
      }
    }
    out.push_back(std::move(arm));
  }
  return out;
}

}  // namespace relay::harness
