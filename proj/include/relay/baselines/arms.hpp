#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "relay/baselines/classifier.hpp"
#include "relay/composer/episode.hpp"
#include "relay/composer/training.hpp"

namespace relay::baselines {

using composer::ComposedEpisode;
using composer::Ensemble;
using composer::SwitchMode;

struct ArmResult {
  terrainsim::SuccessDistance metrics;
  std::vector<ComposedEpisode> episodes;
};

/// Default -> target as soon as the artifact is detected; no setup phase.
inline ArmResult run_without_setup(const Ensemble& ensemble, const terrainsim::Course& course,
                                   const terrainsim::DynamicsParams& dyn, std::size_t episodes,
                                   std::uint64_t seed_base = composer::kEvalSeedBase) {
  ArmResult r;
  r.episodes = composer::evaluate_composed(ensemble, course, dyn, episodes, {SwitchMode::kDirect, {}, false}, seed_base);
  r.metrics = composer::composed_metrics(r.episodes);
  return r;
}

/// Observations at the moment of a default -> target switch and whether the
/// episode then reached the goal.
struct SwitchData {
  std::vector<std::vector<double>> obs;
  std::vector<int> success;
  std::vector<double> distance;  // distance to the artifact at the switch
};

/// Episodes that hand over from default to target at a distance drawn
/// uniformly from [0, detection range] before the first artifact.
inline SwitchData collect_switch_data(const Ensemble& ensemble, const terrainsim::Course& course,
                                      const terrainsim::DynamicsParams& dyn, std::size_t episodes,
                                      std::uint64_t seed) {
  if (course.artifacts.empty()) throw InvalidInput("switch data needs a course with an artifact");
  SwitchData data;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ud(0.0, terrainsim::kDetectDistance);
  for (std::size_t i = 0; i < episodes; ++i) {
    const double at = ud(rng);
    std::optional<std::vector<double>> seen;
    double seen_distance = 0.0;
    composer::RunnerOptions options{SwitchMode::kGated,
                                    [&](const terrainsim::Observation& o, const terrainsim::RunnerState& s,
                                        terrainsim::ArtifactKind) {
                                      const auto idx = course.next_artifact(s.x);
                                      const double d = idx ? course.artifacts[*idx].start - s.x : 0.0;
                                      if (d > at || seen) return false;
                                      seen.emplace(o.begin(), o.end());
                                      seen_distance = d;
                                      return true;
                                    },
                                    false};
    const std::uint64_t episode_seed = seed * 7919 + i + 1;
    composer::ComposedRunner runner(course, dyn, ensemble, options);
    runner.begin(episode_seed);
    auto act_rng = composer::eval_action_rng(episode_seed);
    while (!runner.done()) runner.step(act_rng);
    if (!seen) continue;
    data.obs.push_back(*seen);
    data.success.push_back(runner.env().outcome()->success ? 1 : 0);
    data.distance.push_back(seen_distance);
  }
  return data;
}

/// Supervised switch-now classifier; single-class data is rejected.
inline BinaryClassifier train_switch_classifier(const SwitchData& data, std::uint64_t seed, int epochs = 50) {
  bool any_pos = false;
  bool any_neg = false;
  for (int y : data.success) (y != 0 ? any_pos : any_neg) = true;
  if (!any_pos || !any_neg) throw InvalidInput("switch classifier data holds a single class");
  BinaryClassifier clf(data.obs.front().size(), seed);
  std::mt19937_64 rng(seed ^ 0x2545f4914f6cdd1dULL);
  clf.fit(data.obs, data.success, epochs, rng);
  return clf;
}

/// Default walks past detection until the classifier's probability exceeds
/// 0.5, then the target takes over.
inline ArmResult run_learned_switch(const Ensemble& ensemble, const BinaryClassifier& clf,
                                    const terrainsim::Course& course, const terrainsim::DynamicsParams& dyn,
                                    std::size_t episodes, std::uint64_t seed_base = composer::kEvalSeedBase) {
  composer::RunnerOptions options{SwitchMode::kGated,
                                  [&clf](const terrainsim::Observation& o, const terrainsim::RunnerState&,
                                         terrainsim::ArtifactKind) { return clf.probability(o) > 0.5; },
                                  false};
  ArmResult r;
  r.episodes = composer::evaluate_composed(ensemble, course, dyn, episodes, options, seed_base);
  r.metrics = composer::composed_metrics(r.episodes);
  return r;
}

/// One PPO policy over the whole course from standard starts, evaluated on
/// the same course and seeds as the modular arms.
inline composer::TrainedPolicy train_single_policy(const terrainsim::Course& course, const policyopt::PPOConfig& cfg,
                                                   const composer::TrainOptions& opt,
                                                   const terrainsim::DynamicsParams& dyn = {}) {
  composer::EpisodeSpec spec{course, dyn, {}};
  auto policy = composer::fresh_policy(opt.seed, false, false);
  auto eval = [&](const policyopt::Policy& p) {
    return terrainsim::metrics(composer::evaluate_policy(p, spec, opt.eval_episodes));
  };
  auto curve = composer::train_on_course(policy, spec, cfg, opt, eval);
  return {std::move(policy), std::move(curve)};
}

}  // namespace relay::baselines
