#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "relay/error.hpp"
#include "relay/policyopt/policy.hpp"
#include "relay/policyopt/ppo.hpp"
#include "relay/terrainsim/runner.hpp"

namespace relay::composer {

using policyopt::Policy;
using terrainsim::ArtifactKind;
using terrainsim::Course;
using terrainsim::DynamicsParams;
using terrainsim::RunnerState;

/// Seeds for evaluation episodes: eval episode i runs with kEvalSeedBase + i.
inline constexpr std::uint64_t kEvalSeedBase = 1'000'000;

struct CurvePoint {
  std::size_t update = 0;
  std::size_t env_steps = 0;
  double success_pct = 0.0;
  double distance_pct = 0.0;
};
using TrainingCurve = std::vector<CurvePoint>;

using StateSampler = std::function<RunnerState(const Course&, std::mt19937_64&)>;

/// Where episodes run and how they start. Without a sampler episodes start
/// with the standard reset.
struct EpisodeSpec {
  Course course;
  DynamicsParams dynamics;
  StateSampler sampler;

  RunnerState initial(std::uint64_t seed) const {
    if (!sampler) return terrainsim::initial_state(course, seed, dynamics);
    std::mt19937_64 rng(seed);
    return sampler(course, rng);
  }
};

/// Crouched, slow starts just before the artifact: the shaped initial
/// distribution target policies train from.
inline StateSampler target_start_sampler(const DynamicsParams& p = {}) {
  return [p](const Course& course, std::mt19937_64& rng) {
    if (course.artifacts.empty()) throw InvalidInput("target start sampler needs an artifact");
    const double start = course.artifacts.front().start;
    std::uniform_real_distribution<double> ux(start - 1.0, start - 0.3);
    std::uniform_real_distribution<double> uc(0.4, 1.0);
    std::uniform_real_distribution<double> uv(0.0, 1.0);
    RunnerState s;
    s.x = ux(rng);
    s.c = uc(rng);
    s.v = uv(rng);
    s.h = p.leg_length(s.c);
    return s;
  };
}

/// Action noise for evaluation episode `seed`, independent of its start state.
inline std::mt19937_64 eval_action_rng(std::uint64_t seed) { return std::mt19937_64(seed ^ 0xa5a5a5a5a5a5a5a5ULL); }

/// Single-policy episodes with the fixed evaluation seeds. Actions are
/// sampled from the policy with a per-episode seeded generator.
inline std::vector<terrainsim::EpisodeOutcome> evaluate_policy(const Policy& policy, const EpisodeSpec& spec,
                                                               std::size_t episodes,
                                                               std::uint64_t seed_base = kEvalSeedBase) {
  std::vector<terrainsim::EpisodeOutcome> out;
  out.reserve(episodes);
  terrainsim::RunnerEnv env(spec.course, spec.dynamics);
  for (std::size_t i = 0; i < episodes; ++i) {
    env.reset_to(spec.initial(seed_base + i));
    auto rng = eval_action_rng(seed_base + i);
    while (!env.done()) {
      auto obs = env.observation();
      auto d = policy.act_only(obs, &rng);
      env.step({d.action[0], d.action[1]});
    }
    out.push_back(*env.outcome());
  }
  return out;
}

struct TrainOptions {
  std::size_t budget = 500'000;  // environment steps
  std::uint64_t seed = 0;
  std::size_t eval_every = 50;   // updates
  std::size_t eval_episodes = 100;
  int workers = 1;
  bool threaded = false;
  std::optional<double> stop_at_success;  // end early once eval success % reaches this
};

namespace detail {

struct EpisodicWorker {
  terrainsim::RunnerEnv env;
  std::mt19937_64 rng;
  policyopt::RolloutBuffer buffer;
  std::uint64_t episode_seed;
  std::vector<std::vector<double>> seen;  // raw observations, threaded mode only
  std::size_t steps = 0;

  EpisodicWorker(const EpisodeSpec& spec, std::uint64_t seed, std::size_t horizon)
      : env(spec.course, spec.dynamics), rng(seed), buffer(horizon), episode_seed(seed * 7919 + 1) {}

  void begin_episode(const EpisodeSpec& spec) { env.reset_to(spec.initial(episode_seed++)); }

  // Fills the buffer; `live` is updated per step when non-null.
  void collect(const EpisodeSpec& spec, Policy& acting, bool update_stats, bool record_raw) {
    buffer.clear();
    seen.clear();
    while (!buffer.full()) {
      if (env.done()) begin_episode(spec);
      auto obs = env.observation();
      if (record_raw) seen.emplace_back(obs.begin(), obs.end());
      auto d = acting.act(obs, &rng, update_stats);
      auto res = env.step({d.action[0], d.action[1]});
      ++steps;
      policyopt::Transition t;
      t.obs = std::move(d.obs);
      t.action = std::move(d.action);
      t.switch_bit = d.switch_bit;
      t.logp = d.logp;
      t.reward = res.reward;
      t.value = d.value;
      t.done = res.done;
      buffer.push(std::move(t));
    }
  }

  double bootstrap(const Policy& p) const { return env.done() ? 0.0 : p.value(env.observation()); }
};

}  // namespace detail

/// PPO on a course: W workers fill their buffers, then one averaged update.
/// `eval` runs every `eval_every` updates and after the last one.
inline TrainingCurve train_on_course(Policy& policy, const EpisodeSpec& spec, const policyopt::PPOConfig& cfg,
                                     const TrainOptions& opt,
                                     const std::function<terrainsim::SuccessDistance(const Policy&)>& eval) {
  cfg.validate();
  if (opt.workers < 1) throw InvalidInput("workers must be >= 1");
  std::vector<detail::EpisodicWorker> workers;
  for (int w = 0; w < opt.workers; ++w) {
    workers.emplace_back(spec, opt.seed * 1000 + static_cast<std::uint64_t>(w) + 1, cfg.horizon);
    workers.back().begin_episode(spec);
  }
  policyopt::PpoUpdater ppo(policy.net(), cfg);
  std::mt19937_64 update_rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
  TrainingCurve curve;
  std::size_t steps = 0;
  std::size_t updates = 0;
  auto record_eval = [&] {
    auto m = eval(policy);
    curve.push_back({updates, steps, m.success_pct, m.distance_pct});
    return m;
  };
  while (steps + cfg.horizon * workers.size() <= std::max(opt.budget, cfg.horizon * workers.size()) &&
         steps < opt.budget) {
    if (opt.threaded && workers.size() > 1) {
      const Policy snapshot = policy;
      std::vector<Policy> local(workers.size(), snapshot);
      std::vector<std::thread> threads;
      for (std::size_t w = 0; w < workers.size(); ++w) {
        threads.emplace_back([&, w] { workers[w].collect(spec, local[w], false, true); });
      }
      for (auto& t : threads) t.join();
      for (auto& w : workers) {
        for (const auto& o : w.seen) policy.normalizer().update(o);
      }
    } else {
      for (auto& w : workers) w.collect(spec, policy, true, false);
    }
    steps = 0;
    for (const auto& w : workers) steps += w.steps;
    std::vector<policyopt::WorkerBatch> batches;
    for (const auto& w : workers) batches.push_back({&w.buffer, w.bootstrap(policy)});
    ppo.update(batches, update_rng, policy.uses_switch());
    ++updates;
    if (opt.eval_every > 0 && updates % opt.eval_every == 0) {
      auto m = record_eval();
      if (opt.stop_at_success && m.success_pct >= *opt.stop_at_success) return curve;
    }
  }
  if (curve.empty() || curve.back().update != updates) record_eval();
  return curve;
}

inline diffcore::NetShape policy_shape(bool switch_head) {
  diffcore::NetShape s;
  s.input = terrainsim::kObservationSize;
  s.action = 2;
  s.value_head = true;
  s.switch_head = switch_head;
  return s;
}

/// Fresh policy with empty observation statistics.
inline Policy fresh_policy(std::uint64_t seed, bool switch_head, bool uses_switch = false,
                           const diffcore::NetInit& init = {}) {
  return Policy(policyopt::Net(policy_shape(switch_head), seed, init),
                policyopt::RunningNormalizer(terrainsim::kObservationSize), uses_switch);
}

struct TrainedPolicy {
  Policy policy;
  TrainingCurve curve;
};

/// Default walk policy: flat course, standard starts. Its net carries an
/// unused switch head so setup policies can be bit-copied from it.
inline TrainedPolicy train_default(const policyopt::PPOConfig& cfg, TrainOptions opt,
                                   const DynamicsParams& dyn = {}) {
  EpisodeSpec spec{terrainsim::flat_course(), dyn, {}};
  Policy policy = fresh_policy(opt.seed, true, false);
  auto eval = [&](const Policy& p) {
    auto outcomes = evaluate_policy(p, spec, opt.eval_episodes);
    return terrainsim::metrics(outcomes);
  };
  auto curve = train_on_course(policy, spec, cfg, opt, eval);
  return {std::move(policy), std::move(curve)};
}

/// Target policy for one artifact kind, trained from the shaped start
/// distribution. Raises TrainingFailure when the final success is < 50%.
inline TrainedPolicy train_target(ArtifactKind kind, const policyopt::PPOConfig& cfg, TrainOptions opt,
                                  const DynamicsParams& dyn = {}) {
  if (opt.budget == 0) throw InvalidInput("train_target needs a positive budget");
  EpisodeSpec spec{terrainsim::single_artifact_course(kind), dyn, target_start_sampler(dyn)};
  Policy policy = fresh_policy(opt.seed, false, false);
  auto eval = [&](const Policy& p) { return terrainsim::metrics(evaluate_policy(p, spec, opt.eval_episodes)); };
  auto curve = train_on_course(policy, spec, cfg, opt, eval);
  if (curve.back().success_pct < 50.0) {
    std::vector<double> pts;
    for (const auto& c : curve) pts.push_back(c.success_pct);
    throw TrainingFailure(std::string("target policy for ") + terrainsim::to_string(kind) + " reached only " +
                              std::to_string(curve.back().success_pct) + "% success",
                          std::move(pts));
  }
  return {std::move(policy), std::move(curve)};
}

}  // namespace relay::composer
