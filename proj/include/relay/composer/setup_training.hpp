#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "relay/composer/awtv.hpp"
#include "relay/composer/episode.hpp"
#include "relay/composer/module.hpp"
#include "relay/composer/training.hpp"
#include "relay/policyopt/ppo.hpp"

namespace relay::composer {

/// What a setup reward may look at for one transition.
struct RewardContext {
  double env_reward = 0.0;
  double target_reward = 0.0;  // target policy's reward function on this transition
  std::span<const float> setup_action;
  std::span<const float> target_action;  // empty unless requested by the hooks
  double advantage = 0.0;                // TD advantage under the target value function
  double v_state = 0.0;
  double v_next = 0.0;
  const terrainsim::Observation* obs = nullptr;
  const terrainsim::Observation* next_obs = nullptr;
  bool terminal = false;
};

using SetupRewardFn = std::function<double(const RewardContext&)>;

inline SetupRewardFn awtv_setup_reward(const AWTVParams& p) {
  p.validate();
  return [p](const RewardContext& c) { return awtv_reward(c.advantage, c.v_state, p); };
}

/// Extension points used by the comparison arms that share this loop.
struct SetupHooks {
  SetupRewardFn reward;  // defaults to AWTV
  bool needs_target_action = false;
  // Raw observations seen while the setup policy acted, and whether the
  // episode reached the goal.
  std::function<void(const std::vector<terrainsim::Observation>&, bool)> on_episode_end;
  std::function<void()> before_update;
};

struct SetupOptions {
  TrainOptions train;
  AWTVParams awtv;
  bool extended_reward = true;
};

namespace detail {

struct SetupWorker {
  ComposedRunner runner;
  std::mt19937_64 rng;
  policyopt::RolloutBuffer buffer;
  std::uint64_t episode_seed;
  std::size_t steps = 0;    // environment steps
  std::size_t samples = 0;  // setup transitions stored
  bool extending = false;
  std::vector<terrainsim::Observation> visited;
  terrainsim::Observation cached_obs{};
  double cached_value = 0.0;
  bool cache_valid = false;

  double target_value(const Policy& target, const terrainsim::Observation& o) {
    if (!cache_valid || o != cached_obs) {
      cached_obs = o;
      cached_value = target.value(o);
      cache_valid = true;
    }
    return cached_value;
  }

  SetupWorker(const EpisodeSpec& spec, const Ensemble& ensemble, std::uint64_t seed, std::size_t horizon)
      : runner(spec.course, spec.dynamics, ensemble, {SwitchMode::kSetup, {}, true}),
        rng(seed),
        buffer(horizon),
        episode_seed(seed * 7919 + 1) {}

  void begin_episode(const EpisodeSpec& spec) {
    runner.begin(spec.initial(episode_seed++));
    extending = false;
    visited.clear();
  }

  void finish_episode(const SetupHooks& hooks) {
    if (hooks.on_episode_end && !visited.empty()) hooks.on_episode_end(visited, runner.env().outcome()->success);
  }

  // Runs until the buffer is full; the episode in flight is resumed next call.
  void collect(const EpisodeSpec& spec, const BehaviorModule& module, Policy& setup, const SetupOptions& opt,
               const SetupHooks& hooks, std::size_t max_steps) {
    const Policy& target = *module.target;
    while (!buffer.full() && steps < max_steps) {
      if (runner.done()) begin_episode(spec);
      auto st = runner.step(rng, &setup);
      ++steps;
      const bool in_setup = st.acted == PolicyId::kSetup;
      if (in_setup) extending = false;
      if (in_setup || extending) {
        RewardContext ctx;
        ctx.env_reward = st.result.reward;
        ctx.target_reward = st.result.reward;
        ctx.setup_action = st.decision.action;
        std::vector<float> target_action;
        if (hooks.needs_target_action) {
          target_action = target.act_only(st.obs, nullptr).action;
          ctx.target_action = target_action;
        }
        ctx.terminal = st.result.done;
        ctx.v_state = target_value(target, st.obs);
        ctx.v_next = ctx.terminal ? 0.0 : target_value(target, st.next_obs);
        ctx.advantage = td_advantage(ctx.target_reward, ctx.v_state, ctx.v_next, opt.awtv.gamma);
        ctx.obs = &st.obs;
        ctx.next_obs = &st.next_obs;
        const double r_hat = hooks.reward(ctx);
        if (in_setup) {
          visited.push_back(st.obs);
          policyopt::Transition t;
          t.raw_obs.assign(st.obs.begin(), st.obs.end());
          t.obs = std::move(st.decision.obs);
          t.action = std::move(st.decision.action);
          t.switch_bit = st.decision.switch_bit;
          t.logp = st.decision.logp;
          t.reward = r_hat;
          t.value = st.decision.value;
          t.done = st.result.done || st.handed_over;
          t.policy = PolicyId::kSetup;
          buffer.push(std::move(t));
          ++samples;
          extending = st.handed_over && opt.extended_reward;
        } else {
          extend_reward(buffer, r_hat);
        }
      }
      if (st.result.done) finish_episode(hooks);
    }
  }

  double bootstrap(const Policy& setup) const {
    if (buffer.empty() || buffer.back().done || runner.done()) return 0.0;
    return setup.value(runner.env().observation());
  }
};

}  // namespace detail

/// Trains `module.setup` by the setup-before-switching loop: the default
/// policy walks until the artifact is detected, the setup policy acts and
/// stores (s, a, r_hat, tau_phi) until it hands over, the target finishes.
/// Full buffers trigger a PPO update followed by clear-except-last, and
/// post-handover rewards fold into the last stored entry.
/// `opt.train.budget` counts environment steps across all workers.
inline TrainingCurve train_setup(BehaviorModule& module, const Policy& walk, const EpisodeSpec& spec,
                                 const policyopt::PPOConfig& cfg, const SetupOptions& opt, SetupHooks hooks = {}) {
  cfg.validate();
  opt.awtv.validate();
  if (!module.target || !module.target->net().has_value_head()) throw InvalidInput("train_setup needs a target value");
  if (!module.setup.uses_switch()) throw InvalidInput("setup policy must use its switch head");
  if (opt.train.workers < 1) throw InvalidInput("workers must be >= 1");
  if (spec.course.artifacts.empty()) throw InvalidInput("train_setup needs a course with an artifact");
  for (const auto& a : spec.course.artifacts) {
    if (a.kind != module.kind) throw InvalidInput("train_setup course holds an artifact of another kind");
  }
  if (!hooks.reward) hooks.reward = awtv_setup_reward(opt.awtv);

  Ensemble ensemble;
  ensemble.walk = &walk;
  ensemble.add(module);
  auto eval = [&] {
    return composed_metrics(evaluate_composed(ensemble, spec.course, spec.dynamics, opt.train.eval_episodes,
                                              {SwitchMode::kSetup, {}, true}));
  };
  TrainingCurve curve;
  if (opt.train.budget == 0) return curve;

  std::vector<detail::SetupWorker> workers;
  for (int w = 0; w < opt.train.workers; ++w) {
    workers.emplace_back(spec, ensemble, opt.train.seed * 1000 + static_cast<std::uint64_t>(w) + 1, cfg.horizon);
    workers.back().begin_episode(spec);
  }
  policyopt::PpoUpdater ppo(module.setup.net(), cfg);
  std::mt19937_64 update_rng(opt.train.seed ^ 0x9e3779b97f4a7c15ULL);
  std::size_t updates = 0;
  auto total_steps = [&] {
    std::size_t s = 0;
    for (const auto& w : workers) s += w.steps;
    return s;
  };
  const std::size_t per_worker = opt.train.budget / workers.size();
  while (total_steps() < per_worker * workers.size()) {
    for (auto& w : workers) w.collect(spec, module, module.setup, opt, hooks, per_worker);
    bool all_full = true;
    for (const auto& w : workers) all_full = all_full && w.buffer.full();
    if (!all_full) break;
    if (hooks.before_update) hooks.before_update();
    std::vector<policyopt::WorkerBatch> batches;
    for (const auto& w : workers) batches.push_back({&w.buffer, w.bootstrap(module.setup)});
    ppo.update(batches, update_rng, true);
    for (auto& w : workers) w.buffer.clear_except_last();
    ++updates;
    if (opt.train.eval_every > 0 && updates % opt.train.eval_every == 0) {
      auto m = eval();
      curve.push_back({updates, total_steps(), m.success_pct, m.distance_pct});
      if (opt.train.stop_at_success && m.success_pct >= *opt.train.stop_at_success) return curve;
    }
  }
  if (curve.empty() || curve.back().update != updates) {
    auto m = eval();
    curve.push_back({updates, total_steps(), m.success_pct, m.distance_pct});
  }
  return curve;
}

}  // namespace relay::composer
