#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "relay/composer/module.hpp"
#include "relay/composer/switching.hpp"
#include "relay/composer/training.hpp"
#include "relay/terrainsim/runner.hpp"

namespace relay::composer {

enum class SwitchMode {
  kSetup,   // default -> setup -> target -> default
  kDirect,  // default -> target as soon as the artifact is detected
  kGated,   // default -> target once detected and the gate agrees
};

inline const char* to_string(SwitchMode m) {
  switch (m) {
    case SwitchMode::kSetup: return "setup";
    case SwitchMode::kDirect: return "direct";
    case SwitchMode::kGated: return "gated";
  }
  return "?";
}

using SwitchGate =
    std::function<bool(const terrainsim::Observation&, const RunnerState&, ArtifactKind)>;

struct RunnerOptions {
  SwitchMode mode = SwitchMode::kSetup;
  SwitchGate gate;
  bool sample_switch = false;  // sample tau_phi (training) or threshold at 0.5
};

/// One control step of a composed episode.
struct ComposedStep {
  PolicyId acted = PolicyId::kDefault;
  bool latched = false;
  ArtifactKind kind = ArtifactKind::kBlock;
  std::size_t artifact = 0;
  RunnerState state;
  terrainsim::Observation obs{};
  terrainsim::Observation next_obs{};
  policyopt::Decision decision;
  terrainsim::RunnerEnv::StepResult result;
  bool handed_over = false;  // setup raised tau_phi this step
};

/// Drives one environment through the default/setup/target state machine.
class ComposedRunner {
 public:
  ComposedRunner(Course course, DynamicsParams dyn, const Ensemble& ensemble, RunnerOptions options)
      : env_(std::move(course), dyn), ensemble_(&ensemble), options_(std::move(options)) {
    ensemble_->require_course(env_.course());
    if (options_.mode == SwitchMode::kGated && !options_.gate) throw InvalidInput("gated switching needs a gate");
  }

  void begin(const RunnerState& s) {
    env_.reset_to(s);
    switches_ = SwitchState{};
  }
  void begin(std::uint64_t seed) { begin(terrainsim::initial_state(env_.course(), seed, env_.params())); }

  bool done() const noexcept { return env_.done(); }
  const terrainsim::RunnerEnv& env() const noexcept { return env_; }
  const SwitchState& switches() const noexcept { return switches_; }

  /// `live_setup`, when given, replaces the module's setup policy and has its
  /// observation statistics updated as it acts.
  ComposedStep step(std::mt19937_64& rng, Policy* live_setup = nullptr) {
    const bool setup_enabled = options_.mode == SwitchMode::kSetup;
    const RunnerState s = env_.state();
    ComposedStep out;
    out.state = s;
    out.obs = env_.observation();

    if (switches_.active != PolicyId::kDefault && tau_theta(s, env_.course(), switches_.artifact)) {
      if (switches_.active == PolicyId::kSetup) transition(switches_, PolicyId::kTarget, s, setup_enabled);
      switches_ = select_policy(switches_, {false, false, true, switches_.kind, switches_.artifact}, s, setup_enabled);
    }
    if (switches_.active == PolicyId::kDefault) {
      const auto det = terrainsim::oracle_detect(s, env_.course());
      bool go = det.detected;
      if (go && options_.mode == SwitchMode::kGated) go = options_.gate(out.obs, s, det.kind);
      if (go) switches_ = select_policy(switches_, {true, false, false, det.kind, det.index}, s, setup_enabled);
    }

    out.acted = switches_.active;
    out.latched = switches_.latched;
    out.kind = switches_.kind;
    out.artifact = switches_.artifact;
    switch (switches_.active) {
      case PolicyId::kDefault:
        out.decision = ensemble_->walk->act_only(out.obs, &rng);
        break;
      case PolicyId::kSetup: {
        if (live_setup != nullptr) {
          out.decision = live_setup->act(out.obs, &rng, true);
        } else {
          out.decision = ensemble_->module(switches_.kind).setup.act_only(out.obs, &rng);
        }
        if (!options_.sample_switch) out.decision.switch_bit = out.decision.switch_prob > 0.5;
        break;
      }
      case PolicyId::kTarget:
        out.decision = ensemble_->module(switches_.kind).target->act_only(out.obs, &rng);
        break;
    }
    out.result = env_.step({out.decision.action[0], out.decision.action[1]});
    out.next_obs = env_.observation();
    if (out.acted == PolicyId::kSetup && out.decision.switch_bit) {
      out.handed_over = true;
      if (!out.result.done) {
        switches_ = select_policy(switches_, {false, true, false, switches_.kind, switches_.artifact},
                                  out.result.state, setup_enabled);
      }
    }
    return out;
  }

 private:
  terrainsim::RunnerEnv env_;
  const Ensemble* ensemble_;
  RunnerOptions options_;
  SwitchState switches_;
};

struct ComposedEpisode {
  terrainsim::EpisodeOutcome outcome;
  std::vector<SwitchEvent> events;
  int setup_steps = 0;
};

/// One evaluation episode: standard start from `seed`, actions sampled with
/// the evaluation generator for that seed.
inline ComposedEpisode run_composed_episode(const Ensemble& ensemble, const Course& course, const DynamicsParams& dyn,
                                            std::uint64_t seed, const RunnerOptions& options) {
  ComposedRunner runner(course, dyn, ensemble, options);
  runner.begin(seed);
  auto rng = eval_action_rng(seed);
  ComposedEpisode ep;
  while (!runner.done()) {
    auto st = runner.step(rng);
    if (st.acted == PolicyId::kSetup) ++ep.setup_steps;
  }
  ep.outcome = *runner.env().outcome();
  ep.events = runner.switches().log;
  return ep;
}

inline std::vector<ComposedEpisode> evaluate_composed(const Ensemble& ensemble, const Course& course,
                                                      const DynamicsParams& dyn, std::size_t episodes,
                                                      const RunnerOptions& options,
                                                      std::uint64_t seed_base = kEvalSeedBase) {
  std::vector<ComposedEpisode> out;
  out.reserve(episodes);
  for (std::size_t i = 0; i < episodes; ++i) {
    out.push_back(run_composed_episode(ensemble, course, dyn, seed_base + i, options));
  }
  return out;
}

inline terrainsim::SuccessDistance composed_metrics(const std::vector<ComposedEpisode>& episodes) {
  std::vector<terrainsim::EpisodeOutcome> o;
  o.reserve(episodes.size());
  for (const auto& e : episodes) o.push_back(e.outcome);
  return terrainsim::metrics(o);
}

}  // namespace relay::composer
