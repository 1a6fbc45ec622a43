#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "relay/diffcore/adam.hpp"
#include "relay/diffcore/distributions.hpp"
#include "relay/diffcore/tape.hpp"
#include "relay/policyopt/policy.hpp"
#include "relay/policyopt/returns.hpp"
#include "relay/policyopt/rollout_buffer.hpp"

namespace relay::policyopt {

struct PPOConfig {
  double gamma = 0.99;
  double lambda = 0.95;
  double clip = 0.2;
  int epochs = 4;
  std::size_t minibatch = 64;
  double learning_rate = 3e-4;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  std::size_t horizon = 2048;
  double max_grad_norm = 0.5;  // <= 0 disables global-norm clipping

  void validate() const {
    if (!(gamma > 0.0 && gamma <= 1.0)) throw InvalidInput("PPO gamma must be in (0, 1]");
    if (!(lambda > 0.0 && lambda <= 1.0)) throw InvalidInput("PPO lambda must be in (0, 1]");
    if (!(clip > 0.0)) throw InvalidInput("PPO clip must be positive");
    if (epochs <= 0) throw InvalidInput("PPO epochs must be positive");
    if (minibatch == 0 || horizon <= minibatch) throw InvalidInput("PPO horizon must exceed minibatch size");
    if (!(learning_rate > 0.0)) throw InvalidInput("PPO learning rate must be positive");
  }
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double clip_fraction = 0.0;
  std::size_t minibatches = 0;
};

/// One worker's contribution to an update: its buffer and V(s_T) for the
/// state following the buffer's last entry.
struct WorkerBatch {
  const RolloutBuffer* buffer = nullptr;
  double next_value = 0.0;
};

namespace detail {

struct PreparedBatch {
  std::vector<double> advantages;  // normalized
  std::vector<double> returns;
};

inline PreparedBatch prepare(const WorkerBatch& w, const PPOConfig& cfg) {
  const auto& e = w.buffer->entries();
  std::vector<StepSignal> steps(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) steps[i] = {e[i].reward, e[i].value, e[i].done};
  PreparedBatch out;
  out.advantages = gae_advantages(steps, w.next_value, cfg.gamma, cfg.lambda);
  out.returns.resize(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) out.returns[i] = out.advantages[i] + e[i].value;
  const double n = static_cast<double>(e.size());
  const double mean = std::accumulate(out.advantages.begin(), out.advantages.end(), 0.0) / n;
  double var = 0.0;
  for (double a : out.advantages) var += (a - mean) * (a - mean);
  const double sd = std::sqrt(var / n);
  for (double& a : out.advantages) a = (a - mean) / (sd + 1e-8);
  return out;
}

}  // namespace detail

/// Clipped-surrogate PPO with a persistent Adam state.
class PpoUpdater {
 public:
  PpoUpdater(Net& net, PPOConfig config) : net_(&net), config_(config) {
    config_.validate();
    adam_ = diffcore::AdamState<float>(net.parameters(), {config_.learning_rate, 0.9, 0.999, 1e-5});
  }

  const PPOConfig& config() const noexcept { return config_; }
  const diffcore::AdamState<float>& adam() const noexcept { return adam_; }

  UpdateStats update(const RolloutBuffer& buffer, double next_value, std::mt19937_64& rng, bool use_switch) {
    WorkerBatch w{&buffer, next_value};
    return update(std::span<const WorkerBatch>(&w, 1), rng, use_switch);
  }

  /// Averaged-gradient update over several workers. Every worker sees the
  /// same minibatch index permutation; gradients are summed in worker order
  /// and divided by the worker count. On a non-finite loss or gradient the
  /// net and optimizer are restored and NumericError is raised.
  UpdateStats update(std::span<const WorkerBatch> workers, std::mt19937_64& rng, bool use_switch) {
    if (workers.empty()) throw InvalidInput("ppo_update needs at least one worker batch");
    const std::size_t n = workers.front().buffer->size();
    for (const auto& w : workers) {
      if (w.buffer == nullptr || w.buffer->empty()) throw UsageError("ppo_update on an empty buffer");
      if (w.buffer->size() != n) throw InvalidInput("ppo_update: worker buffers differ in length");
    }
    std::vector<detail::PreparedBatch> prepared;
    for (const auto& w : workers) prepared.push_back(detail::prepare(w, config_));

    Net snapshot = *net_;
    diffcore::AdamState<float> adam_snapshot = adam_;
    try {
      return run_epochs(workers, prepared, rng, use_switch);
    } catch (const NumericError&) {
      *net_ = std::move(snapshot);
      adam_ = std::move(adam_snapshot);
      throw;
    }
  }

  /// Loss and gradients for one minibatch of one worker (exposed for tests).
  struct MinibatchResult {
    double loss = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double clip_fraction = 0.0;
    std::vector<diffcore::Matrix<float>> grads;
  };

  MinibatchResult minibatch_gradients(const RolloutBuffer& buffer, std::span<const std::size_t> idx,
                                      std::span<const double> advantages, std::span<const double> returns,
                                      bool use_switch) const {
    using diffcore::Matrix;
    const std::size_t m = idx.size();
    const std::size_t in = net_->input_size();
    const std::size_t act = net_->action_size();
    Matrix<float> obs(m, in), actions(m, act), bits(m, 1), old_logp(m, 1), adv(m, 1), ret(m, 1);
    for (std::size_t r = 0; r < m; ++r) {
      const Transition& t = buffer[idx[r]];
      std::copy(t.obs.begin(), t.obs.end(), obs.row(r).begin());
      std::copy(t.action.begin(), t.action.end(), actions.row(r).begin());
      bits[r] = t.switch_bit ? 1.0f : 0.0f;
      old_logp[r] = static_cast<float>(t.logp);
      adv[r] = static_cast<float>(advantages[idx[r]]);
      ret[r] = static_cast<float>(returns[idx[r]]);
    }

    diffcore::Tape<float> tape;
    auto heads = net_->record(tape, obs);
    auto logp = diffcore::gaussian_logprob(tape, heads.mean, heads.log_std, actions);
    if (use_switch) {
      if (!heads.switch_logit) throw InvalidInput("use_switch requires a switch head");
      logp = tape.add(logp, diffcore::bernoulli_logprob(tape, *heads.switch_logit, bits));
    }
    auto ratio = tape.exp(tape.sub(logp, tape.constant(old_logp)));
    auto adv_v = tape.constant(adv);
    auto surr1 = tape.mul(ratio, adv_v);
    const auto eps = static_cast<float>(config_.clip);
    auto surr2 = tape.mul(tape.clamp(ratio, 1.0f - eps, 1.0f + eps), adv_v);
    auto policy_loss = tape.scale(tape.mean(tape.minimum(surr1, surr2)), -1.0f);
    auto loss = policy_loss;
    std::optional<diffcore::Tape<float>::Var> value_loss;
    if (heads.value) {
      value_loss = tape.scale(tape.mean(tape.square(tape.sub(*heads.value, tape.constant(ret)))), 0.5f);
      loss = tape.add(loss, tape.scale(*value_loss, static_cast<float>(config_.value_coef)));
    }
    if (config_.entropy_coef != 0.0) {
      // Gaussian entropy = sum(log_std) + const
      auto entropy = tape.sum(heads.log_std);
      loss = tape.sub(loss, tape.scale(entropy, static_cast<float>(config_.entropy_coef)));
    }

    MinibatchResult res;
    res.loss = tape.value(loss)[0];
    res.policy_loss = tape.value(policy_loss)[0];
    res.value_loss = value_loss ? tape.value(*value_loss)[0] : 0.0;
    if (!std::isfinite(res.loss)) throw NumericError("ppo_update: non-finite loss");
    const auto& rv = tape.value(ratio);
    std::size_t clipped = 0;
    for (std::size_t r = 0; r < m; ++r) {
      if (std::abs(rv[r] - 1.0f) > eps) ++clipped;
    }
    res.clip_fraction = static_cast<double>(clipped) / static_cast<double>(m);
    res.grads = tape.backward(loss);
    return res;
  }

 private:
  UpdateStats run_epochs(std::span<const WorkerBatch> workers, const std::vector<detail::PreparedBatch>& prepared,
                         std::mt19937_64& rng, bool use_switch) {
    const std::size_t n = workers.front().buffer->size();
    const std::size_t mb = std::min(config_.minibatch, n);
    std::vector<std::size_t> order(n);
    UpdateStats stats;
    auto params = net_->parameters();
    for (int epoch = 0; epoch < config_.epochs; ++epoch) {
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start + mb <= n; start += mb) {
        std::span<const std::size_t> idx(order.data() + start, mb);
        std::vector<diffcore::Matrix<float>> grads;
        for (std::size_t w = 0; w < workers.size(); ++w) {
          auto res = minibatch_gradients(*workers[w].buffer, idx, prepared[w].advantages, prepared[w].returns,
                                         use_switch);
          stats.policy_loss += res.policy_loss;
          stats.value_loss += res.value_loss;
          stats.clip_fraction += res.clip_fraction;
          if (w == 0) {
            grads = std::move(res.grads);
          } else {
            for (std::size_t p = 0; p < grads.size(); ++p) {
              for (std::size_t k = 0; k < grads[p].size(); ++k) grads[p][k] += res.grads[p][k];
            }
          }
        }
        if (workers.size() > 1) {
          const float inv = 1.0f / static_cast<float>(workers.size());
          for (auto& g : grads) {
            for (auto& e : g.values()) e *= inv;
          }
        }
        clip_global_norm(grads);
        adam_.step(params, grads);
        net_->clamp_log_std();
        if (!net_->all_finite()) throw NumericError("ppo_update: parameters became non-finite");
        ++stats.minibatches;
      }
    }
    const double denom = static_cast<double>(std::max<std::size_t>(stats.minibatches * workers.size(), 1));
    stats.policy_loss /= denom;
    stats.value_loss /= denom;
    stats.clip_fraction /= denom;
    return stats;
  }

  void clip_global_norm(std::vector<diffcore::Matrix<float>>& grads) const {
    if (config_.max_grad_norm <= 0.0) return;
    double sq = 0.0;
    for (const auto& g : grads) {
      for (float e : g.values()) sq += static_cast<double>(e) * e;
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) throw NumericError("ppo_update: non-finite gradient norm");
    if (norm > config_.max_grad_norm) {
      const auto s = static_cast<float>(config_.max_grad_norm / norm);
      for (auto& g : grads) {
        for (auto& e : g.values()) e *= s;
      }
    }
  }

  Net* net_;
  PPOConfig config_;
  diffcore::AdamState<float> adam_;
};

}  // namespace relay::policyopt
