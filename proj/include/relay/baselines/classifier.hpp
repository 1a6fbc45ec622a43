#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "relay/diffcore/adam.hpp"
#include "relay/diffcore/distributions.hpp"
#include "relay/diffcore/net.hpp"
#include "relay/diffcore/tape.hpp"
#include "relay/error.hpp"
#include "relay/policyopt/normalizer.hpp"

namespace relay::baselines {

struct ClassifierConfig {
  std::vector<std::size_t> hidden{32, 32};
  double learning_rate = 1e-3;
  std::size_t minibatch = 256;
};

struct FitStats {
  double loss = 0.0;      // mean binary cross-entropy after the last epoch
  double accuracy = 0.0;  // fraction correct at threshold 0.5
};

/// Tanh net with a sigmoid output fitted by binary cross-entropy. Inputs are
/// standardized with statistics of the most recent fit's data.
class BinaryClassifier {
 public:
  BinaryClassifier() = default;
  BinaryClassifier(std::size_t inputs, std::uint64_t seed, ClassifierConfig config = {})
      : config_(std::move(config)), normalizer_(inputs) {
    diffcore::NetShape shape;
    shape.input = inputs;
    shape.hidden = config_.hidden;
    shape.action = 1;
    shape.value_head = false;
    shape.switch_head = false;
    diffcore::NetInit init;
    init.mean_gain = 1.0;
    net_ = diffcore::ParameterizedNet<float>(shape, seed, init);
    adam_ = diffcore::AdamState<float>(net_.parameters(), {config_.learning_rate, 0.9, 0.999, 1e-8});
  }

  std::size_t inputs() const noexcept { return normalizer_.dims(); }
  bool fitted() const noexcept { return fits_ > 0; }
  const diffcore::ParameterizedNet<float>& net() const noexcept { return net_; }

  double logit(std::span<const double> x) const {
    const auto z = standardize(x);
    return static_cast<double>(net_.forward(z, false).mean[0]);
  }

  /// Probability in [0, 1].
  double probability(std::span<const double> x) const { return diffcore::sigmoid(logit(x)); }

  /// Minibatch BCE epochs over (x, y); y in {0, 1}.
  FitStats fit(const std::vector<std::vector<double>>& x, const std::vector<int>& y, int epochs, std::mt19937_64& rng) {
    if (x.size() != y.size()) throw InvalidInput("classifier fit: inputs and labels differ in count");
    if (x.empty()) throw InvalidInput("classifier fit: no data");
    if (epochs <= 0) throw InvalidInput("classifier fit: epochs must be positive");
    policyopt::RunningNormalizer stats(inputs());
    for (const auto& row : x) stats.update(row);
    normalizer_ = stats;
    std::vector<std::vector<float>> z;
    z.reserve(x.size());
    for (const auto& row : x) z.push_back(standardize(row));

    std::vector<std::size_t> order(x.size());
    std::iota(order.begin(), order.end(), 0);
    for (int e = 0; e < epochs; ++e) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t start = 0; start < order.size(); start += config_.minibatch) {
        const std::size_t end = std::min(order.size(), start + config_.minibatch);
        diffcore::Matrix<float> batch(end - start, inputs());
        diffcore::Matrix<float> pos(end - start, 1);
        diffcore::Matrix<float> neg(end - start, 1);
        for (std::size_t r = start; r < end; ++r) {
          const std::size_t i = order[r];
          std::copy(z[i].begin(), z[i].end(), batch.row(r - start).begin());
          pos(r - start, 0) = y[i] != 0 ? 1.0f : 0.0f;
          neg(r - start, 0) = y[i] != 0 ? 0.0f : 1.0f;
        }
        diffcore::Tape<float> tape;
        auto heads = net_.record(tape, batch);
        auto lp = tape.log_sigmoid(heads.mean);
        auto ln = tape.log_sigmoid(tape.scale(heads.mean, -1.0f));
        auto ll = tape.add(tape.mul(lp, tape.constant(pos)), tape.mul(ln, tape.constant(neg)));
        auto loss = tape.scale(tape.mean(ll), -1.0f);
        auto grads = tape.backward(loss);
        auto params = net_.parameters();
        adam_.step(params, grads);
      }
    }
    ++fits_;
    FitStats s;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double l = static_cast<double>(net_.forward(z[i], false).mean[0]);
      const double p = diffcore::sigmoid(l);
      const bool label = y[i] != 0;
      s.loss -= label ? diffcore::Tape<double>::log_sigmoid_value(l) : diffcore::Tape<double>::log_sigmoid_value(-l);
      if ((p > 0.5) == label) ++correct;
    }
    s.loss /= static_cast<double>(x.size());
    s.accuracy = static_cast<double>(correct) / static_cast<double>(x.size());
    return s;
  }

 private:
  std::vector<float> standardize(std::span<const double> x) const {
    auto n = normalizer_.normalize(x);
    return std::vector<float>(n.begin(), n.end());
  }

  ClassifierConfig config_;
  policyopt::RunningNormalizer normalizer_;
  diffcore::ParameterizedNet<float> net_;
  diffcore::AdamState<float> adam_;
  int fits_ = 0;
};

}  // namespace relay::baselines
