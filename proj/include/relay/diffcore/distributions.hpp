#pragma once

#include <cmath>
#include <numbers>
#include <span>
#include <string>

#include "relay/diffcore/tape.hpp"
#include "relay/error.hpp"

namespace relay::diffcore {

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;  // 0.5 * log(2*pi)

/// Diagonal Gaussian log-density:
/// sum_d [ -(a_d - mu_d)^2 / (2 sigma_d^2) - log sigma_d - 0.5 log 2pi ].
template <typename A, typename B, typename C>
double gaussian_logprob(std::span<const A> mean, std::span<const B> log_std, std::span<const C> action) {
  if (mean.size() != log_std.size() || mean.size() != action.size()) {
    throw InvalidInput("gaussian_logprob: dimension mismatch (mean " + std::to_string(mean.size()) +
                       ", log_std " + std::to_string(log_std.size()) + ", action " +
                       std::to_string(action.size()) + ")");
  }
  double total = 0.0;
  for (std::size_t d = 0; d < mean.size(); ++d) {
    const double ls = static_cast<double>(log_std[d]);
    const double diff = static_cast<double>(action[d]) - static_cast<double>(mean[d]);
    total += -diff * diff * std::exp(-2.0 * ls) * 0.5 - ls - kHalfLog2Pi;
  }
  return total;
}

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// log P(bit | logit) for a Bernoulli with P(1) = sigmoid(logit).
inline double bernoulli_logprob(double logit, bool bit) {
  return Tape<double>::log_sigmoid_value(bit ? logit : -logit);
}

/// Taped per-row Gaussian log-density. `mean` is n×A, `log_std` 1×A, `actions` n×A.
template <typename T>
typename Tape<T>::Var gaussian_logprob(Tape<T>& tape, typename Tape<T>::Var mean,
                                       typename Tape<T>::Var log_std, const Matrix<T>& actions) {
  auto a = tape.constant(actions);
  auto diff = tape.sub(a, mean);
  auto inv_var = tape.exp(tape.scale(log_std, T{-2}));
  auto quad = tape.scale(tape.mul_row(tape.square(diff), inv_var), T{-0.5});
  auto per_dim = tape.add_row(quad, tape.scale(log_std, T{-1}));
  const auto dims = static_cast<T>(actions.cols());
  return tape.shift(tape.sum_cols(per_dim), static_cast<T>(-dims * kHalfLog2Pi));
}

/// Taped Bernoulli log-probability; `logits` and `bits` are n×1.
template <typename T>
typename Tape<T>::Var bernoulli_logprob(Tape<T>& tape, typename Tape<T>::Var logits, const Matrix<T>& bits) {
  Matrix<T> signs = bits;
  for (auto& s : signs.values()) s = s > T{0.5} ? T{1} : T{-1};
  return tape.log_sigmoid(tape.mul(logits, tape.constant(std::move(signs))));
}

}  // namespace relay::diffcore
