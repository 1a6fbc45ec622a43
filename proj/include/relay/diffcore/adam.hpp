#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "relay/diffcore/matrix.hpp"
#include "relay/diffcore/net.hpp"
#include "relay/error.hpp"

namespace relay::diffcore {

struct AdamConfig {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adaptive-moment optimizer with bias correction. Moments are kept in double
/// regardless of the parameter type.
template <typename T>
class AdamState {
 public:
  AdamState() = default;

  template <typename Params>
  AdamState(const Params& params, AdamConfig config) : config_(config) {
    for (const auto& p : params) {
      first_.emplace_back(p.array->rows(), p.array->cols());
      second_.emplace_back(p.array->rows(), p.array->cols());
    }
  }

  std::uint64_t step_count() const noexcept { return step_; }
  const AdamConfig& config() const noexcept { return config_; }
  void set_learning_rate(double lr) { config_.learning_rate = lr; }
  const std::vector<Matrix<double>>& first_moments() const noexcept { return first_; }
  const std::vector<Matrix<double>>& second_moments() const noexcept { return second_; }

  /// Applies one update. Non-finite gradients leave parameters and moments
  /// untouched and raise NumericError.
  void step(std::span<const NamedArray<T>> params, std::span<const Matrix<T>> grads) {
    if (params.size() != first_.size() || grads.size() != first_.size()) {
      throw InvalidInput("adam_step: expected " + std::to_string(first_.size()) + " parameter arrays, got " +
                         std::to_string(params.size()) + " params / " + std::to_string(grads.size()) + " grads");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      require_same_shape(*params[i].array, grads[i], "adam_step");
      if (!params[i].array->same_shape(first_[i])) {
        throw InvalidInput("adam_step: parameter '" + params[i].name + "' changed shape");
      }
      if (!grads[i].all_finite()) throw NumericError("adam_step: non-finite gradient for '" + params[i].name + "'");
    }
    ++step_;
    const double t = static_cast<double>(step_);
    const double bc1 = 1.0 - std::pow(config_.beta1, t);
    const double bc2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      Matrix<T>& p = *params[i].array;
      const Matrix<T>& g = grads[i];
      Matrix<double>& m = first_[i];
      Matrix<double>& v = second_[i];
      for (std::size_t k = 0; k < p.size(); ++k) {
        const double gk = static_cast<double>(g[k]);
        m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * gk;
        v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * gk * gk;
        const double m_hat = m[k] / bc1;
        const double v_hat = v[k] / bc2;
        p[k] = static_cast<T>(static_cast<double>(p[k]) - config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon));
      }
    }
  }

 private:
  AdamConfig config_;
  std::vector<Matrix<double>> first_;
  std::vector<Matrix<double>> second_;
  std::uint64_t step_ = 0;
};

}  // namespace relay::diffcore
