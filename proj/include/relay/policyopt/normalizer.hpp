#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "relay/error.hpp"

namespace relay::policyopt {

inline constexpr double kStdFloor = 1e-6;

/// Per-dimension running mean/variance. The mean is kept as sum / count so it
/// does not depend on arrival order whenever the sum itself is exact; M2 uses
/// the one-pass Welford update.
class RunningNormalizer {
 public:
  RunningNormalizer() = default;
  explicit RunningNormalizer(std::size_t dims) : sum_(dims, 0.0), mean_(dims, 0.0), m2_(dims, 0.0) {}

  RunningNormalizer(double count, std::vector<double> sum, std::vector<double> mean, std::vector<double> m2)
      : count_(count), sum_(std::move(sum)), mean_(std::move(mean)), m2_(std::move(m2)) {
    if (sum_.size() != mean_.size() || m2_.size() != mean_.size()) {
      throw InvalidInput("normalizer statistics have inconsistent dimensions");
    }
  }

  std::size_t dims() const noexcept { return mean_.size(); }
  double count() const noexcept { return count_; }
  const std::vector<double>& sum() const noexcept { return sum_; }
  const std::vector<double>& mean() const noexcept { return mean_; }
  const std::vector<double>& m2() const noexcept { return m2_; }

  double variance(std::size_t d) const { return count_ > 0 ? std::max(m2_[d] / count_, 0.0) : 0.0; }
  double stddev(std::size_t d) const { return std::sqrt(variance(d)); }

  void update(std::span<const double> x) {
    check(x.size());
    count_ += 1.0;
    for (std::size_t d = 0; d < x.size(); ++d) {
      const double delta = x[d] - mean_[d];
      sum_[d] += x[d];
      mean_[d] = sum_[d] / count_;
      m2_[d] += delta * (x[d] - mean_[d]);
    }
  }

  /// (x - mean) / max(std, 1e-6)
  std::vector<double> normalize(std::span<const double> x) const {
    check(x.size());
    std::vector<double> out(x.size());
    for (std::size_t d = 0; d < x.size(); ++d) out[d] = (x[d] - mean_[d]) / std::max(stddev(d), kStdFloor);
    return out;
  }

  bool operator==(const RunningNormalizer&) const = default;

 private:
  void check(std::size_t n) const {
    if (n != mean_.size()) {
      throw InvalidInput("normalizer expects " + std::to_string(mean_.size()) + " dims, got " + std::to_string(n));
    }
  }

  double count_ = 0.0;
  std::vector<double> sum_;
  std::vector<double> mean_;
  std::vector<double> m2_;
};

}  // namespace relay::policyopt
