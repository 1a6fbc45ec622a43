#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "relay/diffcore/matrix.hpp"
#include "relay/diffcore/tape.hpp"
#include "relay/error.hpp"

namespace relay::diffcore {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

struct NetShape {
  std::size_t input = 0;
  std::vector<std::size_t> hidden{64, 64};
  std::size_t action = 0;
  bool value_head = true;
  bool switch_head = false;

  bool operator==(const NetShape&) const = default;
};

struct NetInit {
  double log_std = -0.5;
  double mean_gain = 0.01;
  double value_gain = 1.0;
  double switch_bias = -3.0;
};

template <typename T>
struct NamedArray {
  std::string name;
  Matrix<T>* array;
};

template <typename T>
struct ConstNamedArray {
  std::string name;
  const Matrix<T>* array;
};

/// Feed-forward tanh actor trunk with linear heads (Gaussian mean, a
/// state-independent log-std row, optional switch logit) and an optional value
/// head on a separate critic trunk of the same widths.
template <typename T>
class ParameterizedNet {
 public:
  struct Output {
    std::vector<T> mean;
    std::vector<T> log_std;
    T value{};
    std::optional<T> switch_logit;
  };

  struct Taped {
    typename Tape<T>::Var mean;
    typename Tape<T>::Var log_std;
    std::optional<typename Tape<T>::Var> value;
    std::optional<typename Tape<T>::Var> switch_logit;
  };

  ParameterizedNet() = default;

  ParameterizedNet(const NetShape& shape, std::uint64_t seed, const NetInit& init = {}) : shape_(shape) {
    validate_shape(shape_);
    std::mt19937_64 rng(seed);
    std::size_t fan_in = shape_.input;
    for (std::size_t width : shape_.hidden) {
      weights_.push_back(random_matrix(width, fan_in, 1.0, rng));
      biases_.emplace_back(1, width);
      fan_in = width;
    }
    mean_w_ = random_matrix(shape_.action, fan_in, init.mean_gain, rng);
    mean_b_ = Matrix<T>(1, shape_.action);
    log_std_ = Matrix<T>(1, shape_.action, static_cast<T>(init.log_std));
    if (shape_.switch_head) {
      switch_w_ = random_matrix(1, fan_in, init.mean_gain, rng);
      switch_b_ = Matrix<T>(1, 1, static_cast<T>(init.switch_bias));
    }
    if (shape_.value_head) {
      std::size_t critic_in = shape_.input;
      for (std::size_t width : shape_.hidden) {
        critic_weights_.push_back(random_matrix(width, critic_in, 1.0, rng));
        critic_biases_.emplace_back(1, width);
        critic_in = width;
      }
      value_w_ = random_matrix(1, critic_in, init.value_gain, rng);
      value_b_ = Matrix<T>(1, 1);
    }
    clamp_log_std();
  }

  /// Every parameter zero except log-std (set to `log_std`).
  static ParameterizedNet zeros(const NetShape& shape, double log_std = 0.0) {
    ParameterizedNet net(shape, 0);
    for (auto& p : net.parameters()) p.array->fill(T{0});
    net.log_std_.fill(static_cast<T>(log_std));
    return net;
  }

  const NetShape& shape() const noexcept { return shape_; }
  std::size_t input_size() const noexcept { return shape_.input; }
  std::size_t action_size() const noexcept { return shape_.action; }
  bool has_value_head() const noexcept { return shape_.value_head; }
  bool has_switch_head() const noexcept { return shape_.switch_head; }

  /// Single-row evaluation with the same arithmetic as `forward_batch`. The
  /// critic trunk is skipped when `with_value` is false.
  Output forward(std::span<const T> obs, bool with_value = true) const {
    check_input(obs.size());
    for (T v : obs) {
      if (!std::isfinite(v)) throw InvalidInput("forward: non-finite observation entry");
    }
    auto trunk = [&](const std::vector<Matrix<T>>& ws, const std::vector<Matrix<T>>& bs) {
      std::vector<T> h(obs.begin(), obs.end());
      for (std::size_t k = 0; k < ws.size(); ++k) {
        h = affine_row(h, ws[k], bs[k]);
        for (auto& e : h) e = std::tanh(e);
      }
      return h;
    };
    const std::vector<T> h = trunk(weights_, biases_);
    Output out;
    out.mean = affine_row(h, mean_w_, mean_b_);
    out.log_std.assign(log_std_.values().begin(), log_std_.values().end());
    for (auto& e : out.log_std) e = std::clamp(e, T(kLogStdMin), T(kLogStdMax));
    if (shape_.switch_head) out.switch_logit = affine_row(h, switch_w_, switch_b_)[0];
    if (shape_.value_head && with_value) {
      out.value = affine_row(trunk(critic_weights_, critic_biases_), value_w_, value_b_)[0];
    }
    return out;
  }

  /// Value head alone.
  T value(std::span<const T> obs) const {
    check_input(obs.size());
    if (!shape_.value_head) throw UsageError("net has no value head");
    std::vector<T> h(obs.begin(), obs.end());
    for (std::size_t k = 0; k < critic_weights_.size(); ++k) {
      h = affine_row(h, critic_weights_[k], critic_biases_[k]);
      for (auto& e : h) e = std::tanh(e);
    }
    return affine_row(h, value_w_, value_b_)[0];
  }

  struct BatchHeads {
    Matrix<T> mean;
    Matrix<T> log_std;
    Matrix<T> value;
    Matrix<T> switch_logit;
  };

  /// Untaped batch evaluation; arithmetic is identical to `record`.
  BatchHeads forward_batch(const Matrix<T>& obs) const {
    check_input(obs.cols());
    auto trunk = [&](const std::vector<Matrix<T>>& ws, const std::vector<Matrix<T>>& bs) {
      Matrix<T> h = obs;
      for (std::size_t k = 0; k < ws.size(); ++k) {
        h = affine(h, ws[k], bs[k]);
        for (auto& e : h.values()) e = std::tanh(e);
      }
      return h;
    };
    const Matrix<T> h = trunk(weights_, biases_);
    BatchHeads out;
    out.mean = affine(h, mean_w_, mean_b_);
    out.log_std = log_std_;
    for (auto& e : out.log_std.values()) e = std::clamp(e, T(kLogStdMin), T(kLogStdMax));
    if (shape_.switch_head) out.switch_logit = affine(h, switch_w_, switch_b_);
    if (shape_.value_head) out.value = affine(trunk(critic_weights_, critic_biases_), value_w_, value_b_);
    return out;
  }

  /// Records the forward pass; every parameter is bound to the tape slot equal
  /// to its index in `parameters()`, whether or not it reaches the outputs.
  Taped record(Tape<T>& tape, const Matrix<T>& obs) const {
    check_input(obs.cols());
    auto params = parameters();
    std::vector<typename Tape<T>::Var> vars;
    vars.reserve(params.size());
    for (std::size_t s = 0; s < params.size(); ++s) vars.push_back(tape.parameter(*params[s].array, s));

    std::size_t slot = 0;
    const auto input = tape.constant(obs);
    auto trunk = [&](std::size_t layers) {
      auto h = input;
      for (std::size_t k = 0; k < layers; ++k) {
        h = tape.tanh(tape.linear(h, vars[slot], vars[slot + 1]));
        slot += 2;
      }
      return h;
    };
    const auto h = trunk(weights_.size());
    Taped out;
    out.mean = tape.linear(h, vars[slot], vars[slot + 1]);
    out.log_std = tape.clamp(vars[slot + 2], T(kLogStdMin), T(kLogStdMax));
    slot += 3;
    if (shape_.switch_head) {
      out.switch_logit = tape.linear(h, vars[slot], vars[slot + 1]);
      slot += 2;
    }
    if (shape_.value_head) {
      const auto hv = trunk(critic_weights_.size());
      out.value = tape.linear(hv, vars[slot], vars[slot + 1]);
    }
    return out;
  }

  std::vector<NamedArray<T>> parameters() {
    std::vector<NamedArray<T>> out;
    for (auto& c : const_cast<const ParameterizedNet*>(this)->parameters()) {
      out.push_back({c.name, const_cast<Matrix<T>*>(c.array)});
    }
    return out;
  }

  std::vector<ConstNamedArray<T>> parameters() const {
    std::vector<ConstNamedArray<T>> out;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      out.push_back({"layer" + std::to_string(k) + ".weight", &weights_[k]});
      out.push_back({"layer" + std::to_string(k) + ".bias", &biases_[k]});
    }
    out.push_back({"mean.weight", &mean_w_});
    out.push_back({"mean.bias", &mean_b_});
    out.push_back({"log_std", &log_std_});
    if (shape_.switch_head) {
      out.push_back({"switch.weight", &switch_w_});
      out.push_back({"switch.bias", &switch_b_});
    }
    if (shape_.value_head) {
      for (std::size_t k = 0; k < critic_weights_.size(); ++k) {
        out.push_back({"critic" + std::to_string(k) + ".weight", &critic_weights_[k]});
        out.push_back({"critic" + std::to_string(k) + ".bias", &critic_biases_[k]});
      }
      out.push_back({"value.weight", &value_w_});
      out.push_back({"value.bias", &value_b_});
    }
    return out;
  }

  /// Rebuilds a net from named arrays; the layer stack is inferred from names.
  static ParameterizedNet from_arrays(const std::vector<std::pair<std::string, Matrix<T>>>& arrays) {
    auto find = [&](const std::string& name) -> const Matrix<T>* {
      for (const auto& [n, m] : arrays) {
        if (n == name) return &m;
      }
      return nullptr;
    };
    auto require = [&](const std::string& name) -> const Matrix<T>& {
      const Matrix<T>* m = find(name);
      if (m == nullptr) throw FormatError("missing parameter array '" + name + "'");
      return *m;
    };
    NetShape shape;
    shape.hidden.clear();
    const Matrix<T>& mean_w = require("mean.weight");
    shape.action = mean_w.rows();
    std::size_t k = 0;
    for (; find("layer" + std::to_string(k) + ".weight") != nullptr; ++k) {
      const auto& w = require("layer" + std::to_string(k) + ".weight");
      if (k == 0) shape.input = w.cols();
      shape.hidden.push_back(w.rows());
    }
    if (k == 0) shape.input = mean_w.cols();
    shape.value_head = find("value.weight") != nullptr;
    shape.switch_head = find("switch.weight") != nullptr;
    ParameterizedNet net = zeros(shape);
    for (auto& p : net.parameters()) {
      const Matrix<T>& src = require(p.name);
      if (!src.same_shape(*p.array)) {
        throw FormatError("parameter '" + p.name + "' has shape " + shape_string(src) + ", expected " +
                          shape_string(*p.array));
      }
      *p.array = src;
    }
    return net;
  }

  void clamp_log_std() {
    for (auto& e : log_std_.values()) e = std::clamp(e, T(kLogStdMin), T(kLogStdMax));
  }

  bool all_finite() const {
    for (const auto& p : parameters()) {
      if (!p.array->all_finite()) return false;
    }
    return true;
  }

  bool operator==(const ParameterizedNet& other) const {
    if (!(shape_ == other.shape_)) return false;
    auto a = parameters();
    auto b = other.parameters();
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (!(*a[i].array == *b[i].array)) return false;
    }
    return true;
  }

 private:
  static void validate_shape(const NetShape& s) {
    if (s.input == 0 || s.action == 0) throw InvalidInput("net shape needs non-zero input and action sizes");
    for (std::size_t w : s.hidden) {
      if (w == 0) throw InvalidInput("hidden layer width must be positive");
    }
  }

  void check_input(std::size_t n) const {
    if (n != shape_.input) {
      throw InvalidInput("observation has " + std::to_string(n) + " entries, net expects " +
                         std::to_string(shape_.input));
    }
  }

  static Matrix<T> random_matrix(std::size_t rows, std::size_t cols, double gain, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, gain / std::sqrt(static_cast<double>(cols)));
    Matrix<T> m(rows, cols);
    for (auto& e : m.values()) e = static_cast<T>(normal(rng));
    return m;
  }

  static Matrix<T> affine(const Matrix<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
    Matrix<T> y = matmul_nt(x, w);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += b[j];
    }
    return y;
  }

  static std::vector<T> affine_row(const std::vector<T>& x, const Matrix<T>& w, const Matrix<T>& b) {
    std::vector<T> y(w.rows());
    const std::size_t k = w.cols();
    for (std::size_t j = 0; j < w.rows(); ++j) {
      const T* wr = w.row(j).data();
      T acc{0};
      for (std::size_t p = 0; p < k; ++p) acc += x[p] * wr[p];
      y[j] = acc + b[j];
    }
    return y;
  }

  NetShape shape_;
  std::vector<Matrix<T>> weights_;
  std::vector<Matrix<T>> biases_;
  Matrix<T> mean_w_, mean_b_, log_std_;
  Matrix<T> switch_w_, switch_b_;
  std::vector<Matrix<T>> critic_weights_;
  std::vector<Matrix<T>> critic_biases_;
  Matrix<T> value_w_, value_b_;
};

}  // namespace relay::diffcore
