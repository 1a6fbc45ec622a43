#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "relay/diffcore/matrix.hpp"
#include "relay/error.hpp"

namespace relay::diffcore {

/// Reverse-mode tape over matrix-valued nodes.
///
/// Parameters enter the tape through `parameter(value, slot)`; `backward`
/// returns one gradient per slot, zero-filled for slots whose leaf never
/// reached the loss. The op set is what the policy/value losses need and
/// nothing more.
template <typename T>
class Tape {
 public:
  class Var {
   public:
    Var() = default;
    std::size_t id() const noexcept { return id_; }

   private:
    friend class Tape;
    explicit Var(std::size_t id) : id_(id) {}
    std::size_t id_ = static_cast<std::size_t>(-1);
  };

  Var constant(Matrix<T> value) { return push(std::move(value), false, {}); }

  Var parameter(const Matrix<T>& value, std::size_t slot) {
    Var v = push(value, true, {});
    nodes_[v.id_].slot = static_cast<long>(slot);
    if (slot >= slot_shapes_.size()) slot_shapes_.resize(slot + 1);
    slot_shapes_[slot] = {value.rows(), value.cols()};
    slot_nodes_.resize(slot_shapes_.size(), kNone);
    slot_nodes_[slot] = v.id_;
    return v;
  }

  const Matrix<T>& value(Var v) const { return node(v).value; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // y = x w^T + b, with x n×k, w m×k, b 1×m.
  Var linear(Var x, Var w, Var b) {
    const auto& xv = value(x);
    const auto& wv = value(w);
    const auto& bv = value(b);
    if (bv.rows() != 1 || bv.cols() != wv.rows()) {
      throw InvalidInput("linear: bias shape " + shape_string(bv) + " vs weight " +
                         shape_string(wv));
    }
    Matrix<T> y = matmul_nt(xv, wv);
    for (std::size_t i = 0; i < y.rows(); ++i) {
      for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += bv[j];
    }
    return push(std::move(y), any_grad({x, w, b}), [x, w, b](Tape& t, const Matrix<T>& g) {
      if (t.wants(x)) t.accumulate(x, matmul_nn(g, t.value(w)));
      if (t.wants(w)) t.accumulate(w, matmul_tn(g, t.value(x)));
      if (t.wants(b)) {
        Matrix<T> gb(1, g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < g.cols(); ++j) gb[j] += g(i, j);
        }
        t.accumulate(b, gb);
      }
    });
  }

  Var tanh(Var a) {
    Matrix<T> y = value(a);
    for (auto& e : y.values()) e = std::tanh(e);
    const std::size_t out = nodes_.size();
    return push(std::move(y), any_grad({a}), [a, out](Tape& t, const Matrix<T>& g) {
      const auto& yv = t.nodes_[out].value;
      Matrix<T> ga = g;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= T{1} - yv[i] * yv[i];
      t.accumulate(a, ga);
    });
  }

  Var exp(Var a) {
    Matrix<T> y = value(a);
    for (auto& e : y.values()) e = std::exp(e);
    const std::size_t out = nodes_.size();
    return push(std::move(y), any_grad({a}), [a, out](Tape& t, const Matrix<T>& g) {
      Matrix<T> ga = g;
      const auto& yv = t.nodes_[out].value;
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= yv[i];
      t.accumulate(a, ga);
    });
  }

  Var square(Var a) {
    Matrix<T> y = value(a);
    for (auto& e : y.values()) e = e * e;
    return push(std::move(y), any_grad({a}), [a](Tape& t, const Matrix<T>& g) {
      Matrix<T> ga = g;
      const auto& av = t.value(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= T{2} * av[i];
      t.accumulate(a, ga);
    });
  }

  // log(sigmoid(a)), evaluated without overflow for large |a|.
  Var log_sigmoid(Var a) {
    Matrix<T> y = value(a);
    for (auto& e : y.values()) e = log_sigmoid_value(e);
    return push(std::move(y), any_grad({a}), [a](Tape& t, const Matrix<T>& g) {
      Matrix<T> ga = g;
      const auto& av = t.value(a);
      // d/da log sigmoid(a) = sigmoid(-a)
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= std::exp(log_sigmoid_value(-av[i]));
      t.accumulate(a, ga);
    });
  }

  Var add(Var a, Var b) {
    require_same_shape(value(a), value(b), "add");
    Matrix<T> y = value(a);
    const auto& bv = value(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
    return push(std::move(y), any_grad({a, b}), [a, b](Tape& t, const Matrix<T>& g) {
      t.accumulate(a, g);
      t.accumulate(b, g);
    });
  }

  Var sub(Var a, Var b) {
    require_same_shape(value(a), value(b), "sub");
    Matrix<T> y = value(a);
    const auto& bv = value(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
    return push(std::move(y), any_grad({a, b}), [a, b](Tape& t, const Matrix<T>& g) {
      t.accumulate(a, g);
      if (t.wants(b)) {
        Matrix<T> gb = g;
        for (auto& e : gb.values()) e = -e;
        t.accumulate(b, gb);
      }
    });
  }

  Var mul(Var a, Var b) {
    require_same_shape(value(a), value(b), "mul");
    Matrix<T> y = value(a);
    const auto& bv = value(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
    return push(std::move(y), any_grad({a, b}), [a, b](Tape& t, const Matrix<T>& g) {
      if (t.wants(a)) {
        Matrix<T> ga = g;
        const auto& bv2 = t.value(b);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] *= bv2[i];
        t.accumulate(a, ga);
      }
      if (t.wants(b)) {
        Matrix<T> gb = g;
        const auto& av = t.value(a);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] *= av[i];
        t.accumulate(b, gb);
      }
    });
  }

  // a (n×m) + row (1×m) broadcast over rows.
  Var add_row(Var a, Var row) {
    const auto& av = value(a);
    const auto& rv = value(row);
    if (rv.rows() != 1 || rv.cols() != av.cols()) {
      throw InvalidInput("add_row: " + shape_string(av) + " vs " + shape_string(rv));
    }
    Matrix<T> y = av;
    for (std::size_t i = 0; i < y.rows(); ++i) {
      for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += rv[j];
    }
    return push(std::move(y), any_grad({a, row}), [a, row](Tape& t, const Matrix<T>& g) {
      t.accumulate(a, g);
      if (t.wants(row)) t.accumulate(row, column_sums(g));
    });
  }

  // a (n×m) * row (1×m) broadcast over rows.
  Var mul_row(Var a, Var row) {
    const auto& av = value(a);
    const auto& rv = value(row);
    if (rv.rows() != 1 || rv.cols() != av.cols()) {
      throw InvalidInput("mul_row: " + shape_string(av) + " vs " + shape_string(rv));
    }
    Matrix<T> y = av;
    for (std::size_t i = 0; i < y.rows(); ++i) {
      for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) *= rv[j];
    }
    return push(std::move(y), any_grad({a, row}), [a, row](Tape& t, const Matrix<T>& g) {
      const auto& av2 = t.value(a);
      const auto& rv2 = t.value(row);
      if (t.wants(a)) {
        Matrix<T> ga = g;
        for (std::size_t i = 0; i < ga.rows(); ++i) {
          for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) *= rv2[j];
        }
        t.accumulate(a, ga);
      }
      if (t.wants(row)) {
        Matrix<T> gr(1, av2.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
          for (std::size_t j = 0; j < g.cols(); ++j) gr[j] += g(i, j) * av2(i, j);
        }
        t.accumulate(row, gr);
      }
    });
  }

  Var scale(Var a, T s) {
    Matrix<T> y = value(a);
    for (auto& e : y.values()) e *= s;
    return push(std::move(y), any_grad({a}), [a, s](Tape& t, const Matrix<T>& g) {
      Matrix<T> ga = g;
      for (auto& e : ga.values()) e *= s;
      t.accumulate(a, ga);
    });
  }

  Var shift(Var a, T s) {
    Matrix<T> y = value(a);
    for (auto& e : y.values()) e += s;
    return push(std::move(y), any_grad({a}), [a](Tape& t, const Matrix<T>& g) { t.accumulate(a, g); });
  }

  // Gradient passes where lo <= a <= hi.
  Var clamp(Var a, T lo, T hi) {
    Matrix<T> y = value(a);
    for (auto& e : y.values()) e = std::clamp(e, lo, hi);
    return push(std::move(y), any_grad({a}), [a, lo, hi](Tape& t, const Matrix<T>& g) {
      Matrix<T> ga = g;
      const auto& av = t.value(a);
      for (std::size_t i = 0; i < ga.size(); ++i) {
        if (av[i] < lo || av[i] > hi) ga[i] = T{0};
      }
      t.accumulate(a, ga);
    });
  }

  // Elementwise minimum; ties route the gradient to `a`.
  Var minimum(Var a, Var b) {
    require_same_shape(value(a), value(b), "minimum");
    Matrix<T> y = value(a);
    const auto& bv = value(b);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::min(y[i], bv[i]);
    return push(std::move(y), any_grad({a, b}), [a, b](Tape& t, const Matrix<T>& g) {
      const auto& av = t.value(a);
      const auto& bv2 = t.value(b);
      Matrix<T> ga(g.rows(), g.cols());
      Matrix<T> gb(g.rows(), g.cols());
      for (std::size_t i = 0; i < g.size(); ++i) {
        if (av[i] <= bv2[i]) {
          ga[i] = g[i];
        } else {
          gb[i] = g[i];
        }
      }
      if (t.wants(a)) t.accumulate(a, ga);
      if (t.wants(b)) t.accumulate(b, gb);
    });
  }

  // n×m -> n×1
  Var sum_cols(Var a) {
    const auto& av = value(a);
    Matrix<T> y(av.rows(), 1);
    for (std::size_t i = 0; i < av.rows(); ++i) {
      T acc{0};
      for (std::size_t j = 0; j < av.cols(); ++j) acc += av(i, j);
      y[i] = acc;
    }
    return push(std::move(y), any_grad({a}), [a](Tape& t, const Matrix<T>& g) {
      const auto& av2 = t.value(a);
      Matrix<T> ga(av2.rows(), av2.cols());
      for (std::size_t i = 0; i < ga.rows(); ++i) {
        for (std::size_t j = 0; j < ga.cols(); ++j) ga(i, j) = g[i];
      }
      t.accumulate(a, ga);
    });
  }

  // -> 1×1
  Var sum(Var a) {
    T acc{0};
    for (T e : value(a).values()) acc += e;
    return push(Matrix<T>(1, 1, acc), any_grad({a}), [a](Tape& t, const Matrix<T>& g) {
      const auto& av = t.value(a);
      t.accumulate(a, Matrix<T>(av.rows(), av.cols(), g[0]));
    });
  }

  Var mean(Var a) {
    const auto n = static_cast<T>(value(a).size());
    if (value(a).empty()) throw InvalidInput("mean of empty matrix");
    return scale(sum(a), T{1} / n);
  }

  /// Gradients of a 1×1 `loss`, one per parameter slot.
  std::vector<Matrix<T>> backward(Var loss) {
    if (nodes_.empty()) throw UsageError("backward called on an empty tape (no forward pass recorded)");
    if (loss.id_ >= nodes_.size()) throw UsageError("backward: loss is not a node of this tape");
    if (backward_done_) throw UsageError("backward already ran on this tape");
    const auto& lv = nodes_[loss.id_].value;
    if (lv.rows() != 1 || lv.cols() != 1) {
      throw UsageError("backward: loss must be a scalar, got " + shape_string(lv));
    }
    backward_done_ = true;
    if (nodes_[loss.id_].requires_grad) {
      accumulate(loss, Matrix<T>(1, 1, T{1}));
      for (std::size_t i = loss.id_ + 1; i-- > 0;) {
        Node& n = nodes_[i];
        if (!n.has_grad || !n.back) continue;
        Matrix<T> g = std::move(n.grad);
        n.back(*this, g);
      }
    }
    std::vector<Matrix<T>> grads(slot_shapes_.size());
    for (std::size_t s = 0; s < slot_shapes_.size(); ++s) {
      const std::size_t id = slot_nodes_[s];
      if (id != kNone && nodes_[id].has_grad) {
        grads[s] = nodes_[id].grad;
      } else {
        grads[s] = Matrix<T>(slot_shapes_[s].first, slot_shapes_[s].second);
      }
    }
    return grads;
  }

  static T log_sigmoid_value(T a) {
    // log(1/(1+e^-a)) = -log1p(e^-a) for a >= 0; a - log1p(e^a) otherwise
    return a >= T{0} ? -std::log1p(std::exp(-a)) : a - std::log1p(std::exp(a));
  }

 private:
  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    bool has_grad = false;
    bool requires_grad = false;
    long slot = -1;
    std::function<void(Tape&, const Matrix<T>&)> back;
  };

  const Node& node(Var v) const {
    if (v.id_ >= nodes_.size()) throw UsageError("variable does not belong to this tape");
    return nodes_[v.id_];
  }

  bool wants(Var v) const { return nodes_[v.id_].requires_grad; }

  bool any_grad(std::initializer_list<Var> vars) const {
    for (Var v : vars) {
      if (node(v).requires_grad) return true;
    }
    return false;
  }

  Var push(Matrix<T> value, bool requires_grad, std::function<void(Tape&, const Matrix<T>&)> back) {
    if (backward_done_) throw UsageError("cannot record onto a tape after backward");
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Var(nodes_.size() - 1);
  }

  void accumulate(Var v, const Matrix<T>& g) {
    Node& n = nodes_[v.id_];
    if (!n.requires_grad) return;
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
      return;
    }
    for (std::size_t i = 0; i < g.size(); ++i) n.grad[i] += g[i];
  }

  static Matrix<T> column_sums(const Matrix<T>& g) {
    Matrix<T> out(1, g.cols());
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) out[j] += g(i, j);
    }
    return out;
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<std::size_t, std::size_t>> slot_shapes_;
  std::vector<std::size_t> slot_nodes_;
  bool backward_done_ = false;
};

}  // namespace relay::diffcore
