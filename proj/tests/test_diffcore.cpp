#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "relay/diffcore/adam.hpp"
#include "relay/diffcore/distributions.hpp"
#include "relay/diffcore/net.hpp"
#include "relay/diffcore/tape.hpp"

using namespace relay;
using namespace relay::diffcore;

namespace {

NetShape small_shape(std::size_t in, std::vector<std::size_t> hidden, std::size_t act, bool value, bool sw) {
  NetShape s;
  s.input = in;
  s.hidden = std::move(hidden);
  s.action = act;
  s.value_head = value;
  s.switch_head = sw;
  return s;
}

Matrix<double> random_obs(std::size_t n, std::size_t in, std::mt19937_64& rng) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Matrix<double> m(n, in);
  for (auto& v : m.values()) v = nd(rng);
  return m;
}

// Scalar loss touching every head: sum(mean^2) + sum(log_std) + value + switch.
double scalar_loss(const ParameterizedNet<double>& net, const Matrix<double>& obs) {
  auto h = net.forward_batch(obs);
  double l = 0.0;
  for (double v : h.mean.values()) l += v * v;
  for (double v : h.log_std.values()) l += v;
  for (double v : h.value.values()) l += v;
  for (double v : h.switch_logit.values()) l += 0.5 * v;
  return l;
}

Tape<double>::Var taped_loss(Tape<double>& tape, const ParameterizedNet<double>& net, const Matrix<double>& obs) {
  auto h = net.record(tape, obs);
  auto l = tape.add(tape.sum(tape.square(h.mean)), tape.sum(h.log_std));
  if (h.value) l = tape.add(l, tape.sum(*h.value));
  if (h.switch_logit) l = tape.add(l, tape.scale(tape.sum(*h.switch_logit), 0.5));
  return l;
}

}  // namespace

TEST(Forward, ZeroWeightNetOutputsLastBias) {
  auto net = ParameterizedNet<double>::zeros(small_shape(3, {4}, 2, true, false));
  for (auto& p : net.parameters()) {
    if (p.name == "mean.bias") {
      (*p.array)[0] = 0.25;
      (*p.array)[1] = -1.5;
    }
  }
  std::vector<double> obs{3.0, -2.0, 7.0};
  auto out = net.forward(obs);
  EXPECT_EQ(out.mean[0], 0.25);
  EXPECT_EQ(out.mean[1], -1.5);
}

TEST(Forward, HandEvaluatedOneByOneStack) {
  auto net = ParameterizedNet<double>::zeros(small_shape(1, {1}, 1, false, false));
  for (auto& p : net.parameters()) {
    if (p.name == "layer0.weight" || p.name == "mean.weight") (*p.array)[0] = 1.0;
  }
  std::vector<double> obs{0.5};
  EXPECT_DOUBLE_EQ(net.forward(obs).mean[0], std::tanh(0.5));
}

TEST(Forward, DeterministicAndMatchesBatch) {
  ParameterizedNet<float> net(small_shape(5, {8, 8}, 2, true, true), 11);
  std::vector<float> obs{0.1f, -0.2f, 0.3f, 1.5f, -2.0f};
  auto a = net.forward(obs);
  auto b = net.forward(obs);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.value, b.value);
  auto batch = net.forward_batch(Matrix<float>::row_vector(obs));
  EXPECT_EQ(a.mean[0], batch.mean(0, 0));
  EXPECT_EQ(a.mean[1], batch.mean(0, 1));
  EXPECT_EQ(a.value, batch.value(0, 0));
  EXPECT_EQ(*a.switch_logit, batch.switch_logit(0, 0));
  EXPECT_EQ(net.value(obs), a.value);
}

TEST(Forward, RejectsBadInput) {
  ParameterizedNet<float> net(small_shape(3, {4}, 1, true, false), 0);
  std::vector<float> short_obs{1.0f, 2.0f};
  EXPECT_THROW(net.forward(short_obs), InvalidInput);
  std::vector<float> nan_obs{1.0f, NAN, 0.0f};
  EXPECT_THROW(net.forward(nan_obs), InvalidInput);
}

TEST(Forward, LogStdClampedAndInitialized) {
  NetInit init;
  ParameterizedNet<float> net(small_shape(2, {4}, 2, false, false), 0, init);
  std::vector<float> obs{0.0f, 0.0f};
  EXPECT_FLOAT_EQ(net.forward(obs).log_std[0], -0.5f);
  for (auto& p : net.parameters()) {
    if (p.name == "log_std") p.array->fill(9.0f);
  }
  EXPECT_FLOAT_EQ(net.forward(obs).log_std[0], 2.0f);
}

double logprob_d(const std::vector<double>& m, const std::vector<double>& ls, const std::vector<double>& a) {
  return gaussian_logprob<double, double, double>(m, ls, a);
}

TEST(Gaussian, HandValues) {
  std::vector<double> m{0.3}, ls{0.0}, a{0.3};
  EXPECT_NEAR(logprob_d(m, ls, a), -0.9189385332046727, 1e-12);
  std::vector<double> m0{0.0}, a1{1.0};
  EXPECT_NEAR(logprob_d(m0, ls, a1), -0.5 - 0.9189385332046727, 1e-12);
}

TEST(Gaussian, DensityIntegratesToOne) {
  std::vector<double> m{0.7}, ls{-0.3};
  double total = 0.0;
  const double dx = 1e-3;
  for (double x = -10.0; x <= 10.0; x += dx) {
    std::vector<double> a{x};
    total += std::exp(logprob_d(m, ls, a)) * dx;
  }
  EXPECT_NEAR(total, 1.0, 1e-3);
}

TEST(Gaussian, MaximizedAtMean) {
  std::vector<double> m{0.4, -1.2}, ls{-0.5, 0.2};
  const double at_mean = logprob_d(m, ls, m);
  for (double d0 = -0.5; d0 <= 0.5; d0 += 0.05) {
    for (double d1 = -0.5; d1 <= 0.5; d1 += 0.05) {
      std::vector<double> a{m[0] + d0, m[1] + d1};
      EXPECT_LE(logprob_d(m, ls, a), at_mean + 1e-15);
    }
  }
}

TEST(Tape, SumOfParametersHasUnitGradient) {
  Tape<double> tape;
  Matrix<double> p(2, 3, 0.7);
  auto v = tape.parameter(p, 0);
  auto g = tape.backward(tape.sum(v));
  for (double e : g[0].values()) EXPECT_EQ(e, 1.0);
}

TEST(Tape, UntouchedParameterGetsExactZero) {
  Tape<double> tape;
  Matrix<double> a(1, 2, 1.0), b(3, 1, 2.0);
  auto va = tape.parameter(a, 0);
  tape.parameter(b, 1);
  auto g = tape.backward(tape.sum(tape.square(va)));
  ASSERT_EQ(g.size(), 2u);
  EXPECT_EQ(g[1].rows(), 3u);
  for (double e : g[1].values()) EXPECT_EQ(e, 0.0);
}

TEST(Tape, BackwardOnEmptyTapeIsUsageError) {
  Tape<double> tape;
  Tape<double>::Var none;
  EXPECT_THROW(tape.backward(none), UsageError);
}

TEST(Tape, ValueHeadGradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(5);
  ParameterizedNet<double> net(small_shape(4, {6, 5}, 2, true, false), 3);
  auto obs = random_obs(1, 4, rng);
  Tape<double> tape;
  auto heads = net.record(tape, obs);
  auto grads = tape.backward(tape.sum(*heads.value));
  auto params = net.parameters();
  const double h = 1e-5;
  for (std::size_t s = 0; s < params.size(); ++s) {
    for (std::size_t k = 0; k < params[s].array->size(); ++k) {
      double& w = (*params[s].array)[k];
      const double keep = w;
      w = keep + h;
      const double up = net.forward_batch(obs).value[0];
      w = keep - h;
      const double down = net.forward_batch(obs).value[0];
      w = keep;
      const double fd = (up - down) / (2 * h);
      const double an = grads[s][k];
      EXPECT_LE(std::abs(an - fd), 1e-4 * std::max(1.0, std::abs(fd))) << params[s].name << "[" << k << "]";
    }
  }
}

TEST(Tape, RandomNetsMatchFiniteDifferences) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<int> width(1, 6);
    auto shape = small_shape(width(rng), {static_cast<std::size_t>(width(rng)), static_cast<std::size_t>(width(rng))},
                             width(rng) % 3 + 1, trial % 2 == 0, trial % 3 == 0);
    ParameterizedNet<double> net(shape, trial);
    auto obs = random_obs(3, shape.input, rng);
    Tape<double> tape;
    auto grads = tape.backward(taped_loss(tape, net, obs));
    auto params = net.parameters();
    for (std::size_t s = 0; s < params.size(); ++s) {
      for (std::size_t k = 0; k < params[s].array->size(); ++k) {
        double& w = (*params[s].array)[k];
        const double keep = w;
        w = keep + 1e-5;
        const double up = scalar_loss(net, obs);
        w = keep - 1e-5;
        const double down = scalar_loss(net, obs);
        w = keep;
        const double fd = (up - down) / 2e-5;
        EXPECT_LE(std::abs(grads[s][k] - fd), 1e-4 * std::max(1.0, std::abs(fd)))
            << "trial " << trial << " " << params[s].name << "[" << k << "]";
      }
    }
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  ParameterizedNet<double> net(small_shape(2, {3}, 1, true, false), 1);
  const auto before = net;
  AdamState<double> adam(net.parameters(), {});
  std::vector<Matrix<double>> grads;
  for (const auto& p : net.parameters()) grads.emplace_back(p.array->rows(), p.array->cols());
  auto params = net.parameters();
  adam.step(params, grads);
  EXPECT_TRUE(net == before);
  EXPECT_EQ(adam.step_count(), 1u);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Matrix<double> w(1, 1, 0.0);
  std::vector<NamedArray<double>> params{{"w", &w}};
  AdamState<double> adam(params, {0.1, 0.9, 0.999, 1e-8});
  std::vector<Matrix<double>> grads{Matrix<double>(1, 1, 1.0)};
  adam.step(params, grads);
  EXPECT_NEAR(w[0], -0.1, 1e-7);
}

TEST(Adam, NonFiniteGradientRejected) {
  Matrix<double> w(1, 2, 0.5);
  std::vector<NamedArray<double>> params{{"w", &w}};
  AdamState<double> adam(params, {});
  Matrix<double> g(1, 2, 1.0);
  g[1] = NAN;
  std::vector<Matrix<double>> grads{g};
  EXPECT_THROW(adam.step(params, grads), NumericError);
  EXPECT_EQ(w[0], 0.5);
  EXPECT_EQ(adam.step_count(), 0u);
}

TEST(Adam, IdenticalRunsAreBitIdentical) {
  auto run = [] {
    ParameterizedNet<float> net(small_shape(3, {4}, 2, true, false), 9);
    AdamState<float> adam(net.parameters(), {});
    std::mt19937_64 rng(2);
    Matrix<float> obs(4, 3);
    std::normal_distribution<float> nd;
    for (auto& v : obs.values()) v = nd(rng);
    for (int i = 0; i < 5; ++i) {
      Tape<float> tape;
      auto h = net.record(tape, obs);
      auto grads = tape.backward(tape.add(tape.sum(tape.square(h.mean)), tape.sum(*h.value)));
      auto params = net.parameters();
      adam.step(params, grads);
    }
    return net;
  };
  EXPECT_TRUE(run() == run());
}
