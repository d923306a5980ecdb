#include <gtest/gtest.h>

#include <cmath>

#include "ronin/autodiff.hpp"
#include "ronin/error.hpp"
#include "ronin/rng.hpp"

using namespace ronin;
using namespace ronin::ad;

namespace {

constexpr double kOpTol = 1e-6;

Tensor random_tensor(Shape s, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(std::move(s));
  for (auto& v : t.data) v = rng.normal() * scale;
  return t;
}

// Values bounded away from zero so kinks never sit inside the probe step.
Tensor away_from_zero(Shape s, Rng& rng) {
  Tensor t = Tensor::zeros(std::move(s));
  for (auto& v : t.data) v = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(0.1, 1.5);
  return t;
}

Parameter& random_param(ParameterStore& store, const std::string& name, Shape s, Rng& rng,
                        double scale = 1.0) {
  auto& p = store.add(name, s);
  p.value = random_tensor(std::move(s), rng, scale);
  return p;
}

// Contracts the output against fixed random weights so every element matters.
Var project(Tape& t, const Var& out, std::uint64_t seed) {
  Rng rng(seed);
  return sum(mul(out, t.constant(random_tensor(out.shape(), rng))));
}

double check(ParameterStore& store, const std::function<Var(Tape&)>& f) {
  auto params = store.trainable();
  return grad_check(f, params);
}

}  // namespace

TEST(GradCheck, ElementwiseOps) {
  Rng rng(1);
  ParameterStore s;
  auto& a = random_param(s, "a", {3, 4}, rng);
  auto& b = random_param(s, "b", {3, 4}, rng);
  b.value = away_from_zero({3, 4}, rng);
  a.value = away_from_zero({3, 4}, rng);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, add(t.param(a), t.param(b)), 1); }), kOpTol);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, sub(t.param(a), t.param(b)), 2); }), kOpTol);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, mul(t.param(a), t.param(b)), 3); }), kOpTol);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, scale(t.param(a), -2.5), 4); }), kOpTol);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, add_scalar(neg(t.param(a)), 0.3), 5); }), kOpTol);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, abs(t.param(a)), 6); }), kOpTol);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, relu(t.param(a)), 7); }), kOpTol);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, tanh(t.param(a)), 8); }), kOpTol);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, sigmoid(t.param(a)), 9); }), kOpTol);
}

TEST(GradCheck, MatmulAndLinear) {
  Rng rng(2);
  ParameterStore s;
  auto& x = random_param(s, "x", {2, 5, 3}, rng);
  auto& a = random_param(s, "a", {4, 3}, rng);
  auto& w = random_param(s, "w", {6, 3}, rng);
  auto& b = random_param(s, "b", {6}, rng);
  auto& m = random_param(s, "m", {3, 6}, rng);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, matmul(t.param(a), t.param(m)), 1); }), kOpTol);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, linear(t.param(x), t.param(w), t.param(b)), 2); }),
            kOpTol);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, linear(t.param(a), t.param(w)), 3); }), kOpTol);
}

TEST(GradCheck, Convolutions) {
  Rng rng(3);
  ParameterStore s;
  auto& x = random_param(s, "x", {2, 11, 3}, rng);
  auto& w = random_param(s, "w", {4, 3, 3}, rng);
  auto& b = random_param(s, "b", {4}, rng);
  for (std::size_t d : {1u, 2u, 4u}) {
    EXPECT_LT(check(s, [&](Tape& t) { return project(t, causal_conv1d(t.param(x), t.param(w), t.param(b), d), d); }),
              kOpTol);
  }
  Conv1dOptions o;
  o.stride = 2;
  o.pad_left = 1;
  o.pad_right = 1;
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, conv1d(t.param(x), t.param(w), t.param(b), o), 9); }),
            kOpTol);
}

TEST(GradCheck, MaxPool) {
  Rng rng(4);
  ParameterStore s;
  auto& x = s.add("x", {2, 9, 3});
  // Distinct values spaced well beyond the probe step.
  std::vector<double> vals(x.value.numel());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = 0.01 * static_cast<double>((i * 37) % vals.size());
  x.value.data = vals;
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, maxpool1d(t.param(x), 3, 2, 1), 1); }), kOpTol);
}

TEST(GradCheck, BatchNormTrainAndEval) {
  Rng rng(5);
  ParameterStore s;
  auto& x = random_param(s, "x", {3, 6, 4}, rng);
  auto& g = random_param(s, "g", {4}, rng);
  auto& b = random_param(s, "b", {4}, rng);
  auto& rm = s.add("rm", {4}, false);
  auto& rv = s.add("rv", {4}, false);
  rv.value = Tensor::filled({4}, 1.3);
  BatchNormOptions train;
  EXPECT_LT(check(s,
                  [&](Tape& t) {
                    return project(t, batchnorm1d(t.param(x), t.param(g), t.param(b), rm, rv, train), 1);
                  }),
            kOpTol);
  BatchNormOptions eval;
  eval.train = false;
  EXPECT_LT(check(s,
                  [&](Tape& t) {
                    return project(t, batchnorm1d(t.param(x), t.param(g), t.param(b), rm, rv, eval), 2);
                  }),
            kOpTol);
}

TEST(GradCheck, DropoutWithFixedMask) {
  Rng rng(6);
  ParameterStore s;
  auto& x = random_param(s, "x", {4, 5}, rng);
  EXPECT_LT(check(s,
                  [&](Tape& t) {
                    Rng mask_rng(11);  // same mask on every evaluation
                    return project(t, dropout(t.param(x), 0.7, true, mask_rng), 1);
                  }),
            kOpTol);
}

TEST(GradCheck, BilinearAndLstm) {
  Rng rng(7);
  ParameterStore s;
  auto& x = random_param(s, "x", {3, 4}, rng);
  auto& y = random_param(s, "y", {3, 5}, rng);
  auto& w = random_param(s, "w", {2, 4, 5}, rng);
  auto& b = random_param(s, "b", {2}, rng);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, bilinear(t.param(x), t.param(y), t.param(w), t.param(b)), 1); }),
            kOpTol);

  ParameterStore l;
  const std::size_t B = 2, I = 3, H = 4;
  auto& seq = random_param(l, "seq", {B, 3, I}, rng);
  auto& h0 = random_param(l, "h0", {B, H}, rng, 0.5);
  auto& c0 = random_param(l, "c0", {B, H}, rng, 0.5);
  auto& wih = random_param(l, "wih", {4 * H, I}, rng, 0.5);
  auto& whh = random_param(l, "whh", {4 * H, H}, rng, 0.5);
  auto& bias = random_param(l, "bias", {4 * H}, rng, 0.5);
  EXPECT_LT(check(l,
                  [&](Tape& t) {
                    LstmState st{t.param(h0), t.param(c0)};
                    const Var xs = t.param(seq);
                    std::vector<Var> outs;
                    for (std::size_t k = 0; k < 3; ++k) {
                      const Var xk = reshape(slice(xs, 1, k, k + 1), {B, I});
                      st = lstm_cell(xk, st, t.param(wih), t.param(whh), t.param(bias));
                      outs.push_back(st.h);
                    }
                    return add(project(t, concat(outs, 1), 1), project(t, st.c, 2));
                  }),
            kOpTol);
}

TEST(GradCheck, ShapeOpsAndReductions) {
  Rng rng(8);
  ParameterStore s;
  auto& x = random_param(s, "x", {2, 5, 3}, rng);
  auto& y = random_param(s, "y", {2, 2, 3}, rng);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, concat({t.param(x), t.param(y)}, 1), 1); }), kOpTol);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, slice(t.param(x), 1, 1, 4), 2); }), kOpTol);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, reshape(t.param(x), {10, 3}), 3); }), kOpTol);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    EXPECT_LT(check(s, [&](Tape& t) { return project(t, sum_axis(t.param(x), axis), 4 + axis); }), kOpTol);
    EXPECT_LT(check(s, [&](Tape& t) { return project(t, mean_axis(t.param(x), axis), 7 + axis); }), kOpTol);
  }
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, sum_time(t.param(x)), 10); }), kOpTol);
  EXPECT_LT(check(s, [&](Tape& t) { return mean(t.param(x)); }), kOpTol);
  EXPECT_LT(check(s, [&](Tape& t) { return mse(t.param(x), scale(t.param(x), 0.3)); }), kOpTol);
  EXPECT_LT(check(s, [&](Tape& t) { return project(t, l2norm(t.param(x)), 11); }), kOpTol);
}

TEST(Backward, SumOfSquares) {
  Tape t;
  const Var x = t.input(Tensor({1}, {3.0}));
  t.backward(sum(mul(x, x)));
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Backward, LinearMseMatchesClosedForm) {
  Rng rng(9);
  ParameterStore s;
  auto& w = random_param(s, "w", {2, 3}, rng);
  const Tensor x = random_tensor({4, 3}, rng);
  const Tensor y = random_tensor({4, 2}, rng);
  Tape t;
  t.backward(mse(linear(t.constant(x), t.param(w)), t.constant(y)));
  // d/dW mean((Wx - y)^2) = 2/N sum_r (Wx_r - y_r) x_r^T
  for (std::size_t o = 0; o < 2; ++o) {
    for (std::size_t i = 0; i < 3; ++i) {
      double g = 0.0;
      for (std::size_t r = 0; r < 4; ++r) {
        double pred = 0.0;
        for (std::size_t k = 0; k < 3; ++k) pred += w.value.data[o * 3 + k] * x.data[r * 3 + k];
        g += 2.0 / 8.0 * (pred - y.data[r * 2 + o]) * x.data[r * 3 + i];
      }
      EXPECT_NEAR(w.grad[o * 3 + i], g, 1e-12);
    }
  }
}

TEST(Backward, DetachedAndConstantInputsGetNothing) {
  ParameterStore s;
  auto& w = s.add("w", {2});
  w.value.data = {1.0, 2.0};
  Tape t;
  const Var p = t.param(w);
  const Var loss = sum(mul(t.detach(p), t.constant(Tensor({2}, {1.0, 1.0}))));
  EXPECT_FALSE(loss.requires_grad());
  t.backward(loss);
  EXPECT_EQ(w.grad, (std::vector<double>{0.0, 0.0}));
}

TEST(Backward, NonScalarLossIsRejected) {
  Tape t;
  const Var x = t.input(Tensor({2}, {1.0, 2.0}));
  try {
    t.backward(x);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonScalarLoss);
  }
}

TEST(Backward, ParameterGradientsAccumulate) {
  ParameterStore s;
  auto& w = s.add("w", {1});
  w.value.data = {2.0};
  for (int k = 0; k < 2; ++k) {
    Tape t;
    const Var p = t.param(w);
    t.backward(sum(mul(p, p)));
  }
  EXPECT_DOUBLE_EQ(w.grad[0], 8.0);
  w.zero_grad();
  EXPECT_EQ(w.grad[0], 0.0);
}

TEST(Ops, ReluExample) {
  Tape t;
  const Var x = t.input(Tensor({4}, {-1.0, 0.0, 0.5, 2.0}));
  EXPECT_EQ(relu(x).value().data, (std::vector<double>{0.0, 0.0, 0.5, 2.0}));
}

TEST(Ops, CausalConvSeesOnlyThePast) {
  Rng rng(10);
  Tape t;
  const Tensor x = random_tensor({1, 20, 2}, rng);
  const Var w = t.constant(random_tensor({3, 3, 2}, rng));
  const Var b = t.constant(random_tensor({3}, rng));
  const auto base = causal_conv1d(t.constant(x), w, b, 2).value();
  ASSERT_EQ(base.shape, (Shape{1, 20, 3}));
  Tensor changed = x;
  for (std::size_t i = 12 * 2; i < changed.data.size(); ++i) changed.data[i] += 1.0;
  const auto after = causal_conv1d(t.constant(changed), w, b, 2).value();
  for (std::size_t i = 0; i < 12 * 3; ++i) EXPECT_EQ(after.data[i], base.data[i]);
  EXPECT_NE(after.data[12 * 3], base.data[12 * 3]);
}

TEST(Ops, LstmZeroWeightsGiveHalfGates) {
  Tape t;
  const Var x = t.constant(Tensor::filled({1, 2}, 1.0));
  const LstmState st{t.constant(Tensor::zeros({1, 3})), t.constant(Tensor::filled({1, 3}, 1.0))};
  const auto out = lstm_cell(x, st, t.constant(Tensor::zeros({12, 2})), t.constant(Tensor::zeros({12, 3})),
                             t.constant(Tensor::zeros({12})));
  // c = 0.5 * 1 + 0.5 * tanh(0) = 0.5, h = 0.5 * tanh(0.5)
  for (double c : out.c.value().data) EXPECT_DOUBLE_EQ(c, 0.5);
  for (double h : out.h.value().data) EXPECT_NEAR(h, 0.5 * std::tanh(0.5), 1e-15);
}

TEST(Ops, DropoutEvalIsIdentityAndTrainKeepsMean) {
  Rng rng(12);
  Tape t;
  const Var x = t.constant(Tensor::filled({10000}, 1.0));
  EXPECT_EQ(dropout(x, 0.5, false, rng).value().data, x.value().data);
  const auto y = dropout(x, 0.8, true, rng).value().data;
  double m = 0.0;
  for (double v : y) {
    EXPECT_TRUE(v == 0.0 || std::abs(v - 1.25) < 1e-15);
    m += v;
  }
  EXPECT_NEAR(m / 10000.0, 1.0, 0.02);
}

TEST(Ops, BatchNormNormalizesAndTracksRunningStats) {
  Rng rng(13);
  ParameterStore s;
  auto& rm = s.add("rm", {2}, false);
  auto& rv = s.add("rv", {2}, false);
  rv.value = Tensor::filled({2}, 1.0);
  Tensor x = Tensor::zeros({4, 50, 2});
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = (i % 2 ? 10.0 : -3.0) + rng.normal() * (i % 2 ? 4.0 : 0.5);
  Tape t;
  const auto y = batchnorm1d(t.constant(x), t.constant(Tensor::filled({2}, 1.0)), t.constant(Tensor::zeros({2})),
                             rm, rv, {}).value();
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0.0, v = 0.0;
    for (std::size_t i = c; i < y.data.size(); i += 2) m += y.data[i];
    m /= 200.0;
    for (std::size_t i = c; i < y.data.size(); i += 2) v += (y.data[i] - m) * (y.data[i] - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 200.0, 1.0, 1e-8);
  }
  EXPECT_NEAR(rm.value.data[1], 1.0, 0.3);  // 0.1 of the way from 0 to about 10
  EXPECT_NEAR(rm.value.data[0], -0.3, 0.05);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  ParameterStore s;
  auto& w = s.add("w", {3});
  w.value.data = {1.0, -2.0, 0.5};
  w.grad = {0.3, -7.0, 1e-3};
  auto params = s.trainable();
  adam_step(params, 0.1);
  EXPECT_NEAR(w.value.data[0], 0.9, 1e-6);
  EXPECT_NEAR(w.value.data[1], -1.9, 1e-6);
  EXPECT_NEAR(w.value.data[2], 0.4, 1e-4);
  EXPECT_EQ(w.step, 1);
}

TEST(Adam, ZeroGradientLeavesValues) {
  ParameterStore s;
  auto& w = s.add("w", {2});
  w.value.data = {1.0, 2.0};
  auto params = s.trainable();
  for (int k = 0; k < 3; ++k) adam_step(params, 0.1);
  EXPECT_EQ(w.value.data, (std::vector<double>{1.0, 2.0}));
}

TEST(Adam, ClipScalesGlobalNorm) {
  ParameterStore s;
  auto& a = s.add("a", {1});
  auto& b = s.add("b", {1});
  a.grad = {3.0};
  b.grad = {4.0};
  auto params = s.trainable();
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_NEAR(a.grad[0], 0.6, 1e-15);
  EXPECT_NEAR(b.grad[0], 0.8, 1e-15);
}

TEST(Plateau, Examples) {
  const std::vector<double> improving{5, 4, 3, 2, 1, 0.5, 0.4, 0.3, 0.2, 0.1, 0.05, 0.01};
  EXPECT_EQ(plateau_lr(improving, 1e-3, 0.1), 1e-3);
  std::vector<double> flat(10, 1.0);
  flat.insert(flat.begin(), 0.5);
  EXPECT_NEAR(plateau_lr(flat, 1e-3, 0.1), 1e-4, 1e-18);
  std::vector<double> nine(10, 1.0);
  nine[0] = 0.5;
  EXPECT_EQ(plateau_lr(nine, 1e-3, 0.1), 1e-3);
  std::vector<double> twenty(21, 1.0);
  twenty[0] = 0.5;
  EXPECT_NEAR(plateau_lr(twenty, 1e-3, 0.75), 1e-3 * 0.75 * 0.75, 1e-18);
}

TEST(Determinism, SameSeedSameUpdates) {
  auto run = [] {
    Rng rng(21);
    ParameterStore s;
    auto& w = random_param(s, "w", {3, 4}, rng);
    const Tensor x = random_tensor({8, 4}, rng);
    for (int k = 0; k < 5; ++k) {
      Tape t;
      auto params = s.trainable();
      zero_grad(params);
      t.backward(mean(tanh(dropout(linear(t.constant(x), t.param(w)), 0.8, true, rng))));
      adam_step(params, 0.01);
    }
    return w.value.data;
  };
  EXPECT_EQ(run(), run());
}
