#include <gtest/gtest.h>

#include <cmath>

#include "dalab/catda.hpp"
#include "dalab/grad_check.hpp"
#include "dalab/joint_model.hpp"
#include "dalab/net.hpp"

using namespace dalab;

TEST(Mlp, ZeroWeightsGiveZeroOutput) {
  Mlp m;
  m.layers = {AffineLayer{Matrix(2, 3), Matrix(1, 3)}, AffineLayer{Matrix(3, 2), Matrix(1, 2)}};
  MlpCache cache;
  const Matrix out = m.forward(Matrix::from_rows({{0.7, -1.3}}), &cache);
  for (double v : out.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(Mlp, IdentityWeightReluClampsNegative) {
  Mlp m;
  AffineLayer l{Matrix(2, 2), Matrix(1, 2)};
  l.W(0, 0) = 1.0;
  l.W(1, 1) = 1.0;
  m.layers = {l};
  MlpCache cache;
  const Matrix out = m.forward(Matrix::from_rows({{-1.0, 2.0}}), &cache);
  EXPECT_DOUBLE_EQ(out(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(out(0, 1), 2.0);
}

// Independent scalar re-evaluation of a random 2->3->2 relu network.
TEST(Mlp, RandomNetMatchesHandRolledForward) {
  Rng rng(42);
  Mlp m = make_mlp(2, {3, 2}, Activation::relu, rng);
  const Matrix x = Matrix::from_rows({{0.3, -0.8}, {1.1, 0.4}});
  MlpCache cache;
  const Matrix out = m.forward(x, &cache);

  for (std::size_t i = 0; i < x.rows(); ++i) {
    double h[3];
    for (int j = 0; j < 3; ++j) {
      double z = m.layers[0].b(0, j);
      for (int k = 0; k < 2; ++k) z += x(i, k) * m.layers[0].W(k, j);
      h[j] = z > 0 ? z : 0;
    }
    for (int j = 0; j < 2; ++j) {
      double z = m.layers[1].b(0, j);
      for (int k = 0; k < 3; ++k) z += h[k] * m.layers[1].W(k, j);
      const double expected = z > 0 ? z : 0;
      EXPECT_NEAR(out(i, j), expected, 1e-15);
    }
  }
}

TEST(Mlp, ShapeErrorOnBadInput) {
  Rng rng(1);
  Mlp m = make_mlp(3, {2}, Activation::relu, rng);
  EXPECT_THROW(m.forward(Matrix(1, 4), nullptr), std::invalid_argument);
}

// Pure linear layer, loss = sum of outputs: dW = X^T * ones.
TEST(MlpBackward, LinearLayerSumLoss) {
  Mlp m;
  Rng rng(7);
  m.act = Activation::identity;
  m.layers = {make_affine(3, 2, rng)};
  const Matrix x = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
  MlpCache cache;
  m.forward(x, &cache);
  Matrix dW(3, 2), db(1, 2);
  std::vector<Matrix*> slots = {&dW, &db};
  const Matrix d_out(2, 2, 1.0);  // dL/dy = 1 for loss = sum(y)
  m.backward(d_out, cache, slots);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t j = 0; j < 2; ++j) EXPECT_DOUBLE_EQ(dW(k, j), x(0, k) + x(1, k));
  EXPECT_DOUBLE_EQ(db(0, 0), 2.0);
}

// A relu-dead unit passes no gradient.
TEST(MlpBackward, DeadReluUnitHasZeroGradient) {
  Mlp m;
  m.act = Activation::relu;
  AffineLayer l{Matrix(1, 2), Matrix(1, 2)};
  l.W(0, 0) = 1.0;   // unit 0 alive for positive input
  l.W(0, 1) = -1.0;  // unit 1 dead for positive input
  m.layers = {l};
  MlpCache cache;
  m.forward(Matrix::from_rows({{2.0}}), &cache);
  Matrix dW(1, 2), db(1, 2);
  std::vector<Matrix*> slots = {&dW, &db};
  m.backward(Matrix(1, 2, 1.0), cache, slots);
  EXPECT_DOUBLE_EQ(dW(0, 0), 2.0);
  EXPECT_DOUBLE_EQ(dW(0, 1), 0.0);
  EXPECT_DOUBLE_EQ(db(0, 1), 0.0);
}

// Finite-difference audit of the full classification loss on a random net.
TEST(MlpBackward, ClsLossMatchesFiniteDifferences) {
  Rng rng(11);
  JointModel m = make_joint_model(4, {6}, 3, Activation::relu, rng);
  Matrix x(5, 4);
  for (double& v : x.data()) v = rng.uniform(-1.0, 1.0);
  std::vector<int> ys = {0, 2, 1, 1, 0};

  ParamSet params = m.params();
  GradSet grads;
  grads.init_like(params);
  auto eval = [&](GradSet* g) {
    auto f = m.forward(x);
    ProbBatch pb = prob_views_from_logits(f.logits, m.K);
    Matrix dZ(pb.size(), 2 * m.K);
    const double v = loss_cls(pb, ys, 1.0, g ? &dZ : nullptr);
    if (g) m.backward(f, dZ, *g, true, true);
    return v;
  };
  grads.zero();
  eval(&grads);
  const auto res = grad_check([&]() { return eval(nullptr); }, params, grads, 1e-5);
  EXPECT_LE(res.max_rel_err, 1e-4) << "worst at " << res.worst_param;
}

TEST(GradCheck, QuadraticLossIsExact) {
  Rng rng(3);
  Mlp m = make_mlp(2, {3}, Activation::identity, rng);
  ParamSet params;
  params.add("W", Group::extractor, &m.layers[0].W);
  params.add("b", Group::extractor, &m.layers[0].b);
  GradSet grads;
  grads.init_like(params);
  // loss = 1/2 ||theta||^2, gradient = theta
  auto loss = [&]() {
    double s = 0;
    for (auto& p : params)
      for (double v : p.value->data()) s += 0.5 * v * v;
    return s;
  };
  for (std::size_t i = 0; i < params.size(); ++i) grads.g[i] = *params[i].value;
  const auto res = grad_check(loss, params, grads, 1e-5);
  EXPECT_LE(res.max_rel_err, 1e-8);
}
