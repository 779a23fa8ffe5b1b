#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "dalab/data.hpp"
#include "dalab/joint_model.hpp"

using namespace dalab;

namespace {
ProbBatch views_of(std::initializer_list<double> logits, std::size_t K) {
  Matrix z(1, logits.size());
  std::size_t j = 0;
  for (double v : logits) z(0, j++) = v;
  return prob_views_from_logits(z, K);
}
}  // namespace

TEST(ProbViews, AllZeroLogitsAreUniform) {
  const ProbBatch pb = views_of({0, 0, 0, 0}, 2);
  for (int j = 0; j < 4; ++j) EXPECT_NEAR(pb.p(0, j), 0.25, 1e-15);
  for (int k = 0; k < 2; ++k) {
    EXPECT_NEAR(pb.ps(0, k), 0.5, 1e-15);
    EXPECT_NEAR(pb.pt(0, k), 0.5, 1e-15);
  }
}

TEST(ProbViews, SaturationAtLargeLogit) {
  const ProbBatch pb = views_of({200, 0, 0, 0}, 2);
  EXPECT_NEAR(pb.p(0, 0), 1.0, 1e-12);
  EXPECT_NEAR(pb.ps(0, 0), 1.0, 1e-12);
  EXPECT_TRUE(all_finite(pb.logp));
}

// Renormalization linkage computed independently on random logits.
TEST(ProbViews, LinkageHoldsTo1e12) {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix z(4, 6);
    for (double& v : z.data()) v = rng.uniform(-8.0, 8.0);
    const ProbBatch pb = prob_views_from_logits(z, 3);
    EXPECT_LE(linkage_max_dev(pb), 1e-12);
    for (std::size_t i = 0; i < 4; ++i) {
      double sp = 0, sps = 0, spt = 0;
      for (int j = 0; j < 6; ++j) sp += pb.p(i, j);
      for (int k = 0; k < 3; ++k) {
        sps += pb.ps(i, k);
        spt += pb.pt(i, k);
      }
      EXPECT_NEAR(sp, 1.0, 1e-12);
      EXPECT_NEAR(sps, 1.0, 1e-12);
      EXPECT_NEAR(spt, 1.0, 1e-12);
    }
  }
}

// Argmax consistency: the view argmax equals the block argmax of p.
TEST(ProbViews, ArgmaxConsistencyAcrossViews) {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix z(1, 8);
    for (double& v : z.data()) v = rng.uniform(-5.0, 5.0);
    const ProbBatch pb = prob_views_from_logits(z, 4);
    std::size_t best_ps = 0, best_p_first = 0, best_pt = 0, best_p_second = 0;
    for (std::size_t k = 1; k < 4; ++k) {
      if (pb.ps(0, k) > pb.ps(0, best_ps)) best_ps = k;
      if (pb.p(0, k) > pb.p(0, best_p_first)) best_p_first = k;
      if (pb.pt(0, k) > pb.pt(0, best_pt)) best_pt = k;
      if (pb.p(0, k + 4) > pb.p(0, best_p_second + 4)) best_p_second = k;
    }
    EXPECT_EQ(best_ps, best_p_first);
    EXPECT_EQ(best_pt, best_p_second);
  }
}

TEST(Predict, ArgmaxAndConfidence) {
  const ProbBatch pb = views_of({std::log(0.7), std::log(0.3), 0, 0}, 2);
  const auto preds = predict(pb, Head::source_head);
  EXPECT_EQ(preds[0].label, 0);
  EXPECT_NEAR(preds[0].confidence, 0.7, 1e-12);
}

TEST(Predict, ExactTieBreaksToLowestIndex) {
  const ProbBatch pb = views_of({1.0, 1.0, 0, 0}, 2);
  EXPECT_EQ(predict(pb, Head::source_head)[0].label, 0);
}

// Joint head peaked at index K+2 -> category 2; target view agrees.
TEST(Predict, JointHeadReducesModK) {
  Matrix z(1, 8);
  z.fill(0.0);
  z(0, 6) = 9.0;  // index K+2 with K=4
  const ProbBatch pb = prob_views_from_logits(z, 4);
  EXPECT_EQ(predict(pb, Head::joint)[0].label, 2);
  EXPECT_EQ(predict(pb, Head::target_head)[0].label, 2);
}

TEST(ExportFeatures, ZeroExtractorGivesZeroFeatures) {
  JointModel m;
  m.K = 2;
  m.extractor.layers = {AffineLayer{Matrix(2, 4), Matrix(1, 4)}};
  m.head_src = AffineLayer{Matrix(4, 2), Matrix(1, 2)};
  m.head_tgt = AffineLayer{Matrix(4, 2), Matrix(1, 2)};
  const Matrix f = export_features(m, Matrix::from_rows({{1.0, -2.0}}));
  for (double v : f.data()) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(ExportFeatures, IdentityLikeExtractorPreservesNonnegativeInput) {
  JointModel m;
  m.K = 2;
  AffineLayer l{Matrix(2, 2), Matrix(1, 2)};
  l.W(0, 0) = l.W(1, 1) = 1.0;
  m.extractor.layers = {l};
  m.head_src = AffineLayer{Matrix(2, 2), Matrix(1, 2)};
  m.head_tgt = AffineLayer{Matrix(2, 2), Matrix(1, 2)};
  const Matrix x = Matrix::from_rows({{0.5, 2.0}});
  const Matrix f = export_features(m, x);
  EXPECT_DOUBLE_EQ(f(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(f(0, 1), 2.0);
}

// Feature export is byte-stable for a fixed seed.
TEST(ExportFeatures, ByteStableAcrossRuns) {
  auto render = []() {
    Rng rng(33);
    JointModel m = make_joint_model(3, {5}, 2, Activation::relu, rng);
    Matrix x(4, 3);
    for (double& v : x.data()) v = rng.uniform(-1, 1);
    const Matrix f = export_features(m, x);
    std::string s;
    for (double v : f.data()) s += fmt_double(v) + ",";
    return s;
  };
  EXPECT_EQ(render(), render());
}

TEST(JointModel, HeadsShareLogitsExactly) {
  Rng rng(21);
  JointModel m = make_joint_model(3, {4}, 3, Activation::relu, rng);
  Matrix x(2, 3);
  for (double& v : x.data()) v = rng.uniform(-1, 1);
  const auto f = m.forward(x);
  const Matrix zs = affine_forward(m.head_src, f.features);
  const Matrix zt = affine_forward(m.head_tgt, f.features);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_DOUBLE_EQ(f.logits(i, k), zs(i, k));
      EXPECT_DOUBLE_EQ(f.logits(i, k + 3), zt(i, k));
    }
}
