#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "dalab/matrix.hpp"

namespace dalab {

/// Floor used only inside logarithms of weighting terms recomputed from
/// materialized probabilities (verification paths). The distributions
/// themselves are never floored; losses read stabilized log-softmax values.
inline double floored_log(double x) { return std::log(std::max(x, 1e-30)); }

inline double log_sum_exp(std::span<const double> z, std::size_t lo, std::size_t hi) {
  double m = z[lo];
  for (std::size_t j = lo + 1; j < hi; ++j) m = std::max(m, z[j]);
  double s = 0.0;
  for (std::size_t j = lo; j < hi; ++j) s += std::exp(z[j] - m);
  return m + std::log(s);
}

/// Which half of the 2K logits a term addresses: first = source block
/// (indices 0..K-1), second = target block (indices K..2K-1).
enum class Block { first, second };

/// The three probability views of a batch of joint 2K logits: p over all 2K
/// classes, ps/pt the block-renormalized K-way views. All are softmaxes of
/// the same logits computed via max-shifted log-sum-exp; log forms are kept
/// so losses never take log of a materialized probability.
struct ProbBatch {
  std::size_t K = 0;
  Matrix logits;               // n x 2K
  Matrix logp, p;              // n x 2K
  Matrix logps, ps;            // n x K
  Matrix logpt, pt;            // n x K
  std::vector<double> lse_full, lse_b1, lse_b2;  // per row

  std::size_t size() const { return logits.rows(); }

  const Matrix& view(Block b) const { return b == Block::first ? ps : pt; }
  const Matrix& logview(Block b) const { return b == Block::first ? logps : logpt; }
  /// log of the collective block probability sum_{k in B} p_k.
  double log_block_mass(std::size_t i, Block b) const {
    return (b == Block::first ? lse_b1[i] : lse_b2[i]) - lse_full[i];
  }
};

inline ProbBatch prob_views_from_logits(const Matrix& logits, std::size_t K) {
  check_arg(logits.cols() == 2 * K, "prob_views: logit width is not 2K");
  ensure_finite(logits, "prob_views logits");
  const std::size_t n = logits.rows();
  ProbBatch pb;
  pb.K = K;
  pb.logits = logits;
  pb.logp = Matrix(n, 2 * K);
  pb.p = Matrix(n, 2 * K);
  pb.logps = Matrix(n, K);
  pb.ps = Matrix(n, K);
  pb.logpt = Matrix(n, K);
  pb.pt = Matrix(n, K);
  pb.lse_full.resize(n);
  pb.lse_b1.resize(n);
  pb.lse_b2.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = logits.row(i);
    const double lf = log_sum_exp(z, 0, 2 * K);
    const double l1 = log_sum_exp(z, 0, K);
    const double l2 = log_sum_exp(z, K, 2 * K);
    pb.lse_full[i] = lf;
    pb.lse_b1[i] = l1;
    pb.lse_b2[i] = l2;
    for (std::size_t j = 0; j < 2 * K; ++j) {
      pb.logp(i, j) = z[j] - lf;
      pb.p(i, j) = std::exp(pb.logp(i, j));
    }
    for (std::size_t k = 0; k < K; ++k) {
      pb.logps(i, k) = z[k] - l1;
      pb.ps(i, k) = std::exp(pb.logps(i, k));
      pb.logpt(i, k) = z[k + K] - l2;
      pb.pt(i, k) = std::exp(pb.logpt(i, k));
    }
  }
  return pb;
}

/// Worst deviation of the stored ps/pt views from block-renormalized p,
/// recomputed by direct summation (the linkage invariant).
inline double linkage_max_dev(const ProbBatch& pb) {
  double dev = 0.0;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t k = 0; k < pb.K; ++k) {
      m1 += pb.p(i, k);
      m2 += pb.p(i, k + pb.K);
    }
    for (std::size_t k = 0; k < pb.K; ++k) {
      if (m1 > 0.0) dev = std::max(dev, std::abs(pb.ps(i, k) - pb.p(i, k) / m1));
      if (m2 > 0.0) dev = std::max(dev, std::abs(pb.pt(i, k) - pb.p(i, k + pb.K) / m2));
    }
  }
  return dev;
}

namespace detail {
inline double row_scale_at(std::span<const double> s, std::size_t i) {
  return s.empty() ? 1.0 : s[i];
}
}  // namespace detail

// --- Gradient primitives -----------------------------------------------
//
// Each helper accumulates coef * row_scale[i] * d/dz of one per-instance
// term into dZ (n x 2K). Averaging factors (1/n) belong to coef; per-row
// weights such as the vicinal alpha go into row_scale.

/// term_i = -log p_{idx_i}  (full 2K softmax).  d/dz_j = p_j - [j == idx].
inline void add_grad_nll_full(const ProbBatch& pb, std::span<const int> idx, double coef,
                              std::span<const double> row_scale, Matrix& dZ) {
  for (std::size_t i = 0; i < pb.size(); ++i) {
    const double c = coef * detail::row_scale_at(row_scale, i);
    if (c == 0.0) continue;
    for (std::size_t j = 0; j < 2 * pb.K; ++j) dZ(i, j) += c * pb.p(i, j);
    dZ(i, static_cast<std::size_t>(idx[i])) -= c;
  }
}

/// term_i = -log view_{idx_i} for the block-renormalized view (ps or pt).
/// Nonzero only inside the block: d/dz_{off+k} = view_k - [k == idx].
inline void add_grad_nll_view(const ProbBatch& pb, Block b, std::span<const int> idx, double coef,
                              std::span<const double> row_scale, Matrix& dZ) {
  const std::size_t off = b == Block::first ? 0 : pb.K;
  const Matrix& v = pb.view(b);
  for (std::size_t i = 0; i < pb.size(); ++i) {
    const double c = coef * detail::row_scale_at(row_scale, i);
    if (c == 0.0) continue;
    for (std::size_t k = 0; k < pb.K; ++k) dZ(i, off + k) += c * v(i, k);
    dZ(i, off + static_cast<std::size_t>(idx[i])) -= c;
  }
}

/// term_i = -log sum_{k in B} p_k  (collective block mass).
/// d/dz_j = p_j - [j in B] * view_j.
inline void add_grad_nll_blockmass(const ProbBatch& pb, Block b, double coef,
                                   std::span<const double> row_scale, Matrix& dZ) {
  const std::size_t off = b == Block::first ? 0 : pb.K;
  const Matrix& v = pb.view(b);
  for (std::size_t i = 0; i < pb.size(); ++i) {
    const double c = coef * detail::row_scale_at(row_scale, i);
    if (c == 0.0) continue;
    for (std::size_t j = 0; j < 2 * pb.K; ++j) dZ(i, j) += c * pb.p(i, j);
    for (std::size_t k = 0; k < pb.K; ++k) dZ(i, off + k) -= c * v(i, k);
  }
}

/// term_i = -sum_k w_{ik} log p_{off+k}, weights treated as constants here.
/// d/dz_j = (sum_k w_{ik}) p_j - [j in B] w_{i,j-off}.
inline void add_grad_weighted_block_nll(const ProbBatch& pb, const Matrix& w, Block b, double coef,
                                        std::span<const double> row_scale, Matrix& dZ) {
  check_arg(w.rows() == pb.size() && w.cols() == pb.K, "weighted_block_nll: weight shape");
  const std::size_t off = b == Block::first ? 0 : pb.K;
  for (std::size_t i = 0; i < pb.size(); ++i) {
    const double c = coef * detail::row_scale_at(row_scale, i);
    if (c == 0.0) continue;
    double wsum = 0.0;
    for (std::size_t k = 0; k < pb.K; ++k) wsum += w(i, k);
    for (std::size_t j = 0; j < 2 * pb.K; ++j) dZ(i, j) += c * wsum * pb.p(i, j);
    for (std::size_t k = 0; k < pb.K; ++k) dZ(i, off + k) -= c * w(i, k);
  }
}

/// Gradient through live weights: term_i = -sum_k view_{ik} * coeffs_{ik}
/// where view is this batch's block softmax and coeffs are fixed numbers
/// (log-probabilities of some other instance). Softmax Jacobian on block B:
/// d/dz_{off+j} = -view_j (coeffs_j - sum_k view_k coeffs_k).
inline void add_grad_weight_branch(const ProbBatch& pb, Block b, const Matrix& coeffs, double coef,
                                   std::span<const double> row_scale, Matrix& dZ) {
  check_arg(coeffs.rows() == pb.size() && coeffs.cols() == pb.K, "weight_branch: coeff shape");
  const std::size_t off = b == Block::first ? 0 : pb.K;
  const Matrix& v = pb.view(b);
  for (std::size_t i = 0; i < pb.size(); ++i) {
    const double c = coef * detail::row_scale_at(row_scale, i);
    if (c == 0.0) continue;
    double mean = 0.0;
    for (std::size_t k = 0; k < pb.K; ++k) mean += v(i, k) * coeffs(i, k);
    for (std::size_t j = 0; j < pb.K; ++j)
      dZ(i, off + j) -= c * v(i, j) * (coeffs(i, j) - mean);
  }
}

/// Entropy of a view row, H = -sum_k view_k log view_k (zero terms skipped).
inline double view_entropy(const ProbBatch& pb, Block b, std::size_t i) {
  const Matrix& v = pb.view(b);
  const Matrix& lv = pb.logview(b);
  double h = 0.0;
  for (std::size_t k = 0; k < pb.K; ++k)
    if (v(i, k) > 0.0) h -= v(i, k) * lv(i, k);
  return h;
}

/// term_i = +H(view_i).  d/dz_{off+j} = -view_j (log view_j + H).
inline void add_grad_entropy(const ProbBatch& pb, Block b, double coef,
                             std::span<const double> row_scale, Matrix& dZ) {
  const std::size_t off = b == Block::first ? 0 : pb.K;
  const Matrix& v = pb.view(b);
  const Matrix& lv = pb.logview(b);
  for (std::size_t i = 0; i < pb.size(); ++i) {
    const double c = coef * detail::row_scale_at(row_scale, i);
    if (c == 0.0) continue;
    const double h = view_entropy(pb, b, i);
    for (std::size_t j = 0; j < pb.K; ++j)
      if (v(i, j) > 0.0) dZ(i, off + j) -= c * v(i, j) * (lv(i, j) + h);
  }
}

// --- Plain K-way softmax for auxiliary heads ----------------------------

struct KwayProb {
  Matrix logp;  // n x m
  Matrix p;     // n x m
};

inline KwayProb kway_softmax(const Matrix& logits) {
  ensure_finite(logits, "kway_softmax logits");
  KwayProb kp{Matrix(logits.rows(), logits.cols()), Matrix(logits.rows(), logits.cols())};
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const double lse = log_sum_exp(logits.row(i), 0, logits.cols());
    for (std::size_t j = 0; j < logits.cols(); ++j) {
      kp.logp(i, j) = logits(i, j) - lse;
      kp.p(i, j) = std::exp(kp.logp(i, j));
    }
  }
  return kp;
}

/// term_i = -log p_{idx_i} on a plain softmax; accumulates into dlogits.
inline void add_grad_kway_nll(const KwayProb& kp, std::span<const int> idx, double coef,
                              std::span<const double> row_scale, Matrix& dlogits) {
  for (std::size_t i = 0; i < kp.p.rows(); ++i) {
    const double c = coef * detail::row_scale_at(row_scale, i);
    if (c == 0.0) continue;
    for (std::size_t j = 0; j < kp.p.cols(); ++j) dlogits(i, j) += c * kp.p(i, j);
    dlogits(i, static_cast<std::size_t>(idx[i])) -= c;
  }
}

}  // namespace dalab
