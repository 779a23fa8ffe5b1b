#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "dalab/joint_model.hpp"
#include "dalab/optim.hpp"

namespace dalab {

/// Spherical k-means state over target features: one center per category,
/// hard assignments, per-cluster counts. A cluster that loses all members
/// keeps its previous center (still assignable, just not updated); `valid`
/// marks centers that have ever had members.
struct ClusterState {
  Matrix centers;  // K x feature_dim
  std::vector<char> valid;
  std::vector<int> assignments;
  std::vector<int> counts;
  int skipped_zero_norm = 0;

  std::size_t K() const { return centers.rows(); }
};

namespace detail {
inline double row_norm(const Matrix& m, std::size_t i) {
  double s = 0.0;
  for (std::size_t j = 0; j < m.cols(); ++j) s += m(i, j) * m(i, j);
  return std::sqrt(s);
}

/// cos(f_i, mu_k); zero-norm vectors get cosine 0 so their dissimilarity is
/// the neutral 1/2 and ties resolve to the lowest valid index.
inline double center_cosine(const Matrix& feats, std::size_t i, const Matrix& centers,
                            std::size_t k) {
  const double nf = row_norm(feats, i);
  const double nc = row_norm(centers, k);
  if (nf == 0.0 || nc == 0.0) return 0.0;
  double dot = 0.0;
  for (std::size_t j = 0; j < feats.cols(); ++j) dot += feats(i, j) * centers(k, j);
  return dot / (nf * nc);
}
}  // namespace detail

/// Semantically anchored center initialization: assignments come from the
/// target head's argmax and mu_k is the SUM of the l2-normalized features of
/// the instances predicted as k (a sum, not a mean — cosine assignment does
/// not distinguish the two). Zero-norm features are excluded from the sums.
inline ClusterState init_centers_from(const Matrix& features, const std::vector<int>& pred,
                                      std::size_t K) {
  check_arg(features.rows() >= 1, "init_centers: empty target set");
  check_arg(pred.size() == features.rows(), "init_centers: prediction count mismatch");
  ClusterState st;
  st.centers = Matrix(K, features.cols());
  st.valid.assign(K, 0);
  st.counts.assign(K, 0);
  st.assignments = pred;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto k = static_cast<std::size_t>(pred[i]);
    check_arg(k < K, "init_centers: prediction out of range");
    st.counts[k] += 1;
    st.valid[k] = 1;
    const double nf = detail::row_norm(features, i);
    if (nf == 0.0) {
      st.skipped_zero_norm += 1;
      continue;
    }
    for (std::size_t j = 0; j < features.cols(); ++j) st.centers(k, j) += features(i, j) / nf;
  }
  check_arg(std::any_of(st.valid.begin(), st.valid.end(), [](char v) { return v != 0; }),
            "init_centers: all centers empty");
  return st;
}

inline ClusterState init_centers(const JointModel& m, const Matrix& xt) {
  check_arg(xt.rows() >= 1, "init_centers: empty target set");
  const ProbBatch pb = m.prob_views(xt);
  const auto preds = predict(pb, Head::target_head);
  std::vector<int> labels(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) labels[i] = preds[i].label;
  MlpCache cache;
  return init_centers_from(m.extractor.forward(xt, &cache), labels, m.K);
}

/// One assignment pass under the minimum cosine dissimilarity principle,
/// ties toward the lowest index; returns the number of changed assignments.
inline int assign_pass(ClusterState& st, const Matrix& features) {
  check_arg(features.rows() == st.assignments.size(), "assign_pass: feature count mismatch");
  check_arg(std::any_of(st.valid.begin(), st.valid.end(), [](char v) { return v != 0; }),
            "assign_pass: all centers empty");
  int changes = 0;
  for (std::size_t i = 0; i < features.rows(); ++i) {
    int best = -1;
    double best_d = 0.0;
    for (std::size_t k = 0; k < st.K(); ++k) {
      if (!st.valid[k]) continue;
      const double d = 0.5 * (1.0 - detail::center_cosine(features, i, st.centers, k));
      if (best < 0 || d < best_d) {
        best = static_cast<int>(k);
        best_d = d;
      }
    }
    if (best != st.assignments[i]) {
      st.assignments[i] = best;
      ++changes;
    }
  }
  std::fill(st.counts.begin(), st.counts.end(), 0);
  for (int a : st.assignments) st.counts[static_cast<std::size_t>(a)] += 1;
  return changes;
}

/// Recomputes center sums from the current assignments; empty clusters keep
/// their previous center.
inline void recompute_centers(ClusterState& st, const Matrix& features) {
  st.skipped_zero_norm = 0;
  for (std::size_t k = 0; k < st.K(); ++k) {
    if (st.counts[k] == 0) continue;
    for (std::size_t j = 0; j < features.cols(); ++j) st.centers(k, j) = 0.0;
  }
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const auto k = static_cast<std::size_t>(st.assignments[i]);
    const double nf = detail::row_norm(features, i);
    if (nf == 0.0) {
      st.skipped_zero_norm += 1;
      continue;
    }
    for (std::size_t j = 0; j < features.cols(); ++j) st.centers(k, j) += features(i, j) / nf;
  }
}

struct RefineResult {
  int iterations = 0;
  bool converged = false;
};

/// Alternates assignment and center updates until assignments are fixed or
/// max_iters is hit (a safety bound; the alternation cannot oscillate on a
/// fixed feature set).
inline RefineResult refine(ClusterState& st, const Matrix& features, int max_iters = 100) {
  RefineResult r;
  for (int it = 0; it < max_iters; ++it) {
    r.iterations = it + 1;
    const int changes = assign_pass(st, features);
    if (changes == 0) {
      r.converged = true;
      return r;
    }
    recompute_centers(st, features);
  }
  return r;
}

struct TdsrOptions {
  int epochs = 10;
  int max_refine_iters = 100;
  std::size_t batch_size = 64;
  double eta_final = 0.0;  // classifier-slice rate, typically eta_at(schedule, 1)
  double lr_ratio_f_over_g = 10.0;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  std::uint64_t seed = 0;
  double collapse_fraction = 0.95;
};

struct TdsrEpochRow {
  int epoch = 0;
  double loss_begin = 0.0;  // L_tdsr on the full target set right after clustering
  double loss_end = 0.0;    // same labels, after the epoch's updates
  double target_acc = -1.0; // -1 when no evaluation labels were provided
  int refine_iters = 0;
  double max_cluster_share = 0.0;
  bool aborted = false;
};

struct TdsrResult {
  std::vector<TdsrEpochRow> trace;
  bool aborted = false;
  std::string note;
};

namespace detail {
inline double tdsr_loss_full(const JointModel& m, const Matrix& xt, const std::vector<int>& labels) {
  const ProbBatch pb = m.prob_views(xt);
  double v = 0.0;
  for (std::size_t i = 0; i < xt.rows(); ++i)
    v += -pb.logpt(i, static_cast<std::size_t>(labels[i]));
  return v / static_cast<double>(xt.rows());
}
}  // namespace detail

/// Fine-tunes G and the target-head slice on cluster labels. Each epoch
/// re-runs anchored init + refine, then takes minibatch SGD steps on
/// L_tdsr = -mean log pt_{yhat}. The source-head slice is never part of the
/// update set, so its entries stay bit-identical. A degenerate clustering
/// (one cluster holding more than collapse_fraction of the instances)
/// aborts before any update of that epoch and ends the fine-tuning.
inline TdsrResult tdsr_finetune(JointModel& m, const Matrix& xt, const std::vector<int>* eval_labels,
                                const TdsrOptions& opts) {
  check_arg(xt.rows() >= 1, "tdsr_finetune: empty target set");
  check_arg(opts.epochs >= 0 && opts.batch_size >= 1, "tdsr_finetune: bad options");
  if (eval_labels) check_arg(eval_labels->size() == xt.rows(), "tdsr_finetune: label count mismatch");

  ParamSet params;
  for (std::size_t li = 0; li < m.extractor.layers.size(); ++li) {
    params.add("G." + std::to_string(li) + ".W", Group::extractor, &m.extractor.layers[li].W);
    params.add("G." + std::to_string(li) + ".b", Group::extractor, &m.extractor.layers[li].b);
  }
  params.add("F.tgt.W", Group::classifier, &m.head_tgt.W);
  params.add("F.tgt.b", Group::classifier, &m.head_tgt.b);
  GradSet grads;
  grads.init_like(params);
  OptimizerState opt;
  opt.momentum = opts.momentum;
  opt.weight_decay = opts.weight_decay;
  opt.init_like(params);
  const GroupRates rates{opts.eta_final / opts.lr_ratio_f_over_g, opts.eta_final};

  Rng rng(derive_seed(opts.seed, "tdsr-batches"));
  const std::size_t n = xt.rows();
  TdsrResult result;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    TdsrEpochRow row;
    row.epoch = epoch;

    ClusterState st = init_centers(m, xt);
    const RefineResult rr = refine(st, export_features(m, xt), opts.max_refine_iters);
    row.refine_iters = rr.iterations;
    const int max_count = *std::max_element(st.counts.begin(), st.counts.end());
    row.max_cluster_share = static_cast<double>(max_count) / static_cast<double>(n);
    if (row.max_cluster_share > opts.collapse_fraction) {
      row.aborted = true;
      result.aborted = true;
      result.note = "epoch " + std::to_string(epoch) + ": degenerate clustering, " +
                    std::to_string(max_count) + "/" + std::to_string(n) +
                    " instances in one cluster; parameters kept from previous epoch";
      result.trace.push_back(row);
      break;
    }

    row.loss_begin = detail::tdsr_loss_full(m, xt, st.assignments);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    rng.shuffle(order);
    for (std::size_t start = 0; start < n; start += opts.batch_size) {
      const std::size_t bn = std::min(opts.batch_size, n - start);
      Matrix xb(bn, xt.cols());
      std::vector<int> yb(bn);
      for (std::size_t r = 0; r < bn; ++r) {
        const std::size_t idx = order[start + r];
        for (std::size_t j = 0; j < xt.cols(); ++j) xb(r, j) = xt(idx, j);
        yb[r] = st.assignments[idx];
      }
      auto f = m.forward(xb);
      ProbBatch pb = prob_views_from_logits(f.logits, m.K);
      Matrix dZ(bn, 2 * m.K);
      add_grad_nll_view(pb, Block::second, yb, 1.0 / static_cast<double>(bn), {}, dZ);
      grads.zero();
      // the loss touches only the target-head logits, so the source-head
      // columns of dZ are zero and the update set excludes them entirely
      const std::size_t ng = 2 * m.extractor.layers.size();
      Matrix dzt(bn, m.K);
      for (std::size_t i = 0; i < bn; ++i)
        for (std::size_t k = 0; k < m.K; ++k) dzt(i, k) = dZ(i, k + m.K);
      Matrix dfeat = affine_backward(m.head_tgt, f.features, dzt, &grads.g[ng], &grads.g[ng + 1]);
      std::vector<Matrix*> slots;
      for (std::size_t i = 0; i < ng; ++i) slots.push_back(&grads.g[i]);
      m.extractor.backward(dfeat, f.cache, slots);
      sgd_step(params, grads, opt, rates);
    }
    row.loss_end = detail::tdsr_loss_full(m, xt, st.assignments);
    if (eval_labels) {
      const auto preds = predict(m, xt, Head::target_head);
      int correct = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (preds[i].label == (*eval_labels)[i]) ++correct;
      row.target_acc = static_cast<double>(correct) / static_cast<double>(n);
    }
    result.trace.push_back(row);
  }
  return result;
}

}  // namespace dalab
