#pragma once

#include <span>
#include <string>
#include <vector>

#include "dalab/vicda.hpp"

namespace dalab {

/// Component values of one baseline iteration, mapped into the shared
/// LossReport as cls / f_adv_d (classifier-side adversarial) / g_adv_d
/// (extractor-side adversarial).
struct BaselineReport {
  double task = 0.0;
  double adv_classifier = 0.0;
  double adv_extractor = 0.0;
};

// ---------------------------------------------------------------- DANN ---

/// Extractor G, task classifier C (K-way) and a single binary domain
/// classifier D. Domain labels: 0 source, 1 target.
struct DannModel {
  Mlp extractor;
  AffineLayer task;    // feature_dim -> K
  AffineLayer domain;  // feature_dim -> 2
  std::size_t K = 0;

  std::size_t input_dim() const { return extractor.input_dim(); }

  ParamSet params() {
    ParamSet ps;
    for (std::size_t li = 0; li < extractor.layers.size(); ++li) {
      ps.add("G." + std::to_string(li) + ".W", Group::extractor, &extractor.layers[li].W);
      ps.add("G." + std::to_string(li) + ".b", Group::extractor, &extractor.layers[li].b);
    }
    ps.add("C.W", Group::classifier, &task.W);
    ps.add("C.b", Group::classifier, &task.b);
    ps.add("D.W", Group::classifier, &domain.W);
    ps.add("D.b", Group::classifier, &domain.b);
    return ps;
  }
};

inline DannModel make_dann_model(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                 std::size_t K, Activation act, Rng& rng) {
  DannModel m;
  m.extractor = make_mlp(input_dim, hidden, act, rng);
  m.task = make_affine(m.extractor.output_dim(), K, rng);
  m.domain = make_affine(m.extractor.output_dim(), 2, rng);
  m.K = K;
  return m;
}

namespace detail {
// Backprops a head's dlogits through the head and the extractor,
// accumulating into the model-wide GradSet. head_slot is the index of the
// head's W entry in the params order; extractor slots are [0, 2L).
inline void head_backward(const Mlp& extractor, const MlpCache& cache, const Matrix& features,
                          const AffineLayer& head, const Matrix& dlogits, GradSet& grads,
                          std::size_t head_slot) {
  Matrix dfeat = affine_backward(head, features, dlogits, &grads.g[head_slot], &grads.g[head_slot + 1]);
  std::vector<Matrix*> slots;
  for (std::size_t i = 0; i < 2 * extractor.layers.size(); ++i) slots.push_back(&grads.g[i]);
  extractor.backward(dfeat, cache, slots);
}
}  // namespace detail

/// Source task cross-entropy via C. Gradients (when requested) are the full
/// gradient of the term; sub-steps restrict what gets updated.
inline double dann_task_loss(const DannModel& m, const Matrix& xs, std::span<const int> ys,
                             double coef, GradSet* grads) {
  check_arg(xs.rows() >= 1, "dann_task_loss: empty source batch");
  MlpCache cache;
  Matrix feats = m.extractor.forward(xs, &cache);
  KwayProb kp = kway_softmax(affine_forward(m.task, feats));
  const double inv = 1.0 / static_cast<double>(xs.rows());
  double v = 0.0;
  for (std::size_t i = 0; i < xs.rows(); ++i) v += -kp.logp(i, static_cast<std::size_t>(ys[i]));
  v *= inv;
  if (grads) {
    Matrix dz(xs.rows(), m.K);
    add_grad_kway_nll(kp, ys, coef * inv, {}, dz);
    detail::head_backward(m.extractor, cache, feats, m.task, dz, *grads,
                          2 * m.extractor.layers.size());
  }
  return v;
}

/// Binary domain cross-entropy via D; inverted=true swaps the domain labels
/// (the extractor-side variant of the minimax).
inline double dann_domain_loss(const DannModel& m, const Matrix& xs, const Matrix& xt,
                               bool inverted, double coef, GradSet* grads) {
  check_arg(xs.rows() >= 1 && xt.rows() >= 1, "dann_domain_loss: empty domain");
  const int label_s = inverted ? 1 : 0;
  const int label_t = inverted ? 0 : 1;
  const std::size_t dslot = 2 * m.extractor.layers.size() + 2;
  double v = 0.0;
  for (int side = 0; side < 2; ++side) {
    const Matrix& x = side == 0 ? xs : xt;
    const int label = side == 0 ? label_s : label_t;
    MlpCache cache;
    Matrix feats = m.extractor.forward(x, &cache);
    KwayProb kp = kway_softmax(affine_forward(m.domain, feats));
    const double inv = 1.0 / static_cast<double>(x.rows());
    std::vector<int> idx(x.rows(), label);
    for (std::size_t i = 0; i < x.rows(); ++i) v += -kp.logp(i, static_cast<std::size_t>(label)) * inv;
    if (grads) {
      Matrix dz(x.rows(), 2);
      add_grad_kway_nll(kp, idx, coef * inv, {}, dz);
      detail::head_backward(m.extractor, cache, feats, m.domain, dz, *grads, dslot);
    }
  }
  return v;
}

/// Vicinal domain supervision for D: -mean[ alpha log D_0(x^v) +
/// (1-alpha) log D_1(x^v) ], inverted swaps the two class positions.
inline double dann_vic_domain_loss(const DannModel& m, const VicinalBatch& vb, bool inverted,
                                   double coef, GradSet* grads) {
  check_arg(vb.size() >= 1, "dann_vic_domain_loss: empty vicinal batch");
  const std::size_t dslot = 2 * m.extractor.layers.size() + 2;
  MlpCache cache;
  Matrix feats = m.extractor.forward(vb.xv, &cache);
  KwayProb kp = kway_softmax(affine_forward(m.domain, feats));
  const double inv = 1.0 / static_cast<double>(vb.size());
  const int source_class = inverted ? 1 : 0;
  const int target_class = 1 - source_class;
  double v = 0.0;
  for (std::size_t i = 0; i < vb.size(); ++i)
    v += inv * (vb.alpha[i] * -kp.logp(i, source_class) + (1.0 - vb.alpha[i]) * -kp.logp(i, target_class));
  if (grads) {
    Matrix dz(vb.size(), 2);
    std::vector<int> idx_s(vb.size(), source_class), idx_t(vb.size(), target_class);
    const auto om = detail::one_minus(vb.alpha);
    add_grad_kway_nll(kp, idx_s, coef * inv, vb.alpha, dz);
    add_grad_kway_nll(kp, idx_t, coef * inv, om, dz);
    detail::head_backward(m.extractor, cache, feats, m.domain, dz, *grads, dslot);
  }
  return v;
}

inline BaselineReport dann_step(DannModel& m, ParamSet& params, GradSet& grads,
                                OptimizerState& opt, const LabeledBatch& b, double lambda,
                                const GroupRates& rates) {
  BaselineReport rep;
  const auto mask_d = mask_by_prefix(params, {"D."});
  const auto mask_gc = mask_by_prefix(params, {"G.", "C."});
  grads.zero();
  rep.adv_classifier = dann_domain_loss(m, b.xs, b.xt, false, 1.0, &grads);
  sgd_step_masked(params, grads, opt, rates, mask_d);
  grads.zero();
  rep.task = dann_task_loss(m, b.xs, b.ys, 1.0, &grads);
  rep.adv_extractor = dann_domain_loss(m, b.xs, b.xt, true, lambda, &grads);
  sgd_step_masked(params, grads, opt, rates, mask_gc);
  return rep;
}

inline BaselineReport vidann_step(DannModel& m, ParamSet& params, GradSet& grads,
                                  OptimizerState& opt, const LabeledBatch& b, double lambda,
                                  const GroupRates& rates, BetaSampler& sampler) {
  BaselineReport rep;
  const auto mask_d = mask_by_prefix(params, {"D."});
  const auto mask_gc = mask_by_prefix(params, {"G.", "C."});
  const VicinalBatch vb = make_vicinal(b.xs, b.ys, b.xt, sampler);
  grads.zero();
  rep.adv_classifier = dann_vic_domain_loss(m, vb, false, 1.0, &grads);
  sgd_step_masked(params, grads, opt, rates, mask_d);
  grads.zero();
  rep.task = dann_task_loss(m, b.xs, b.ys, 1.0, &grads);
  rep.adv_extractor = dann_vic_domain_loss(m, vb, true, lambda, &grads);
  sgd_step_masked(params, grads, opt, rates, mask_gc);
  return rep;
}

// ---------------------------------------------------------------- MADA ---

/// Task classifier C plus K per-category binary domain classifiers, each fed
/// the features scaled by the corresponding live category probability from C.
struct MadaModel {
  Mlp extractor;
  AffineLayer task;                       // feature_dim -> K
  std::vector<AffineLayer> domain_heads;  // K heads, feature_dim -> 2
  std::size_t K = 0;

  ParamSet params() {
    ParamSet ps;
    for (std::size_t li = 0; li < extractor.layers.size(); ++li) {
      ps.add("G." + std::to_string(li) + ".W", Group::extractor, &extractor.layers[li].W);
      ps.add("G." + std::to_string(li) + ".b", Group::extractor, &extractor.layers[li].b);
    }
    ps.add("C.W", Group::classifier, &task.W);
    ps.add("C.b", Group::classifier, &task.b);
    for (std::size_t k = 0; k < domain_heads.size(); ++k) {
      ps.add("D" + std::to_string(k) + ".W", Group::classifier, &domain_heads[k].W);
      ps.add("D" + std::to_string(k) + ".b", Group::classifier, &domain_heads[k].b);
    }
    return ps;
  }
};

inline MadaModel make_mada_model(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                 std::size_t K, Activation act, Rng& rng) {
  check_arg(K >= 1, "make_mada_model: K must be >= 1");
  MadaModel m;
  m.extractor = make_mlp(input_dim, hidden, act, rng);
  m.task = make_affine(m.extractor.output_dim(), K, rng);
  for (std::size_t k = 0; k < K; ++k)
    m.domain_heads.push_back(make_affine(m.extractor.output_dim(), 2, rng));
  m.K = K;
  return m;
}

inline double mada_task_loss(const MadaModel& m, const Matrix& xs, std::span<const int> ys,
                             double coef, GradSet* grads) {
  check_arg(xs.rows() >= 1, "mada_task_loss: empty source batch");
  MlpCache cache;
  Matrix feats = m.extractor.forward(xs, &cache);
  KwayProb kp = kway_softmax(affine_forward(m.task, feats));
  const double inv = 1.0 / static_cast<double>(xs.rows());
  double v = 0.0;
  for (std::size_t i = 0; i < xs.rows(); ++i) v += -kp.logp(i, static_cast<std::size_t>(ys[i]));
  v *= inv;
  if (grads) {
    Matrix dz(xs.rows(), m.K);
    add_grad_kway_nll(kp, ys, coef * inv, {}, dz);
    detail::head_backward(m.extractor, cache, feats, m.task, dz, *grads,
                          2 * m.extractor.layers.size());
  }
  return v;
}

/// The combined MADA domain term: mean over source+target instances of the
/// summed per-head cross-entropies on weighted features yhat_k * G(x).
/// yhat stays live, so gradients also flow into C through the weights.
inline double mada_domain_loss(const MadaModel& m, const Matrix& xs, const Matrix& xt, double coef,
                               GradSet* grads) {
  check_arg(xs.rows() >= 1 && xt.rows() >= 1, "mada_domain_loss: empty domain");
  const double inv = 1.0 / static_cast<double>(xs.rows() + xt.rows());
  const std::size_t cslot = 2 * m.extractor.layers.size();
  double v = 0.0;
  for (int side = 0; side < 2; ++side) {
    const Matrix& x = side == 0 ? xs : xt;
    const int d = side;  // 0 source, 1 target
    const std::size_t n = x.rows();
    MlpCache cache;
    Matrix feats = m.extractor.forward(x, &cache);
    Matrix zc = affine_forward(m.task, feats);
    KwayProb yhat = kway_softmax(zc);
    Matrix dfeat(n, feats.cols());
    Matrix dyhat(n, m.K);
    const std::vector<int> idx(n, d);
    for (std::size_t k = 0; k < m.K; ++k) {
      Matrix u(n, feats.cols());
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < feats.cols(); ++j) u(i, j) = yhat.p(i, k) * feats(i, j);
      const AffineLayer& head = m.domain_heads[k];
      KwayProb kp = kway_softmax(affine_forward(head, u));
      for (std::size_t i = 0; i < n; ++i) v += inv * -kp.logp(i, static_cast<std::size_t>(d));
      if (grads) {
        Matrix dz(n, 2);
        add_grad_kway_nll(kp, idx, coef * inv, {}, dz);
        const std::size_t hslot = cslot + 2 + 2 * k;
        Matrix du = affine_backward(head, u, dz, &grads->g[hslot], &grads->g[hslot + 1]);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < feats.cols(); ++j) {
            dfeat(i, j) += yhat.p(i, k) * du(i, j);
            dyhat(i, k) += du(i, j) * feats(i, j);
          }
      }
    }
    if (grads) {
      // softmax vjp through the live weights into C's logits
      Matrix dzc(n, m.K);
      for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t k = 0; k < m.K; ++k) dot += dyhat(i, k) * yhat.p(i, k);
        for (std::size_t j = 0; j < m.K; ++j) dzc(i, j) = yhat.p(i, j) * (dyhat(i, j) - dot);
      }
      add_scaled(grads->g[cslot], 1.0, matmul_at_b(feats, dzc));
      add_scaled(grads->g[cslot + 1], 1.0, col_sums(dzc));
      add_scaled(dfeat, 1.0, matmul_a_bt(dzc, m.task.W));
      std::vector<Matrix*> slots;
      for (std::size_t i = 0; i < 2 * m.extractor.layers.size(); ++i) slots.push_back(&grads->g[i]);
      m.extractor.backward(dfeat, cache, slots);
    }
  }
  return v;
}

inline BaselineReport mada_step(MadaModel& m, ParamSet& params, GradSet& grads,
                                OptimizerState& opt, const LabeledBatch& b, double lambda,
                                const GroupRates& rates) {
  BaselineReport rep;
  const auto mask_heads = mask_by_prefix(params, {"D"});
  const auto mask_gc = mask_by_prefix(params, {"G.", "C."});
  grads.zero();
  rep.adv_classifier = mada_domain_loss(m, b.xs, b.xt, 1.0, &grads);
  sgd_step_masked(params, grads, opt, rates, mask_heads);
  grads.zero();
  rep.task = mada_task_loss(m, b.xs, b.ys, 1.0, &grads);
  rep.adv_extractor = mada_domain_loss(m, b.xs, b.xt, -lambda, &grads);  // negated term, as printed
  sgd_step_masked(params, grads, opt, rates, mask_gc);
  return rep;
}

// ----------------------------------------------------------------- RCA ---

/// Joint 2K-way classifier plus the auxiliary task classifier C that
/// provides target pseudo labels.
struct RcaModel {
  JointModel joint;
  AffineLayer task;  // feature_dim -> K

  ParamSet params() {
    ParamSet ps = joint.params();
    ps.add("C.W", Group::classifier, &task.W);
    ps.add("C.b", Group::classifier, &task.b);
    return ps;
  }
};

inline RcaModel make_rca_model(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                               std::size_t K, Activation act, Rng& rng) {
  RcaModel m;
  m.joint = make_joint_model(input_dim, hidden, K, act, rng);
  m.task = make_affine(m.joint.feature_dim(), K, rng);
  return m;
}

/// argmax_k C(G(x)) with ties toward the lowest index; treated as constant
/// in all gradients and recomputed from the live C every iteration.
inline std::vector<int> rca_pseudo_labels(const RcaModel& m, const Matrix& xt) {
  MlpCache cache;
  Matrix feats = m.joint.extractor.forward(xt, &cache);
  KwayProb kp = kway_softmax(affine_forward(m.task, feats));
  std::vector<int> yhat(xt.rows());
  for (std::size_t i = 0; i < xt.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < kp.p.cols(); ++j)
      if (kp.p(i, j) > kp.p(i, best)) best = j;
    yhat[i] = static_cast<int>(best);
  }
  return yhat;
}

namespace detail {
// -mean log p_{idx} through the joint 2K head; full gradients.
inline double rca_joint_nll(const RcaModel& m, const Matrix& x, std::span<const int> idx,
                            double coef, GradSet* grads) {
  auto f = m.joint.forward(x);
  ProbBatch pb = prob_views_from_logits(f.logits, m.joint.K);
  const double inv = 1.0 / static_cast<double>(x.rows());
  double v = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) v += -pb.logp(i, static_cast<std::size_t>(idx[i]));
  v *= inv;
  if (grads) {
    Matrix dZ(x.rows(), 2 * m.joint.K);
    add_grad_nll_full(pb, idx, coef * inv, {}, dZ);
    m.joint.backward(f, dZ, *grads, true, true);
  }
  return v;
}

inline double rca_task_loss(const RcaModel& m, const Matrix& xs, std::span<const int> ys,
                            double coef, GradSet* grads) {
  MlpCache cache;
  Matrix feats = m.joint.extractor.forward(xs, &cache);
  KwayProb kp = kway_softmax(affine_forward(m.task, feats));
  const double inv = 1.0 / static_cast<double>(xs.rows());
  double v = 0.0;
  for (std::size_t i = 0; i < xs.rows(); ++i) v += -kp.logp(i, static_cast<std::size_t>(ys[i]));
  v *= inv;
  if (grads) {
    const std::size_t cslot = 2 * m.joint.extractor.layers.size() + 4;
    Matrix dz(xs.rows(), m.joint.K);
    add_grad_kway_nll(kp, ys, coef * inv, {}, dz);
    Matrix dfeat = affine_backward(m.task, feats, dz, &grads->g[cslot], &grads->g[cslot + 1]);
    std::vector<Matrix*> slots;
    for (std::size_t i = 0; i < 2 * m.joint.extractor.layers.size(); ++i)
      slots.push_back(&grads->g[i]);
    m.joint.extractor.backward(dfeat, cache, slots);
  }
  return v;
}
}  // namespace detail

/// Joint-classifier side: source at y^s, target at yhat^t + K.
inline double rca_classifier_loss(const RcaModel& m, const LabeledBatch& b,
                                  std::span<const int> yhat_t, double coef, GradSet* grads) {
  check_arg(b.xs.rows() >= 1 && b.xt.rows() >= 1, "rca_classifier_loss: empty domain");
  std::vector<int> shifted(yhat_t.size());
  for (std::size_t i = 0; i < yhat_t.size(); ++i) shifted[i] = yhat_t[i] + static_cast<int>(m.joint.K);
  return detail::rca_joint_nll(m, b.xs, b.ys, coef, grads) +
         detail::rca_joint_nll(m, b.xt, shifted, coef, grads);
}

/// Extractor/C side: task loss on source plus the lambda-weighted
/// domain-flipped joint terms (source at y^s + K, target at yhat^t).
inline double rca_extractor_adv_loss(const RcaModel& m, const LabeledBatch& b,
                                     std::span<const int> yhat_t, double coef, GradSet* grads) {
  check_arg(b.xs.rows() >= 1 && b.xt.rows() >= 1, "rca_extractor_adv_loss: empty domain");
  std::vector<int> ys_shift(b.ys.size());
  for (std::size_t i = 0; i < b.ys.size(); ++i) ys_shift[i] = b.ys[i] + static_cast<int>(m.joint.K);
  return detail::rca_joint_nll(m, b.xs, ys_shift, coef, grads) +
         detail::rca_joint_nll(m, b.xt, std::vector<int>(yhat_t.begin(), yhat_t.end()), coef, grads);
}

inline BaselineReport rca_step(RcaModel& m, ParamSet& params, GradSet& grads, OptimizerState& opt,
                               const LabeledBatch& b, double lambda, const GroupRates& rates,
                               BetaSampler* sampler = nullptr) {
  BaselineReport rep;
  const auto mask_f = mask_by_prefix(params, {"F."});
  const auto mask_gc = mask_by_prefix(params, {"G.", "C."});
  const std::vector<int> yhat = rca_pseudo_labels(m, b.xt);

  if (sampler == nullptr) {
    grads.zero();
    rep.adv_classifier = rca_classifier_loss(m, b, yhat, 1.0, &grads);
    sgd_step_masked(params, grads, opt, rates, mask_f);
    grads.zero();
    rep.task = detail::rca_task_loss(m, b.xs, b.ys, 1.0, &grads);
    rep.adv_extractor = rca_extractor_adv_loss(m, b, yhat, lambda, &grads);
    sgd_step_masked(params, grads, opt, rates, mask_gc);
    return rep;
  }

  // ViRCA: the alpha-weighted joint supervision is carried by the vicinal
  // instances; pseudo labels still come from C on the raw target batch.
  const VicinalBatch vb = make_vicinal(b.xs, b.ys, b.xt, *sampler);
  std::vector<int> ys_shift(vb.size()), yhat_shift(vb.size());
  for (std::size_t i = 0; i < vb.size(); ++i) {
    ys_shift[i] = vb.ys[i] + static_cast<int>(m.joint.K);
    yhat_shift[i] = yhat[i] + static_cast<int>(m.joint.K);
  }
  const auto om = detail::one_minus(vb.alpha);
  auto vic_joint_pair = [&](std::span<const int> idx_a, std::span<const int> idx_b, double coef,
                            GradSet* g) {
    auto f = m.joint.forward(vb.xv);
    ProbBatch pb = prob_views_from_logits(f.logits, m.joint.K);
    const double inv = 1.0 / static_cast<double>(vb.size());
    double v = 0.0;
    for (std::size_t i = 0; i < vb.size(); ++i)
      v += inv * (vb.alpha[i] * -pb.logp(i, static_cast<std::size_t>(idx_a[i])) +
                  (1.0 - vb.alpha[i]) * -pb.logp(i, static_cast<std::size_t>(idx_b[i])));
    if (g) {
      Matrix dZ(vb.size(), 2 * m.joint.K);
      add_grad_nll_full(pb, idx_a, coef * inv, vb.alpha, dZ);
      add_grad_nll_full(pb, idx_b, coef * inv, om, dZ);
      m.joint.backward(f, dZ, *g, true, true);
    }
    return v;
  };

  grads.zero();
  rep.adv_classifier = vic_joint_pair(vb.ys, yhat_shift, 1.0, &grads);
  sgd_step_masked(params, grads, opt, rates, mask_f);
  grads.zero();
  rep.task = detail::rca_task_loss(m, b.xs, b.ys, 1.0, &grads);
  rep.adv_extractor = vic_joint_pair(ys_shift, yhat, lambda, &grads);
  sgd_step_masked(params, grads, opt, rates, mask_gc);
  return rep;
}

// -------------------------------------------------------------- SymNet ---

/// Classifier-side SymNet domain term: binary cross-entropy on the block
/// masses, averaged over the combined source+target count.
inline double symnet_domain_loss(const ProbBatch& src, const ProbBatch& tgt, double coef,
                                 Matrix* dZs, Matrix* dZt) {
  check_arg(src.size() >= 1 && tgt.size() >= 1, "symnet_domain_loss: empty domain");
  const double inv = 1.0 / static_cast<double>(src.size() + tgt.size());
  double v = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) v += inv * -src.log_block_mass(i, Block::first);
  for (std::size_t i = 0; i < tgt.size(); ++i) v += inv * -tgt.log_block_mass(i, Block::second);
  if (dZs) add_grad_nll_blockmass(src, Block::first, coef * inv, {}, *dZs);
  if (dZt) add_grad_nll_blockmass(tgt, Block::second, coef * inv, {}, *dZt);
  return v;
}

/// Extractor-side SymNet: half-weighted source terms at y and y+K plus the
/// lambda-weighted target domain-confusion term
/// -(0.5 log m1 + 0.5 log m2).
struct SymnetExtractorValue {
  double source_task = 0.0;
  double confusion = 0.0;
};

inline SymnetExtractorValue symnet_extractor_loss(const ProbBatch& src, std::span<const int> ys,
                                                  const ProbBatch& tgt, double lambda, double coef,
                                                  Matrix* dZs, Matrix* dZt) {
  check_arg(src.size() >= 1 && tgt.size() >= 1, "symnet_extractor_loss: empty domain");
  SymnetExtractorValue val;
  const double inv_s = 0.5 / static_cast<double>(src.size());
  const double inv_t = 1.0 / static_cast<double>(tgt.size());
  std::vector<int> ys_shift(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    ys_shift[i] = ys[i] + static_cast<int>(src.K);
    val.source_task += inv_s * (-src.logp(i, static_cast<std::size_t>(ys[i])) -
                                src.logp(i, static_cast<std::size_t>(ys_shift[i])));
  }
  for (std::size_t i = 0; i < tgt.size(); ++i)
    val.confusion += inv_t * -(0.5 * tgt.log_block_mass(i, Block::first) +
                               0.5 * tgt.log_block_mass(i, Block::second));
  if (dZs) {
    add_grad_nll_full(src, ys, coef * inv_s, {}, *dZs);
    add_grad_nll_full(src, ys_shift, coef * inv_s, {}, *dZs);
  }
  if (dZt) {
    add_grad_nll_blockmass(tgt, Block::first, coef * lambda * 0.5 * inv_t, {}, *dZt);
    add_grad_nll_blockmass(tgt, Block::second, coef * lambda * 0.5 * inv_t, {}, *dZt);
  }
  return val;
}

inline BaselineReport symnet_step(JointModel& m, ParamSet& params, GradSet& grads,
                                  OptimizerState& opt, const LabeledBatch& b, double lambda,
                                  const GroupRates& rates) {
  BaselineReport rep;
  {
    auto fs = m.forward(b.xs);
    auto ft = m.forward(b.xt);
    ProbBatch pbs = prob_views_from_logits(fs.logits, m.K);
    ProbBatch pbt = prob_views_from_logits(ft.logits, m.K);
    Matrix dZs(pbs.size(), 2 * m.K), dZt(pbt.size(), 2 * m.K);
    rep.task = loss_cls(pbs, b.ys, 1.0, &dZs);
    rep.adv_classifier = symnet_domain_loss(pbs, pbt, 1.0, &dZs, &dZt);
    grads.zero();
    m.backward(fs, dZs, grads, false, true);
    m.backward(ft, dZt, grads, false, true);
    sgd_step(params, grads, opt, rates, Group::classifier);
  }
  {
    auto fs = m.forward(b.xs);
    auto ft = m.forward(b.xt);
    ProbBatch pbs = prob_views_from_logits(fs.logits, m.K);
    ProbBatch pbt = prob_views_from_logits(ft.logits, m.K);
    Matrix dZs(pbs.size(), 2 * m.K), dZt(pbt.size(), 2 * m.K);
    const auto val = symnet_extractor_loss(pbs, b.ys, pbt, lambda, 1.0, &dZs, &dZt);
    rep.adv_extractor = val.confusion;
    grads.zero();
    m.backward(fs, dZs, grads, true, false);
    m.backward(ft, dZt, grads, true, false);
    sgd_step(params, grads, opt, rates, Group::extractor);
  }
  return rep;
}

enum class VicinalBaseline { vidann, virca };

inline VicinalBaseline vicinal_baseline_from_string(const std::string& name) {
  if (name == "vidann" || name == "ViDANN") return VicinalBaseline::vidann;
  if (name == "virca" || name == "ViRCA") return VicinalBaseline::virca;
  throw std::invalid_argument("unknown vicinal baseline: " + name);
}

}  // namespace dalab
