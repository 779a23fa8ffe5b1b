#pragma once

#include <span>
#include <vector>

#include "dalab/beta_sampler.hpp"
#include "dalab/data.hpp"
#include "dalab/joint_model.hpp"
#include "dalab/optim.hpp"

namespace dalab {

/// Per-iteration component values (unscaled by lambda) plus the lambda used.
struct LossReport {
  double cls = 0.0;
  double f_adv_d = 0.0;
  double g_adv_d = 0.0;
  double f_adv_c = 0.0;
  double g_adv_c = 0.0;
  double ent = 0.0;
  double lambda = 0.0;
  double mean_alpha = 0.0;  // vicinal / mixup steps only
};

/// Source-term / target-term split; the adversarial losses are sums of one
/// mean over each domain and the vicinal collapse identities are stated per
/// term.
struct TermValue {
  double total = 0.0;
  double source_term = 0.0;
  double target_term = 0.0;
};

namespace detail {
inline void require_nonempty(const ProbBatch& pb, const char* who) {
  check_arg(pb.size() >= 1, std::string(who) + ": empty batch");
}
}  // namespace detail

/// Classification loss: both task heads supervised by source labels,
/// -mean log ps_y - mean log pt_y over source instances.
inline double loss_cls(const ProbBatch& src, std::span<const int> ys, double coef, Matrix* dZs) {
  detail::require_nonempty(src, "loss_cls");
  check_arg(ys.size() == src.size(), "loss_cls: label count mismatch");
  const double inv = 1.0 / static_cast<double>(src.size());
  double v = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) {
    const auto y = static_cast<std::size_t>(ys[i]);
    check_arg(y < src.K, "loss_cls: label out of range");
    v += -src.logps(i, y) - src.logpt(i, y);
  }
  v *= inv;
  if (dZs) {
    add_grad_nll_view(src, Block::first, ys, coef * inv, {}, *dZs);
    add_grad_nll_view(src, Block::second, ys, coef * inv, {}, *dZs);
  }
  return v;
}

/// Mixup-style classification: inputs are mixed instances, label terms carry
/// the source constituent's label weighted by alpha (label mixing; the
/// unlabeled target constituent contributes nothing).
inline double loss_cls_mixed(const ProbBatch& mixed, std::span<const int> ys,
                             std::span<const double> alpha, double coef, Matrix* dZv) {
  detail::require_nonempty(mixed, "loss_cls_mixed");
  const double inv = 1.0 / static_cast<double>(mixed.size());
  double v = 0.0;
  for (std::size_t i = 0; i < mixed.size(); ++i) {
    const auto y = static_cast<std::size_t>(ys[i]);
    v += alpha[i] * (-mixed.logps(i, y) - mixed.logpt(i, y));
  }
  v *= inv;
  if (dZv) {
    add_grad_nll_view(mixed, Block::first, ys, coef * inv, alpha, *dZv);
    add_grad_nll_view(mixed, Block::second, ys, coef * inv, alpha, *dZv);
  }
  return v;
}

/// Domain-level adversarial loss, classifier side: source scored by the
/// first-block collective mass, target by the second-block mass.
inline TermValue loss_domain_adv_F(const ProbBatch& src, const ProbBatch& tgt, double coef,
                                   Matrix* dZs, Matrix* dZt) {
  detail::require_nonempty(src, "loss_domain_adv_F(src)");
  detail::require_nonempty(tgt, "loss_domain_adv_F(tgt)");
  TermValue tv;
  const double inv_s = 1.0 / static_cast<double>(src.size());
  const double inv_t = 1.0 / static_cast<double>(tgt.size());
  for (std::size_t i = 0; i < src.size(); ++i) tv.source_term += -src.log_block_mass(i, Block::first);
  for (std::size_t i = 0; i < tgt.size(); ++i) tv.target_term += -tgt.log_block_mass(i, Block::second);
  tv.source_term *= inv_s;
  tv.target_term *= inv_t;
  tv.total = tv.source_term + tv.target_term;
  if (dZs) add_grad_nll_blockmass(src, Block::first, coef * inv_s, {}, *dZs);
  if (dZt) add_grad_nll_blockmass(tgt, Block::second, coef * inv_t, {}, *dZt);
  return tv;
}

/// Extractor side of the domain-level loss: inverted labels (blocks swapped).
inline TermValue loss_domain_adv_G(const ProbBatch& src, const ProbBatch& tgt, double coef,
                                   Matrix* dZs, Matrix* dZt) {
  detail::require_nonempty(src, "loss_domain_adv_G(src)");
  detail::require_nonempty(tgt, "loss_domain_adv_G(tgt)");
  TermValue tv;
  const double inv_s = 1.0 / static_cast<double>(src.size());
  const double inv_t = 1.0 / static_cast<double>(tgt.size());
  for (std::size_t i = 0; i < src.size(); ++i) tv.source_term += -src.log_block_mass(i, Block::second);
  for (std::size_t i = 0; i < tgt.size(); ++i) tv.target_term += -tgt.log_block_mass(i, Block::first);
  tv.source_term *= inv_s;
  tv.target_term *= inv_t;
  tv.total = tv.source_term + tv.target_term;
  if (dZs) add_grad_nll_blockmass(src, Block::second, coef * inv_s, {}, *dZs);
  if (dZt) add_grad_nll_blockmass(tgt, Block::first, coef * inv_t, {}, *dZt);
  return tv;
}

enum class CatWeighting { cross_domain, same_domain };

struct CatAdvOpts {
  CatWeighting weighting = CatWeighting::cross_domain;
  /// The weighting distributions carry gradients by default; detaching them
  /// is a verification hook (it breaks the KL + entropy decomposition).
  bool live_weights = true;
};

/// Category-level adversarial loss, classifier side:
///   -mean_s log p_{y}  -  mean_t sum_k w_k(x^t) log p_{k+K}(x^t)
/// with w = ps (cross-domain weighting) or pt (degenerate same-domain
/// variant).
inline TermValue loss_cat_adv_F(const ProbBatch& src, std::span<const int> ys,
                                const ProbBatch& tgt, const CatAdvOpts& opts, double coef,
                                Matrix* dZs, Matrix* dZt) {
  detail::require_nonempty(src, "loss_cat_adv_F(src)");
  detail::require_nonempty(tgt, "loss_cat_adv_F(tgt)");
  check_arg(ys.size() == src.size(), "loss_cat_adv_F: label count mismatch");
  TermValue tv;
  const double inv_s = 1.0 / static_cast<double>(src.size());
  const double inv_t = 1.0 / static_cast<double>(tgt.size());
  for (std::size_t i = 0; i < src.size(); ++i)
    tv.source_term += -src.logp(i, static_cast<std::size_t>(ys[i]));
  tv.source_term *= inv_s;

  const Block wblock = opts.weighting == CatWeighting::cross_domain ? Block::first : Block::second;
  const Matrix& w = tgt.view(wblock);
  Matrix coeffs(tgt.size(), tgt.K);  // log p_{k+K}(x^t), the logs the weights multiply
  for (std::size_t i = 0; i < tgt.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < tgt.K; ++k) {
      coeffs(i, k) = tgt.logp(i, k + tgt.K);
      acc += w(i, k) * coeffs(i, k);
    }
    tv.target_term += -acc;
  }
  tv.target_term *= inv_t;
  tv.total = tv.source_term + tv.target_term;

  if (dZs) add_grad_nll_full(src, ys, coef * inv_s, {}, *dZs);
  if (dZt) {
    add_grad_weighted_block_nll(tgt, w, Block::second, coef * inv_t, {}, *dZt);
    if (opts.live_weights) add_grad_weight_branch(tgt, wblock, coeffs, coef * inv_t, {}, *dZt);
  }
  return tv;
}

/// Category-level adversarial loss, extractor side (mirror of the above):
///   -mean_s log p_{y+K}  -  mean_t sum_k w_k(x^t) log p_k(x^t)
/// with w = pt (cross-domain) or ps (same-domain variant).
inline TermValue loss_cat_adv_G(const ProbBatch& src, std::span<const int> ys,
                                const ProbBatch& tgt, const CatAdvOpts& opts, double coef,
                                Matrix* dZs, Matrix* dZt) {
  detail::require_nonempty(src, "loss_cat_adv_G(src)");
  detail::require_nonempty(tgt, "loss_cat_adv_G(tgt)");
  check_arg(ys.size() == src.size(), "loss_cat_adv_G: label count mismatch");
  TermValue tv;
  const double inv_s = 1.0 / static_cast<double>(src.size());
  const double inv_t = 1.0 / static_cast<double>(tgt.size());
  std::vector<int> ys_shift(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    ys_shift[i] = ys[i] + static_cast<int>(src.K);
    tv.source_term += -src.logp(i, static_cast<std::size_t>(ys_shift[i]));
  }
  tv.source_term *= inv_s;

  const Block wblock = opts.weighting == CatWeighting::cross_domain ? Block::second : Block::first;
  const Matrix& w = tgt.view(wblock);
  Matrix coeffs(tgt.size(), tgt.K);  // log p_k(x^t)
  for (std::size_t i = 0; i < tgt.size(); ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < tgt.K; ++k) {
      coeffs(i, k) = tgt.logp(i, k);
      acc += w(i, k) * coeffs(i, k);
    }
    tv.target_term += -acc;
  }
  tv.target_term *= inv_t;
  tv.total = tv.source_term + tv.target_term;

  if (dZs) add_grad_nll_full(src, ys_shift, coef * inv_s, {}, *dZs);
  if (dZt) {
    add_grad_weighted_block_nll(tgt, w, Block::first, coef * inv_t, {}, *dZt);
    if (opts.live_weights) add_grad_weight_branch(tgt, wblock, coeffs, coef * inv_t, {}, *dZt);
  }
  return tv;
}

/// Entropy minimization on the target head: mean_t H(pt(x^t)).
inline double loss_entropy_min(const ProbBatch& tgt, double coef, Matrix* dZt) {
  detail::require_nonempty(tgt, "loss_entropy_min");
  const double inv = 1.0 / static_cast<double>(tgt.size());
  double v = 0.0;
  for (std::size_t i = 0; i < tgt.size(); ++i) v += view_entropy(tgt, Block::second, i);
  v *= inv;
  if (dZt) add_grad_entropy(tgt, Block::second, coef * inv, {}, *dZt);
  return v;
}

/// Ablation switches realizing the w/o D-adv, w/o C-adv, same-domain
/// weighting, mixup, and ENT variants.
struct CatdaSwitches {
  bool disable_domain_adv = false;
  bool disable_category_adv = false;
  bool same_domain_weighting = false;
  bool mixup = false;
  bool ent_enabled = false;
};

/// One CatDA training iteration on a batch: the classifier sub-step
/// (L_cls + F_adv_D + lambda F_adv_C, extractor frozen) runs first, then the
/// extractor sub-step (1/2 L_cls + lambda G_adv_D + lambda G_adv_C,
/// classifier frozen) on fresh forward passes. Component values are reported
/// unscaled as seen by their sub-step.
inline LossReport catda_objective_step(JointModel& m, ParamSet& params, GradSet& grads,
                                       OptimizerState& opt, const LabeledBatch& batch,
                                       double lambda, const GroupRates& rates,
                                       const CatdaSwitches& sw, BetaSampler* mix_sampler = nullptr) {
  check_arg(batch.xs.rows() >= 1 && batch.xt.rows() >= 1,
            "catda_objective_step: both domains must be nonempty");
  if (sw.mixup) check_arg(mix_sampler != nullptr, "catda_objective_step: mixup needs a sampler");
  LossReport rep;
  rep.lambda = lambda;
  const CatAdvOpts cat_opts{
      sw.same_domain_weighting ? CatWeighting::same_domain : CatWeighting::cross_domain, true};

  Matrix xv;
  std::vector<double> alphas;
  if (sw.mixup) {
    alphas.resize(batch.xs.rows());
    xv = Matrix(batch.xs.rows(), batch.xs.cols());
    double asum = 0.0;
    for (std::size_t i = 0; i < batch.xs.rows(); ++i) {
      alphas[i] = mix_sampler->sample();
      asum += alphas[i];
      for (std::size_t j = 0; j < batch.xs.cols(); ++j)
        xv(i, j) = alphas[i] * batch.xs(i, j) + (1.0 - alphas[i]) * batch.xt(i, j);
    }
    rep.mean_alpha = asum / static_cast<double>(alphas.size());
  }

  auto run_substep = [&](bool classifier_step) {
    auto fs = m.forward(batch.xs);
    auto ft = m.forward(batch.xt);
    ProbBatch pbs = prob_views_from_logits(fs.logits, m.K);
    ProbBatch pbt = prob_views_from_logits(ft.logits, m.K);
    Matrix dZs(pbs.size(), 2 * m.K), dZt(pbt.size(), 2 * m.K);

    JointModel::Fwd fv;
    ProbBatch pbv;
    Matrix dZv;
    const double cls_coef = classifier_step ? 1.0 : 0.5;
    double cls_val;
    if (sw.mixup) {
      fv = m.forward(xv);
      pbv = prob_views_from_logits(fv.logits, m.K);
      dZv = Matrix(pbv.size(), 2 * m.K);
      cls_val = loss_cls_mixed(pbv, batch.ys, alphas, cls_coef, &dZv);
    } else {
      cls_val = loss_cls(pbs, batch.ys, cls_coef, &dZs);
    }

    if (classifier_step) {
      rep.cls = cls_val;
      if (!sw.disable_domain_adv)
        rep.f_adv_d = loss_domain_adv_F(pbs, pbt, 1.0, &dZs, &dZt).total;
      if (!sw.disable_category_adv)
        rep.f_adv_c = loss_cat_adv_F(pbs, batch.ys, pbt, cat_opts, lambda, &dZs, &dZt).total;
      if (sw.ent_enabled) rep.ent = loss_entropy_min(pbt, lambda, &dZt);
    } else {
      if (!sw.disable_domain_adv)
        rep.g_adv_d = loss_domain_adv_G(pbs, pbt, lambda, &dZs, &dZt).total;
      if (!sw.disable_category_adv)
        rep.g_adv_c = loss_cat_adv_G(pbs, batch.ys, pbt, cat_opts, lambda, &dZs, &dZt).total;
      if (sw.ent_enabled) loss_entropy_min(pbt, lambda, &dZt);
    }

    grads.zero();
    const bool into_e = !classifier_step;
    const bool into_c = classifier_step;
    m.backward(fs, dZs, grads, into_e, into_c);
    m.backward(ft, dZt, grads, into_e, into_c);
    if (sw.mixup) m.backward(fv, dZv, grads, into_e, into_c);
    sgd_step(params, grads, opt, rates, classifier_step ? Group::classifier : Group::extractor);
  };

  run_substep(true);
  run_substep(false);
  return rep;
}

}  // namespace dalab
