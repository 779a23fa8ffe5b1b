#pragma once

#include <span>
#include <vector>

#include "dalab/catda.hpp"

namespace dalab {

/// Mixed instances x^v = alpha x^s + (1-alpha) x^t with the constituents
/// retained: the source label supervises the alpha-weighted terms and the
/// original target instance provides the weighting distributions.
struct VicinalBatch {
  Matrix xv;
  std::vector<double> alpha;
  std::vector<int> ys;
  Matrix xt_origin;

  std::size_t size() const { return xv.rows(); }
  double mean_alpha() const {
    double s = 0.0;
    for (double a : alpha) s += a;
    return alpha.empty() ? 0.0 : s / static_cast<double>(alpha.size());
  }
};

inline VicinalBatch make_vicinal(const Matrix& xs, std::span<const int> ys, const Matrix& xt,
                                 std::span<const double> alphas) {
  check_arg(xs.rows() == xt.rows(), "make_vicinal: domain batch sizes differ");
  check_arg(xs.cols() == xt.cols(), "make_vicinal: feature dimensions differ");
  check_arg(xs.rows() >= 1, "make_vicinal: empty batch");
  check_arg(ys.size() == xs.rows() && alphas.size() == xs.rows(), "make_vicinal: size mismatch");
  VicinalBatch vb;
  vb.alpha.assign(alphas.begin(), alphas.end());
  vb.ys.assign(ys.begin(), ys.end());
  vb.xt_origin = xt;
  vb.xv = Matrix(xs.rows(), xs.cols());
  for (std::size_t i = 0; i < xs.rows(); ++i)
    for (std::size_t j = 0; j < xs.cols(); ++j)
      vb.xv(i, j) = alphas[i] * xs(i, j) + (1.0 - alphas[i]) * xt(i, j);
  return vb;
}

/// Per-instance alpha drawn independently from the sampler.
inline VicinalBatch make_vicinal(const Matrix& xs, std::span<const int> ys, const Matrix& xt,
                                 BetaSampler& sampler) {
  std::vector<double> alphas(xs.rows());
  for (double& a : alphas) a = sampler.sample();
  return make_vicinal(xs, ys, xt, alphas);
}

namespace detail {
inline std::vector<double> one_minus(std::span<const double> a) {
  std::vector<double> r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = 1.0 - a[i];
  return r;
}
}  // namespace detail

/// Vicinal domain-level loss, classifier side:
///   -mean_l [ alpha log m1(x^v) + (1-alpha) log m2(x^v) ]
/// where m1/m2 are the collective block masses. The source/target split of
/// TermValue carries the alpha-weighted and (1-alpha)-weighted sums.
inline TermValue loss_vic_domain_adv_F(const ProbBatch& vic, std::span<const double> alpha,
                                       double coef, Matrix* dZv) {
  detail::require_nonempty(vic, "loss_vic_domain_adv_F");
  check_arg(alpha.size() == vic.size(), "loss_vic_domain_adv_F: alpha count mismatch");
  TermValue tv;
  const double inv = 1.0 / static_cast<double>(vic.size());
  for (std::size_t i = 0; i < vic.size(); ++i) {
    tv.source_term += alpha[i] * -vic.log_block_mass(i, Block::first);
    tv.target_term += (1.0 - alpha[i]) * -vic.log_block_mass(i, Block::second);
  }
  tv.source_term *= inv;
  tv.target_term *= inv;
  tv.total = tv.source_term + tv.target_term;
  if (dZv) {
    const auto om = detail::one_minus(alpha);
    add_grad_nll_blockmass(vic, Block::first, coef * inv, alpha, *dZv);
    add_grad_nll_blockmass(vic, Block::second, coef * inv, om, *dZv);
  }
  return tv;
}

/// Extractor side: block masses swapped.
inline TermValue loss_vic_domain_adv_G(const ProbBatch& vic, std::span<const double> alpha,
                                       double coef, Matrix* dZv) {
  detail::require_nonempty(vic, "loss_vic_domain_adv_G");
  check_arg(alpha.size() == vic.size(), "loss_vic_domain_adv_G: alpha count mismatch");
  TermValue tv;
  const double inv = 1.0 / static_cast<double>(vic.size());
  for (std::size_t i = 0; i < vic.size(); ++i) {
    tv.source_term += alpha[i] * -vic.log_block_mass(i, Block::second);
    tv.target_term += (1.0 - alpha[i]) * -vic.log_block_mass(i, Block::first);
  }
  tv.source_term *= inv;
  tv.target_term *= inv;
  tv.total = tv.source_term + tv.target_term;
  if (dZv) {
    const auto om = detail::one_minus(alpha);
    add_grad_nll_blockmass(vic, Block::second, coef * inv, alpha, *dZv);
    add_grad_nll_blockmass(vic, Block::first, coef * inv, om, *dZv);
  }
  return tv;
}

/// Vicinal category-level loss, classifier side:
///   -mean_l [ alpha log p_{ys}(x^v)
///             + (1-alpha) sum_k ps_k(x^t_l) log p_{k+K}(x^v) ]
/// The weighting distribution is evaluated on the ORIGINAL target
/// constituent and stays live, so gradients flow into its forward pass too.
inline TermValue loss_vic_cat_adv_F(const ProbBatch& vic, std::span<const int> ys,
                                    std::span<const double> alpha, const ProbBatch& origin,
                                    double coef, Matrix* dZv, Matrix* dZt_origin,
                                    bool live_weights = true) {
  detail::require_nonempty(vic, "loss_vic_cat_adv_F");
  check_arg(origin.size() == vic.size(), "loss_vic_cat_adv_F: origin batch size mismatch");
  check_arg(ys.size() == vic.size() && alpha.size() == vic.size(),
            "loss_vic_cat_adv_F: size mismatch");
  TermValue tv;
  const double inv = 1.0 / static_cast<double>(vic.size());
  const Matrix& w = origin.ps;
  Matrix coeffs(vic.size(), vic.K);
  for (std::size_t i = 0; i < vic.size(); ++i) {
    tv.source_term += alpha[i] * -vic.logp(i, static_cast<std::size_t>(ys[i]));
    double acc = 0.0;
    for (std::size_t k = 0; k < vic.K; ++k) {
      coeffs(i, k) = vic.logp(i, k + vic.K);
      acc += w(i, k) * coeffs(i, k);
    }
    tv.target_term += (1.0 - alpha[i]) * -acc;
  }
  tv.source_term *= inv;
  tv.target_term *= inv;
  tv.total = tv.source_term + tv.target_term;
  if (dZv) {
    const auto om = detail::one_minus(alpha);
    add_grad_nll_full(vic, ys, coef * inv, alpha, *dZv);
    add_grad_weighted_block_nll(vic, w, Block::second, coef * inv, om, *dZv);
    if (live_weights && dZt_origin)
      add_grad_weight_branch(origin, Block::first, coeffs, coef * inv, om, *dZt_origin);
  }
  return tv;
}

/// Extractor side:
///   -mean_l [ alpha log p_{ys+K}(x^v)
///             + (1-alpha) sum_k pt_k(x^t_l) log p_k(x^v) ]
inline TermValue loss_vic_cat_adv_G(const ProbBatch& vic, std::span<const int> ys,
                                    std::span<const double> alpha, const ProbBatch& origin,
                                    double coef, Matrix* dZv, Matrix* dZt_origin,
                                    bool live_weights = true) {
  detail::require_nonempty(vic, "loss_vic_cat_adv_G");
  check_arg(origin.size() == vic.size(), "loss_vic_cat_adv_G: origin batch size mismatch");
  check_arg(ys.size() == vic.size() && alpha.size() == vic.size(),
            "loss_vic_cat_adv_G: size mismatch");
  TermValue tv;
  const double inv = 1.0 / static_cast<double>(vic.size());
  const Matrix& w = origin.pt;
  Matrix coeffs(vic.size(), vic.K);
  std::vector<int> ys_shift(vic.size());
  for (std::size_t i = 0; i < vic.size(); ++i) {
    ys_shift[i] = ys[i] + static_cast<int>(vic.K);
    tv.source_term += alpha[i] * -vic.logp(i, static_cast<std::size_t>(ys_shift[i]));
    double acc = 0.0;
    for (std::size_t k = 0; k < vic.K; ++k) {
      coeffs(i, k) = vic.logp(i, k);
      acc += w(i, k) * coeffs(i, k);
    }
    tv.target_term += (1.0 - alpha[i]) * -acc;
  }
  tv.source_term *= inv;
  tv.target_term *= inv;
  tv.total = tv.source_term + tv.target_term;
  if (dZv) {
    const auto om = detail::one_minus(alpha);
    add_grad_nll_full(vic, ys_shift, coef * inv, alpha, *dZv);
    add_grad_weighted_block_nll(vic, w, Block::first, coef * inv, om, *dZv);
    if (live_weights && dZt_origin)
      add_grad_weight_branch(origin, Block::second, coeffs, coef * inv, om, *dZt_origin);
  }
  return tv;
}

/// One ViCatDA iteration: identical structure to catda_objective_step with
/// the four adversarial components replaced by their vicinal versions;
/// L_cls stays on the raw source instances. One vicinal batch is drawn per
/// iteration and shared by both sub-steps.
inline LossReport vicatda_objective_step(JointModel& m, ParamSet& params, GradSet& grads,
                                         OptimizerState& opt, const LabeledBatch& batch,
                                         double lambda, const GroupRates& rates,
                                         const CatdaSwitches& sw, BetaSampler& sampler) {
  check_arg(batch.xs.rows() >= 1 && batch.xt.rows() >= 1,
            "vicatda_objective_step: both domains must be nonempty");
  check_arg(!sw.mixup, "vicatda_objective_step: mixup switch is a CatDA-only variant");
  LossReport rep;
  rep.lambda = lambda;
  const VicinalBatch vb = make_vicinal(batch.xs, batch.ys, batch.xt, sampler);
  rep.mean_alpha = vb.mean_alpha();

  auto run_substep = [&](bool classifier_step) {
    auto fs = m.forward(batch.xs);
    auto fv = m.forward(vb.xv);
    auto fo = m.forward(vb.xt_origin);
    ProbBatch pbs = prob_views_from_logits(fs.logits, m.K);
    ProbBatch pbv = prob_views_from_logits(fv.logits, m.K);
    ProbBatch pbo = prob_views_from_logits(fo.logits, m.K);
    Matrix dZs(pbs.size(), 2 * m.K), dZv(pbv.size(), 2 * m.K), dZo(pbo.size(), 2 * m.K);

    const double cls_coef = classifier_step ? 1.0 : 0.5;
    const double cls_val = loss_cls(pbs, batch.ys, cls_coef, &dZs);
    if (classifier_step) {
      rep.cls = cls_val;
      if (!sw.disable_domain_adv)
        rep.f_adv_d = loss_vic_domain_adv_F(pbv, vb.alpha, 1.0, &dZv).total;
      if (!sw.disable_category_adv)
        rep.f_adv_c = loss_vic_cat_adv_F(pbv, vb.ys, vb.alpha, pbo, lambda, &dZv, &dZo).total;
      if (sw.ent_enabled) rep.ent = loss_entropy_min(pbo, lambda, &dZo);
    } else {
      if (!sw.disable_domain_adv)
        rep.g_adv_d = loss_vic_domain_adv_G(pbv, vb.alpha, lambda, &dZv).total;
      if (!sw.disable_category_adv)
        rep.g_adv_c = loss_vic_cat_adv_G(pbv, vb.ys, vb.alpha, pbo, lambda, &dZv, &dZo).total;
      if (sw.ent_enabled) loss_entropy_min(pbo, lambda, &dZo);
    }

    grads.zero();
    const bool into_e = !classifier_step;
    const bool into_c = classifier_step;
    m.backward(fs, dZs, grads, into_e, into_c);
    m.backward(fv, dZv, grads, into_e, into_c);
    m.backward(fo, dZo, grads, into_e, into_c);
    sgd_step(params, grads, opt, rates, classifier_step ? Group::classifier : Group::extractor);
  };

  run_substep(true);
  run_substep(false);
  return rep;
}

}  // namespace dalab
