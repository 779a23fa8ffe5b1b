#pragma once

#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "dalab/baselines.hpp"
#include "dalab/grad_check.hpp"
#include "dalab/quadrature.hpp"
#include "dalab/tdsr.hpp"

namespace dalab {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct VerifyReport {
  std::vector<CheckResult> checks;
  bool all_pass = true;

  void add(const std::string& name, bool pass, const std::string& detail) {
    checks.push_back({name, pass, detail});
    all_pass = all_pass && pass;
  }
};

namespace verify_detail {

inline Matrix random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0,
                            double hi = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.uniform(lo, hi);
  return m;
}

inline LabeledBatch random_batch(std::size_t n, std::size_t d, std::size_t K, Rng& rng) {
  LabeledBatch b;
  b.xs = random_matrix(n, d, rng);
  b.xt = random_matrix(n, d, rng);
  b.ys.resize(n);
  for (auto& y : b.ys) y = rng.uniform_int(0, static_cast<int>(K) - 1);
  return b;
}

/// Small smooth (tanh) model for finite-difference work; central differences
/// across relu kinks would contaminate the error estimate.
inline JointModel fd_joint_model(Rng& rng, std::size_t d = 5, std::size_t h = 8,
                                 std::size_t K = 3) {
  return make_joint_model(d, {h}, K, Activation::tanh_act, rng);
}

/// loss_fn(model, grads_or_null) -> value; computes analytic grads once and
/// audits them entry by entry with central differences.
template <class Model, class LossFn>
GradCheckResult fd_audit(Model& m, LossFn&& loss_fn, double eps = 1e-5) {
  ParamSet params = m.params();
  GradSet grads;
  grads.init_like(params);
  grads.zero();
  loss_fn(&grads);
  return grad_check([&]() { return loss_fn(nullptr); }, params, grads, eps);
}

/// Uniform sample from the probability simplex via normalized exponentials.
inline std::vector<double> random_simplex(std::size_t n, Rng& rng) {
  std::vector<double> q(n);
  double s = 0.0;
  for (double& v : q) {
    v = -std::log(std::max(rng.uniform(0.0, 1.0), 1e-300));
    s += v;
  }
  for (double& v : q) v /= s;
  return q;
}

}  // namespace verify_detail

/// Gradient audits for every loss in the repository, on random small nets.
inline void verify_gradients(VerifyReport& rep, std::uint64_t seed, double tol = 1e-4) {
  using namespace verify_detail;
  Rng rng(seed);
  const std::size_t d = 5, h = 8, K = 3, n = 6;
  const double lambda = 0.7;

  auto add_joint_check = [&](const std::string& name, auto&& term_fn) {
    JointModel m = fd_joint_model(rng, d, h, K);
    LabeledBatch b = random_batch(n, d, K, rng);
    auto loss = [&](GradSet* g) { return term_fn(m, b, g); };
    const auto r = fd_audit(m, loss);
    rep.add("grad/" + name, r.max_rel_err <= tol,
            "max rel err " + fmt_double(r.max_rel_err) + " at " + r.worst_param);
  };

  auto joint_single = [&](auto&& inner) {
    return [inner](JointModel& m, const LabeledBatch& b, GradSet* g) {
      auto fs = m.forward(b.xs);
      auto ft = m.forward(b.xt);
      ProbBatch pbs = prob_views_from_logits(fs.logits, m.K);
      ProbBatch pbt = prob_views_from_logits(ft.logits, m.K);
      Matrix dZs(pbs.size(), 2 * m.K), dZt(pbt.size(), 2 * m.K);
      const double v = inner(m, b, pbs, pbt, g ? &dZs : nullptr, g ? &dZt : nullptr);
      if (g) {
        m.backward(fs, dZs, *g, true, true);
        m.backward(ft, dZt, *g, true, true);
      }
      return v;
    };
  };

  add_joint_check("cls", joint_single([](JointModel&, const LabeledBatch& b, ProbBatch& s,
                                         ProbBatch&, Matrix* dZs, Matrix*) {
                    return loss_cls(s, b.ys, 1.0, dZs);
                  }));
  add_joint_check("domain_adv_F", joint_single([](JointModel&, const LabeledBatch&, ProbBatch& s,
                                                  ProbBatch& t, Matrix* dZs, Matrix* dZt) {
                    return loss_domain_adv_F(s, t, 1.0, dZs, dZt).total;
                  }));
  add_joint_check("domain_adv_G", joint_single([](JointModel&, const LabeledBatch&, ProbBatch& s,
                                                  ProbBatch& t, Matrix* dZs, Matrix* dZt) {
                    return loss_domain_adv_G(s, t, 1.0, dZs, dZt).total;
                  }));
  add_joint_check("cat_adv_F", joint_single([](JointModel&, const LabeledBatch& b, ProbBatch& s,
                                               ProbBatch& t, Matrix* dZs, Matrix* dZt) {
                    return loss_cat_adv_F(s, b.ys, t, CatAdvOpts{}, 1.0, dZs, dZt).total;
                  }));
  add_joint_check("cat_adv_G", joint_single([](JointModel&, const LabeledBatch& b, ProbBatch& s,
                                               ProbBatch& t, Matrix* dZs, Matrix* dZt) {
                    return loss_cat_adv_G(s, b.ys, t, CatAdvOpts{}, 1.0, dZs, dZt).total;
                  }));
  add_joint_check("cat_adv_F_same_domain",
                  joint_single([](JointModel&, const LabeledBatch& b, ProbBatch& s, ProbBatch& t,
                                  Matrix* dZs, Matrix* dZt) {
                    return loss_cat_adv_F(s, b.ys, t,
                                          CatAdvOpts{CatWeighting::same_domain, true}, 1.0, dZs,
                                          dZt)
                        .total;
                  }));
  add_joint_check("entropy_min", joint_single([](JointModel&, const LabeledBatch&, ProbBatch&,
                                                 ProbBatch& t, Matrix*, Matrix* dZt) {
                    return loss_entropy_min(t, 1.0, dZt);
                  }));
  add_joint_check("catda_F_objective",
                  joint_single([lambda](JointModel&, const LabeledBatch& b, ProbBatch& s,
                                        ProbBatch& t, Matrix* dZs, Matrix* dZt) {
                    return loss_cls(s, b.ys, 1.0, dZs) +
                           loss_domain_adv_F(s, t, 1.0, dZs, dZt).total +
                           lambda * loss_cat_adv_F(s, b.ys, t, CatAdvOpts{}, lambda, dZs, dZt).total;
                  }));
  add_joint_check("catda_G_objective",
                  joint_single([lambda](JointModel&, const LabeledBatch& b, ProbBatch& s,
                                        ProbBatch& t, Matrix* dZs, Matrix* dZt) {
                    return 0.5 * loss_cls(s, b.ys, 0.5, dZs) +
                           lambda * loss_domain_adv_G(s, t, lambda, dZs, dZt).total +
                           lambda * loss_cat_adv_G(s, b.ys, t, CatAdvOpts{}, lambda, dZs, dZt).total;
                  }));

  // vicinal losses: fixed alphas, fixed constituents
  auto add_vic_check = [&](const std::string& name, auto&& term_fn) {
    JointModel m = fd_joint_model(rng, d, h, K);
    LabeledBatch b = random_batch(n, d, K, rng);
    std::vector<double> alphas(n);
    for (auto& a : alphas) a = rng.uniform(0.05, 0.95);
    const VicinalBatch vb = make_vicinal(b.xs, b.ys, b.xt, alphas);
    auto loss = [&](GradSet* g) {
      auto fv = m.forward(vb.xv);
      auto fo = m.forward(vb.xt_origin);
      ProbBatch pbv = prob_views_from_logits(fv.logits, m.K);
      ProbBatch pbo = prob_views_from_logits(fo.logits, m.K);
      Matrix dZv(pbv.size(), 2 * m.K), dZo(pbo.size(), 2 * m.K);
      const double v = term_fn(vb, pbv, pbo, g ? &dZv : nullptr, g ? &dZo : nullptr);
      if (g) {
        m.backward(fv, dZv, *g, true, true);
        m.backward(fo, dZo, *g, true, true);
      }
      return v;
    };
    const auto r = fd_audit(m, loss);
    rep.add("grad/" + name, r.max_rel_err <= tol,
            "max rel err " + fmt_double(r.max_rel_err) + " at " + r.worst_param);
  };

  add_vic_check("vic_domain_adv_F", [](const VicinalBatch& vb, ProbBatch& v, ProbBatch&,
                                       Matrix* dZv, Matrix*) {
    return loss_vic_domain_adv_F(v, vb.alpha, 1.0, dZv).total;
  });
  add_vic_check("vic_domain_adv_G", [](const VicinalBatch& vb, ProbBatch& v, ProbBatch&,
                                       Matrix* dZv, Matrix*) {
    return loss_vic_domain_adv_G(v, vb.alpha, 1.0, dZv).total;
  });
  add_vic_check("vic_cat_adv_F", [](const VicinalBatch& vb, ProbBatch& v, ProbBatch& o,
                                    Matrix* dZv, Matrix* dZo) {
    return loss_vic_cat_adv_F(v, vb.ys, vb.alpha, o, 1.0, dZv, dZo).total;
  });
  add_vic_check("vic_cat_adv_G", [](const VicinalBatch& vb, ProbBatch& v, ProbBatch& o,
                                    Matrix* dZv, Matrix* dZo) {
    return loss_vic_cat_adv_G(v, vb.ys, vb.alpha, o, 1.0, dZv, dZo).total;
  });
  {
    // full ViCatDA extractor-side objective
    JointModel m = fd_joint_model(rng, d, h, K);
    LabeledBatch b = random_batch(n, d, K, rng);
    std::vector<double> alphas(n);
    for (auto& a : alphas) a = rng.uniform(0.05, 0.95);
    const VicinalBatch vb = make_vicinal(b.xs, b.ys, b.xt, alphas);
    auto loss = [&](GradSet* g) {
      auto fs = m.forward(b.xs);
      auto fv = m.forward(vb.xv);
      auto fo = m.forward(vb.xt_origin);
      ProbBatch pbs = prob_views_from_logits(fs.logits, m.K);
      ProbBatch pbv = prob_views_from_logits(fv.logits, m.K);
      ProbBatch pbo = prob_views_from_logits(fo.logits, m.K);
      Matrix dZs(pbs.size(), 2 * m.K), dZv(pbv.size(), 2 * m.K), dZo(pbo.size(), 2 * m.K);
      double v = 0.5 * loss_cls(pbs, b.ys, 0.5, g ? &dZs : nullptr);
      v += lambda * loss_vic_domain_adv_G(pbv, vb.alpha, lambda, g ? &dZv : nullptr).total;
      v += lambda *
           loss_vic_cat_adv_G(pbv, vb.ys, vb.alpha, pbo, lambda, g ? &dZv : nullptr,
                              g ? &dZo : nullptr)
               .total;
      if (g) {
        m.backward(fs, dZs, *g, true, true);
        m.backward(fv, dZv, *g, true, true);
        m.backward(fo, dZo, *g, true, true);
      }
      return v;
    };
    const auto r = fd_audit(m, loss);
    rep.add("grad/vicatda_G_objective", r.max_rel_err <= tol,
            "max rel err " + fmt_double(r.max_rel_err) + " at " + r.worst_param);
  }

  // baselines
  {
    Rng mrng(derive_seed(seed, "dann"));
    DannModel m = make_dann_model(d, {h}, K, Activation::tanh_act, mrng);
    LabeledBatch b = random_batch(n, d, K, mrng);
    auto r1 = fd_audit(m, [&](GradSet* g) { return dann_domain_loss(m, b.xs, b.xt, false, 1.0, g); });
    rep.add("grad/dann_discriminator", r1.max_rel_err <= tol,
            "max rel err " + fmt_double(r1.max_rel_err));
    auto r2 = fd_audit(m, [&](GradSet* g) {
      return dann_task_loss(m, b.xs, b.ys, 1.0, g) +
             lambda * dann_domain_loss(m, b.xs, b.xt, true, lambda, g);
    });
    rep.add("grad/dann_extractor_objective", r2.max_rel_err <= tol,
            "max rel err " + fmt_double(r2.max_rel_err));
    const VicinalBatch vb = make_vicinal(b.xs, b.ys, b.xt, std::vector<double>(n, 0.37));
    auto r3 = fd_audit(m, [&](GradSet* g) { return dann_vic_domain_loss(m, vb, false, 1.0, g); });
    rep.add("grad/vidann_domain", r3.max_rel_err <= tol, "max rel err " + fmt_double(r3.max_rel_err));
  }
  {
    Rng mrng(derive_seed(seed, "mada"));
    MadaModel m = make_mada_model(d, {h}, K, Activation::tanh_act, mrng);
    LabeledBatch b = random_batch(n, d, K, mrng);
    auto r1 = fd_audit(m, [&](GradSet* g) { return mada_domain_loss(m, b.xs, b.xt, 1.0, g); });
    rep.add("grad/mada_heads_objective", r1.max_rel_err <= tol,
            "max rel err " + fmt_double(r1.max_rel_err));
    auto r2 = fd_audit(m, [&](GradSet* g) {
      return mada_task_loss(m, b.xs, b.ys, 1.0, g) - lambda * mada_domain_loss(m, b.xs, b.xt, -lambda, g);
    });
    rep.add("grad/mada_gc_objective", r2.max_rel_err <= tol,
            "max rel err " + fmt_double(r2.max_rel_err));
  }
  {
    Rng mrng(derive_seed(seed, "rca"));
    RcaModel m = make_rca_model(d, {h}, K, Activation::tanh_act, mrng);
    LabeledBatch b = random_batch(n, d, K, mrng);
    const std::vector<int> yhat = rca_pseudo_labels(m, b.xt);  // frozen for the audit
    auto r1 = fd_audit(m, [&](GradSet* g) { return rca_classifier_loss(m, b, yhat, 1.0, g); });
    rep.add("grad/rca_classifier_objective", r1.max_rel_err <= tol,
            "max rel err " + fmt_double(r1.max_rel_err));
    auto r2 = fd_audit(m, [&](GradSet* g) {
      return detail::rca_task_loss(m, b.xs, b.ys, 1.0, g) +
             lambda * rca_extractor_adv_loss(m, b, yhat, lambda, g);
    });
    rep.add("grad/rca_extractor_objective", r2.max_rel_err <= tol,
            "max rel err " + fmt_double(r2.max_rel_err));
  }
  {
    Rng mrng(derive_seed(seed, "symnet"));
    JointModel m = fd_joint_model(mrng, d, h, K);
    LabeledBatch b = random_batch(n, d, K, mrng);
    auto run = [&](bool classifier_side, GradSet* g) {
      auto fs = m.forward(b.xs);
      auto ft = m.forward(b.xt);
      ProbBatch pbs = prob_views_from_logits(fs.logits, m.K);
      ProbBatch pbt = prob_views_from_logits(ft.logits, m.K);
      Matrix dZs(pbs.size(), 2 * m.K), dZt(pbt.size(), 2 * m.K);
      double v;
      if (classifier_side) {
        v = loss_cls(pbs, b.ys, 1.0, g ? &dZs : nullptr) +
            symnet_domain_loss(pbs, pbt, 1.0, g ? &dZs : nullptr, g ? &dZt : nullptr);
      } else {
        const auto val = symnet_extractor_loss(pbs, b.ys, pbt, lambda, 1.0, g ? &dZs : nullptr,
                                               g ? &dZt : nullptr);
        v = val.source_task + lambda * val.confusion;
      }
      if (g) {
        m.backward(fs, dZs, *g, true, true);
        m.backward(ft, dZt, *g, true, true);
      }
      return v;
    };
    auto r1 = fd_audit(m, [&](GradSet* g) { return run(true, g); });
    rep.add("grad/symnet_classifier_objective", r1.max_rel_err <= tol,
            "max rel err " + fmt_double(r1.max_rel_err));
    auto r2 = fd_audit(m, [&](GradSet* g) { return run(false, g); });
    rep.add("grad/symnet_extractor_objective", r2.max_rel_err <= tol,
            "max rel err " + fmt_double(r2.max_rel_err));
  }
  {
    // TDSR loss at fixed cluster labels
    Rng mrng(derive_seed(seed, "tdsr"));
    JointModel m = fd_joint_model(mrng, d, h, K);
    Matrix xt = random_matrix(n, d, mrng);
    std::vector<int> labels(n);
    for (auto& y : labels) y = mrng.uniform_int(0, static_cast<int>(K) - 1);
    auto loss = [&](GradSet* g) {
      auto f = m.forward(xt);
      ProbBatch pb = prob_views_from_logits(f.logits, m.K);
      const double inv = 1.0 / static_cast<double>(n);
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) v += -pb.logpt(i, static_cast<std::size_t>(labels[i]));
      v *= inv;
      if (g) {
        Matrix dZ(n, 2 * m.K);
        add_grad_nll_view(pb, Block::second, labels, inv, {}, dZ);
        m.backward(f, dZ, *g, true, true);
      }
      return v;
    };
    const auto r = fd_audit(m, loss);
    rep.add("grad/tdsr", r.max_rel_err <= tol, "max rel err " + fmt_double(r.max_rel_err));
  }
}

/// The KL + entropy decomposition of the category-level target terms, the
/// entropy lower bound, and the exact-symmetry identity, all recomputed from
/// materialized probabilities (floored logs) independent of the loss path.
inline void verify_decomposition(VerifyReport& rep, std::uint64_t seed, int configs = 1000,
                                 double tol = 1e-10) {
  Rng rng(seed);
  const std::size_t K = 4;
  double worst_f = 0.0, worst_g = 0.0, worst_bound = 0.0;
  for (int c = 0; c < configs; ++c) {
    Matrix z = verify_detail::random_matrix(1, 2 * K, rng, -6.0, 6.0);
    const ProbBatch pb = prob_views_from_logits(z, K);
    // direct target terms
    double direct_f = 0.0, direct_g = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      direct_f += -pb.ps(0, k) * pb.logp(0, k + K);
      direct_g += -pb.pt(0, k) * pb.logp(0, k);
    }
    // independent KL + entropy route on materialized probabilities
    double kl_f = 0.0, h_f = 0.0, kl_g = 0.0, h_g = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      kl_f += pb.ps(0, k) * (floored_log(pb.ps(0, k)) - floored_log(pb.p(0, k + K)));
      h_f += -pb.ps(0, k) * floored_log(pb.ps(0, k));
      kl_g += pb.pt(0, k) * (floored_log(pb.pt(0, k)) - floored_log(pb.p(0, k)));
      h_g += -pb.pt(0, k) * floored_log(pb.pt(0, k));
    }
    worst_f = std::max(worst_f, std::abs(direct_f - (kl_f + h_f)));
    worst_g = std::max(worst_g, std::abs(direct_g - (kl_g + h_g)));
    worst_bound = std::max(worst_bound, h_f - direct_f);  // KL >= 0 means direct >= H
  }
  rep.add("identity/decomposition_F", worst_f <= tol, "max |direct - (KL+H)| = " + fmt_double(worst_f));
  rep.add("identity/decomposition_G", worst_g <= tol, "max |direct - (KL+H)| = " + fmt_double(worst_g));
  rep.add("identity/entropy_lower_bound", worst_bound <= tol,
          "max H - direct = " + fmt_double(worst_bound));

  // exact symmetry: duplicated blocks make ps == pt and the two target terms equal
  bool sym_ok = true;
  for (int c = 0; c < 100; ++c) {
    Matrix z(1, 2 * K);
    for (std::size_t k = 0; k < K; ++k) {
      z(0, k) = rng.uniform(-6.0, 6.0);
      z(0, k + K) = z(0, k);
    }
    const ProbBatch pb = prob_views_from_logits(z, K);
    double f = 0.0, g = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      f += -pb.ps(0, k) * pb.logp(0, k + K);
      g += -pb.pt(0, k) * pb.logp(0, k);
    }
    if (f != g) sym_ok = false;
  }
  rep.add("identity/block_symmetry", sym_ok, "mirrored logits give bitwise-equal target terms");
}

/// Negative control: with the weighting distributions detached the analytic
/// gradient loses the entropy branch and must disagree with finite
/// differences of the true loss value.
inline void verify_detached_negative_control(VerifyReport& rep, std::uint64_t seed) {
  using namespace verify_detail;
  Rng rng(seed);
  JointModel m = fd_joint_model(rng);
  LabeledBatch b = random_batch(6, 5, 3, rng);
  auto make_loss = [&](bool live) {
    return [&m, &b, live](GradSet* g) {
      auto fs = m.forward(b.xs);
      auto ft = m.forward(b.xt);
      ProbBatch pbs = prob_views_from_logits(fs.logits, m.K);
      ProbBatch pbt = prob_views_from_logits(ft.logits, m.K);
      Matrix dZs(pbs.size(), 2 * m.K), dZt(pbt.size(), 2 * m.K);
      const double v = loss_cat_adv_F(pbs, b.ys, pbt, CatAdvOpts{CatWeighting::cross_domain, live},
                                      1.0, g ? &dZs : nullptr, g ? &dZt : nullptr)
                           .total;
      if (g) {
        m.backward(fs, dZs, *g, true, true);
        m.backward(ft, dZt, *g, true, true);
      }
      return v;
    };
  };
  const auto live = fd_audit(m, make_loss(true));
  const auto detached = fd_audit(m, make_loss(false));
  rep.add("negative_control/live_weights_match_fd", live.max_rel_err <= 1e-4,
          "live max rel err " + fmt_double(live.max_rel_err));
  rep.add("negative_control/detached_weights_break_fd", detached.max_rel_err > 1e-3,
          "detached max rel err " + fmt_double(detached.max_rel_err) + " (must be large)");
}

/// Renormalization linkage on random batches through a random model.
inline void verify_linkage(VerifyReport& rep, std::uint64_t seed, double tol = 1e-12) {
  using namespace verify_detail;
  Rng rng(seed);
  double worst = 0.0;
  for (int c = 0; c < 50; ++c) {
    JointModel m = make_joint_model(4, {8, 8}, 3, Activation::relu, rng);
    const Matrix x = random_matrix(16, 4, rng, -2.0, 2.0);
    worst = std::max(worst, linkage_max_dev(m.prob_views(x)));
  }
  rep.add("linkage/block_renormalization", worst <= tol, "max deviation " + fmt_double(worst));
}

/// Per-instance optimum of the category-level F-side target term: no
/// sampled full distribution beats q* = [0, w] by more than 1e-9.
inline void verify_optimum_sampling(VerifyReport& rep, std::uint64_t seed, int q_samples = 1000) {
  using namespace verify_detail;
  Rng rng(seed);
  const std::size_t K = 4;
  bool ok = true;
  double worst_gap = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    Matrix z = random_matrix(1, 2 * K, rng, -4.0, 4.0);
    const ProbBatch pb = prob_views_from_logits(z, K);
    double h_w = 0.0;
    for (std::size_t k = 0; k < K; ++k) h_w += -pb.ps(0, k) * floored_log(pb.ps(0, k));
    for (int s = 0; s < q_samples; ++s) {
      const auto q = random_simplex(2 * K, rng);
      double f = 0.0;
      for (std::size_t k = 0; k < K; ++k) f += -pb.ps(0, k) * floored_log(q[k + K]);
      worst_gap = std::max(worst_gap, h_w - f);
      if (f < h_w - 1e-9) ok = false;
    }
  }
  rep.add("optimum/cross_entropy_minimizer", ok,
          "worst sampled improvement over stated optimum: " + fmt_double(worst_gap));
}

/// Vicinal collapse at the alpha endpoints, bitwise.
inline void verify_vicinal_collapse(VerifyReport& rep, std::uint64_t seed) {
  using namespace verify_detail;
  Rng rng(seed);
  JointModel m = make_joint_model(5, {8}, 3, Activation::relu, rng);
  LabeledBatch b = random_batch(7, 5, 3, rng);
  auto views = [&](const Matrix& x) { return m.prob_views(x); };
  const ProbBatch pbs = views(b.xs);
  const ProbBatch pbt = views(b.xt);
  bool ok = true;
  std::string detail = "all endpoint identities bitwise";

  for (double a : {1.0, 0.0}) {
    const VicinalBatch vb = make_vicinal(b.xs, b.ys, b.xt, std::vector<double>(b.xs.rows(), a));
    const ProbBatch pbv = views(vb.xv);
    const ProbBatch pbo = views(vb.xt_origin);
    const auto vd_f = loss_vic_domain_adv_F(pbv, vb.alpha, 0.0, nullptr);
    const auto vd_g = loss_vic_domain_adv_G(pbv, vb.alpha, 0.0, nullptr);
    const auto vc_f = loss_vic_cat_adv_F(pbv, vb.ys, vb.alpha, pbo, 0.0, nullptr, nullptr);
    const auto vc_g = loss_vic_cat_adv_G(pbv, vb.ys, vb.alpha, pbo, 0.0, nullptr, nullptr);
    const auto d_f = loss_domain_adv_F(pbs, pbt, 0.0, nullptr, nullptr);
    const auto d_g = loss_domain_adv_G(pbs, pbt, 0.0, nullptr, nullptr);
    const auto c_f = loss_cat_adv_F(pbs, b.ys, pbt, CatAdvOpts{}, 0.0, nullptr, nullptr);
    const auto c_g = loss_cat_adv_G(pbs, b.ys, pbt, CatAdvOpts{}, 0.0, nullptr, nullptr);
    if (a == 1.0) {
      ok = ok && vd_f.source_term == d_f.source_term && vd_f.target_term == 0.0;
      ok = ok && vd_g.source_term == d_g.source_term && vd_g.target_term == 0.0;
      ok = ok && vc_f.source_term == c_f.source_term && vc_f.target_term == 0.0;
      ok = ok && vc_g.source_term == c_g.source_term && vc_g.target_term == 0.0;
    } else {
      ok = ok && vd_f.target_term == d_f.target_term && vd_f.source_term == 0.0;
      ok = ok && vd_g.target_term == d_g.target_term && vd_g.source_term == 0.0;
      ok = ok && vc_f.target_term == c_f.target_term && vc_f.source_term == 0.0;
      ok = ok && vc_g.target_term == c_g.target_term && vc_g.source_term == 0.0;
    }
  }
  if (!ok) detail = "an endpoint identity failed";
  rep.add("vicinal/collapse_bitwise", ok, detail);
}

/// Sampler statistics against the quadrature oracle.
inline void verify_beta_sampler(VerifyReport& rep, std::uint64_t seed, int draws = 100000) {
  BetaSampler sampler(0.2, seed);
  std::vector<double> samples(draws);
  double mean = 0.0;
  for (auto& s : samples) {
    s = sampler.sample();
    mean += s;
  }
  mean /= draws;
  const bool mean_ok = std::abs(mean - 0.5) <= 0.01;
  rep.add("beta/mean", mean_ok, "sample mean " + fmt_double(mean));

  double worst = 0.0;
  for (int b = 0; b < 10; ++b) {
    const double lo = b / 10.0, hi = (b + 1) / 10.0;
    int count = 0;
    for (double s : samples)
      if (s >= lo && s < hi) ++count;
    const double empirical = static_cast<double>(count) / draws;
    const double reference = beta_interval_mass(0.2, lo, hi);
    worst = std::max(worst, std::abs(empirical - reference));
  }
  {
    int count = 0;
    for (double s : samples)
      if (s > 0.4 && s < 0.6) ++count;
    worst = std::max(worst, std::abs(static_cast<double>(count) / draws -
                                     beta_interval_mass(0.2, 0.4, 0.6)));
  }
  rep.add("beta/interval_masses", worst <= 0.01, "max |empirical - quadrature| " + fmt_double(worst));
}

/// Spherical k-means assignment vs an exhaustive distance-table oracle and
/// the no-improving-reassignment audit after convergence.
inline void verify_clustering(VerifyReport& rep, std::uint64_t seed) {
  using namespace verify_detail;
  Rng rng(seed);
  bool assign_ok = true, audit_ok = true;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform_int(0, 6));
    const std::size_t d = 2 + static_cast<std::size_t>(rng.uniform_int(0, 2));
    const Matrix feats = random_matrix(n, d, rng, -2.0, 2.0);
    ClusterState st;
    st.centers = random_matrix(2, d, rng, -2.0, 2.0);
    st.valid = {1, 1};
    st.assignments.assign(n, 0);
    st.counts = {static_cast<int>(n), 0};
    assign_pass(st, feats);
    // independent scalar recomputation of the full distance table
    for (std::size_t i = 0; i < n; ++i) {
      int best = -1;
      double best_d = 0.0;
      for (std::size_t k = 0; k < 2; ++k) {
        double dot = 0.0, nf = 0.0, nc = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          dot += feats(i, j) * st.centers(k, j);
          nf += feats(i, j) * feats(i, j);
          nc += st.centers(k, j) * st.centers(k, j);
        }
        const double cosv = (nf > 0.0 && nc > 0.0) ? dot / (std::sqrt(nf) * std::sqrt(nc)) : 0.0;
        const double dis = 0.5 * (1.0 - cosv);
        if (best < 0 || dis < best_d) {
          best = static_cast<int>(k);
          best_d = dis;
        }
      }
      if (st.assignments[i] != best) assign_ok = false;
    }
    // converge and audit
    const RefineResult rr = refine(st, feats, 100);
    if (!rr.converged) audit_ok = false;
    for (std::size_t i = 0; i < n; ++i) {
      const auto cur = static_cast<std::size_t>(st.assignments[i]);
      const double cur_d = 0.5 * (1.0 - detail::center_cosine(feats, i, st.centers, cur));
      for (std::size_t k = 0; k < 2; ++k) {
        const double dis = 0.5 * (1.0 - detail::center_cosine(feats, i, st.centers, k));
        if (dis < cur_d - 1e-12) audit_ok = false;
      }
    }
  }
  rep.add("tdsr/assignment_oracle", assign_ok, "assignments match exhaustive distance tables");
  rep.add("tdsr/no_improving_reassignment", audit_ok, "converged states admit no improving move");
}

/// MADA with K=1 degenerates to DANN: one head receiving weight-1 features.
/// The only difference left is the averaging constant (MADA's printed
/// combined 1/(n_s+n_t) mean vs DANN's per-domain means), so with equal
/// batch sizes DANN equals exactly 2x MADA in value and gradients.
inline void verify_mada_degenerates_to_dann(VerifyReport& rep, std::uint64_t seed) {
  using namespace verify_detail;
  Rng rng(seed);
  DannModel dm = make_dann_model(4, {6}, 1, Activation::tanh_act, rng);
  MadaModel mm;
  mm.extractor = dm.extractor;
  mm.task = dm.task;
  mm.domain_heads = {dm.domain};
  mm.K = 1;
  Rng brng(derive_seed(seed, "batch"));
  LabeledBatch b = random_batch(5, 4, 1, brng);

  ParamSet dparams = dm.params();
  GradSet dgrads;
  dgrads.init_like(dparams);
  dgrads.zero();
  const double vd = dann_domain_loss(dm, b.xs, b.xt, false, 1.0, &dgrads);
  ParamSet mparams = mm.params();
  GradSet mgrads;
  mgrads.init_like(mparams);
  mgrads.zero();
  const double vm = mada_domain_loss(mm, b.xs, b.xt, 1.0, &mgrads);

  double worst = std::abs(vd - 2.0 * vm);
  for (std::size_t i = 0; i < dgrads.g.size(); ++i) {
    Matrix scaled = mgrads.g[i];
    for (double& v : scaled.data()) v *= 2.0;
    worst = std::max(worst, max_abs_diff(dgrads.g[i], scaled));
  }
  rep.add("baselines/mada_k1_equals_dann", worst <= 1e-12,
          "max |DANN - 2 MADA(K=1)| over value+grads: " + fmt_double(worst));
}

/// Full verification suite (the `check` CLI subcommand).
inline VerifyReport verify(std::uint64_t seed = 20240817ull) {
  VerifyReport rep;
  verify_gradients(rep, derive_seed(seed, "grads"));
  verify_decomposition(rep, derive_seed(seed, "decomp"));
  verify_detached_negative_control(rep, derive_seed(seed, "detach"));
  verify_linkage(rep, derive_seed(seed, "linkage"));
  verify_optimum_sampling(rep, derive_seed(seed, "optimum"));
  verify_vicinal_collapse(rep, derive_seed(seed, "collapse"));
  verify_beta_sampler(rep, derive_seed(seed, "beta"));
  verify_clustering(rep, derive_seed(seed, "cluster"));
  verify_mada_degenerates_to_dann(rep, derive_seed(seed, "mada-dann"));
  return rep;
}

}  // namespace dalab
