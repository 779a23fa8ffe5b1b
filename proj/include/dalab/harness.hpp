#pragma once

#include <array>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <string>
#include <thread>
#include <vector>

#include "dalab/checkpoint.hpp"
#include "dalab/tdsr.hpp"

namespace dalab {

struct MetricsRow {
  int epoch = 0;
  double lambda = 0, eta = 0;
  double cls = 0, f_adv_d = 0, g_adv_d = 0, f_adv_c = 0, g_adv_c = 0, ent = 0;
  double source_acc = 0;
  double target_acc_fs = 0, target_acc_ft = 0, target_acc_eval = 0;
  double head_agreement = 0;
  double mean_conf_gap = 0;  // mean |max ps - max pt| on target
  double mean_alpha = 0;
};

struct EvalOutcome {
  double source_acc = 0;
  double target_acc_fs = 0, target_acc_ft = 0, target_acc_eval = 0;
  double head_agreement = 0;
  double mean_conf_gap = 0;
  double linkage_dev = 0;
};

namespace detail {
inline double accuracy(const std::vector<Prediction>& preds, const std::vector<int>& labels) {
  int correct = 0;
  for (std::size_t i = 0; i < preds.size(); ++i)
    if (preds[i].label == labels[i]) ++correct;
  return preds.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(preds.size());
}

inline std::vector<int> kway_argmax(const KwayProb& kp) {
  std::vector<int> out(kp.p.rows());
  for (std::size_t i = 0; i < kp.p.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < kp.p.cols(); ++j)
      if (kp.p(i, j) > kp.p(i, best)) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

inline double plain_accuracy(const std::vector<int>& pred, const std::vector<int>& labels) {
  int correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == labels[i]) ++correct;
  return pred.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pred.size());
}
}  // namespace detail

/// Per-epoch evaluation on standardized data. Joint-head methods report both
/// task-classifier views; C-head methods (dann/mada/vidann) carry the task
/// classifier's accuracy in every per-head column with agreement 1. The
/// evaluation column follows the method's prediction head: F^t for the
/// joint-model family, C for rca/virca and the C-head family.
inline EvalOutcome evaluate_model(const TrainedModel& tm, const DomainPair& spair) {
  EvalOutcome ev;
  const JointModel* jm = nullptr;
  if (tm.joint) jm = &*tm.joint;
  if (tm.rca) jm = &tm.rca->joint;

  if (jm) {
    const ProbBatch pbs = jm->prob_views(spair.source_x);
    const ProbBatch pbt = jm->prob_views(spair.target_x);
    ev.linkage_dev = std::max(linkage_max_dev(pbs), linkage_max_dev(pbt));
    ev.source_acc = detail::accuracy(predict(pbs, Head::source_head), spair.source_y);
    const auto preds_fs = predict(pbt, Head::source_head);
    const auto preds_ft = predict(pbt, Head::target_head);
    ev.target_acc_fs = detail::accuracy(preds_fs, spair.target_eval_labels);
    ev.target_acc_ft = detail::accuracy(preds_ft, spair.target_eval_labels);
    int agree = 0;
    double gap = 0.0;
    for (std::size_t i = 0; i < preds_fs.size(); ++i) {
      if (preds_fs[i].label == preds_ft[i].label) ++agree;
      gap += std::abs(preds_fs[i].confidence - preds_ft[i].confidence);
    }
    const double nt = static_cast<double>(preds_fs.size());
    ev.head_agreement = agree / nt;
    ev.mean_conf_gap = gap / nt;
    ev.target_acc_eval = ev.target_acc_ft;
  }
  if (tm.rca) {
    // rca/virca predict through the auxiliary task classifier
    MlpCache cache;
    const Matrix fs = tm.rca->joint.extractor.forward(spair.source_x, &cache);
    const Matrix ft = tm.rca->joint.extractor.forward(spair.target_x, &cache);
    const auto pred_s = detail::kway_argmax(kway_softmax(affine_forward(tm.rca->task, fs)));
    const auto pred_t = detail::kway_argmax(kway_softmax(affine_forward(tm.rca->task, ft)));
    ev.source_acc = detail::plain_accuracy(pred_s, spair.source_y);
    ev.target_acc_eval = detail::plain_accuracy(pred_t, spair.target_eval_labels);
  }
  if (tm.dann || tm.mada) {
    const Mlp& g = tm.extractor();
    const AffineLayer& task = tm.dann ? tm.dann->task : tm.mada->task;
    MlpCache cache;
    const auto pred_s = detail::kway_argmax(kway_softmax(affine_forward(task, g.forward(spair.source_x, &cache))));
    const auto pred_t = detail::kway_argmax(kway_softmax(affine_forward(task, g.forward(spair.target_x, &cache))));
    ev.source_acc = detail::plain_accuracy(pred_s, spair.source_y);
    const double acc = detail::plain_accuracy(pred_t, spair.target_eval_labels);
    ev.target_acc_fs = ev.target_acc_ft = ev.target_acc_eval = acc;
    ev.head_agreement = 1.0;
  }
  return ev;
}

struct TrainResult {
  TrainedModel model;
  std::vector<MetricsRow> metrics;
  TdsrResult tdsr;
  DomainPair std_pair;  // standardized copy used for training/evaluation
  bool aborted = false;
  std::string abort_reason;
  double linkage_max_dev = 0;
  double final_target_acc = 0;  // after all stages, evaluation head
};

/// Runs the configured method end to end: per-epoch lambda/eta refresh,
/// per-batch alternating updates, per-epoch evaluation rows, optional TDSR
/// fine-tuning afterwards. A non-finite loss aborts with the last
/// epoch-end parameters restored.
inline TrainResult train(const ExperimentConfig& cfg, const DomainPair& pair) {
  cfg.validate();
  TrainResult result;
  result.std_pair = pair;
  const Standardizer stdz = fit_source_standardizer(pair.source_x);
  stdz.apply(result.std_pair.source_x);
  stdz.apply(result.std_pair.target_x);
  const DomainPair& spair = result.std_pair;

  Rng init_rng(derive_seed(cfg.seed, "init"));
  result.model = make_trained_model_shell(cfg.method, spair.dim, cfg.hidden, spair.K,
                                          cfg.activation, init_rng);
  result.model.standardizer = stdz;
  TrainedModel& tm = result.model;

  ParamSet params = tm.params();
  GradSet grads;
  grads.init_like(params);
  OptimizerState opt;
  opt.momentum = cfg.momentum;
  opt.weight_decay = cfg.weight_decay;
  opt.init_like(params);
  Batcher batcher(spair, cfg.batch_size, derive_seed(cfg.seed, "batcher"));
  BetaSampler sampler(cfg.beta_param, derive_seed(cfg.seed, "beta"));

  CatdaSwitches sw = cfg.switches;
  if (cfg.method == MethodName::no_adapt) {
    sw.disable_domain_adv = true;
    sw.disable_category_adv = true;
  }

  // Source-supervised pretraining of the extractor (the paper fine-tunes a
  // pretrained G and trains the classifier heads from scratch). Heads are
  // reinitialized and the optimizer reset when the stage ends.
  if (cfg.pretrain_epochs > 0) {
    CatdaSwitches pre_sw;
    pre_sw.disable_domain_adv = true;
    pre_sw.disable_category_adv = true;
    const auto mask_gc = mask_by_prefix(params, {"G.", "C."});
    for (int epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
      const double p = static_cast<double>(epoch) / static_cast<double>(cfg.pretrain_epochs);
      const GroupRates rates = rates_at(cfg.schedule, p);
      for (const auto& b : batcher.next_epoch()) {
        if (tm.joint) {
          catda_objective_step(*tm.joint, params, grads, opt, b, 0.0, rates, pre_sw);
        } else {
          grads.zero();
          if (tm.dann) dann_task_loss(*tm.dann, b.xs, b.ys, 1.0, &grads);
          if (tm.mada) mada_task_loss(*tm.mada, b.xs, b.ys, 1.0, &grads);
          if (tm.rca) detail::rca_task_loss(*tm.rca, b.xs, b.ys, 1.0, &grads);
          sgd_step_masked(params, grads, opt, rates, mask_gc);
        }
      }
    }
    Rng head_rng(derive_seed(cfg.seed, "method-heads"));
    for (auto& p : params) {
      if (p.group != Group::classifier) continue;
      if (p.name.size() >= 2 && p.name.compare(p.name.size() - 2, 2, ".b") == 0) {
        p.value->fill(0.0);
      } else {
        const double scale = 1.0 / std::sqrt(static_cast<double>(p.value->rows()));
        for (double& v : p.value->data()) v = head_rng.normal(0.0, scale);
      }
    }
    opt.init_like(params);
  }

  auto snapshot_params = [&]() {
    std::vector<Matrix> snap;
    snap.reserve(params.size());
    for (auto& p : params) snap.push_back(*p.value);
    return snap;
  };
  auto restore_params = [&](const std::vector<Matrix>& snap) {
    for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = snap[i];
  };
  std::vector<Matrix> last_good = snapshot_params();

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double p = static_cast<double>(epoch) / static_cast<double>(cfg.epochs);
    const double lambda = lambda_at(cfg.schedule, p);
    const GroupRates rates = rates_at(cfg.schedule, p);
    const auto batches = batcher.next_epoch();
    LossReport acc{};
    bool ok = true;
    try {
      for (const auto& b : batches) {
        LossReport r;
        switch (cfg.method) {
          case MethodName::no_adapt:
          case MethodName::catda:
            r = catda_objective_step(*tm.joint, params, grads, opt, b, lambda, rates, sw,
                                     sw.mixup ? &sampler : nullptr);
            break;
          case MethodName::vicatda:
            r = vicatda_objective_step(*tm.joint, params, grads, opt, b, lambda, rates, sw, sampler);
            break;
          case MethodName::symnet: {
            const auto br = symnet_step(*tm.joint, params, grads, opt, b, lambda, rates);
            r.cls = br.task;
            r.f_adv_d = br.adv_classifier;
            r.g_adv_d = br.adv_extractor;
            r.lambda = lambda;
            break;
          }
          case MethodName::dann: {
            const auto br = dann_step(*tm.dann, params, grads, opt, b, lambda, rates);
            r.cls = br.task;
            r.f_adv_d = br.adv_classifier;
            r.g_adv_d = br.adv_extractor;
            r.lambda = lambda;
            break;
          }
          case MethodName::vidann: {
            const auto br = vidann_step(*tm.dann, params, grads, opt, b, lambda, rates, sampler);
            r.cls = br.task;
            r.f_adv_d = br.adv_classifier;
            r.g_adv_d = br.adv_extractor;
            r.lambda = lambda;
            break;
          }
          case MethodName::mada: {
            const auto br = mada_step(*tm.mada, params, grads, opt, b, lambda, rates);
            r.cls = br.task;
            r.f_adv_d = br.adv_classifier;
            r.g_adv_d = br.adv_extractor;
            r.lambda = lambda;
            break;
          }
          case MethodName::rca:
          case MethodName::virca: {
            const auto br = rca_step(*tm.rca, params, grads, opt, b, lambda, rates,
                                     cfg.method == MethodName::virca ? &sampler : nullptr);
            r.cls = br.task;
            r.f_adv_d = br.adv_classifier;
            r.g_adv_d = br.adv_extractor;
            r.lambda = lambda;
            break;
          }
        }
        acc.cls += r.cls;
        acc.f_adv_d += r.f_adv_d;
        acc.g_adv_d += r.g_adv_d;
        acc.f_adv_c += r.f_adv_c;
        acc.g_adv_c += r.g_adv_c;
        acc.ent += r.ent;
        acc.mean_alpha += r.mean_alpha;
      }
    } catch (const std::runtime_error& e) {
      restore_params(last_good);
      result.aborted = true;
      result.abort_reason = std::string("epoch ") + std::to_string(epoch) + ": " + e.what() +
                            " (restored last epoch-end checkpoint)";
      ok = false;
    }
    if (!ok) break;

    const double nb = static_cast<double>(batches.size());
    const EvalOutcome ev = evaluate_model(tm, spair);
    result.linkage_max_dev = std::max(result.linkage_max_dev, ev.linkage_dev);
    MetricsRow row;
    row.epoch = epoch;
    row.lambda = lambda;
    row.eta = eta_at(cfg.schedule, p);
    row.cls = acc.cls / nb;
    row.f_adv_d = acc.f_adv_d / nb;
    row.g_adv_d = acc.g_adv_d / nb;
    row.f_adv_c = acc.f_adv_c / nb;
    row.g_adv_c = acc.g_adv_c / nb;
    row.ent = acc.ent / nb;
    row.mean_alpha = acc.mean_alpha / nb;
    row.source_acc = ev.source_acc;
    row.target_acc_fs = ev.target_acc_fs;
    row.target_acc_ft = ev.target_acc_ft;
    row.target_acc_eval = ev.target_acc_eval;
    row.head_agreement = ev.head_agreement;
    row.mean_conf_gap = ev.mean_conf_gap;
    result.metrics.push_back(row);
    last_good = snapshot_params();
  }

  result.final_target_acc =
      result.metrics.empty() ? evaluate_model(tm, spair).target_acc_eval
                             : result.metrics.back().target_acc_eval;

  if (cfg.tdsr_enabled && !result.aborted && tm.joint) {
    TdsrOptions topts;
    topts.epochs = cfg.tdsr_epochs;
    topts.batch_size = cfg.batch_size;
    topts.eta_final = eta_at(cfg.schedule, 1.0);
    topts.lr_ratio_f_over_g = cfg.schedule.lr_ratio_f_over_g;
    topts.momentum = cfg.momentum;
    topts.weight_decay = cfg.weight_decay;
    topts.seed = derive_seed(cfg.seed, "tdsr");
    result.tdsr = tdsr_finetune(*tm.joint, spair.target_x, &spair.target_eval_labels, topts);
    for (auto it = result.tdsr.trace.rbegin(); it != result.tdsr.trace.rend(); ++it)
      if (!it->aborted && it->target_acc >= 0.0) {
        result.final_target_acc = it->target_acc;
        break;
      }
  }
  return result;
}

inline TrainResult train(const ExperimentConfig& cfg) { return train(cfg, build_dataset(cfg)); }

// ------------------------------------------------------------ artifacts ---

inline std::string metrics_csv(const std::vector<MetricsRow>& rows) {
  std::string out =
      "epoch,lambda,eta,cls,f_adv_d,g_adv_d,f_adv_c,g_adv_c,ent,source_acc,"
      "target_acc_fs,target_acc_ft,target_acc_eval,head_agreement,mean_conf_gap,mean_alpha\n";
  for (const auto& r : rows) {
    out += std::to_string(r.epoch);
    for (double v : {r.lambda, r.eta, r.cls, r.f_adv_d, r.g_adv_d, r.f_adv_c, r.g_adv_c, r.ent,
                     r.source_acc, r.target_acc_fs, r.target_acc_ft, r.target_acc_eval,
                     r.head_agreement, r.mean_conf_gap, r.mean_alpha})
      out += "," + fmt_double(v);
    out += "\n";
  }
  return out;
}

/// Histogram data for the source/target head consistency figure: 20 bins on
/// [0,1] of max ps, max pt and |max ps - max pt| over target instances.
struct ConsistencyHist {
  std::array<int, 20> max_ps{}, max_pt{}, gap{};
  double agreement = 0;
};

inline ConsistencyHist consistency_report(const JointModel& m, const DomainPair& spair) {
  ConsistencyHist h;
  const ProbBatch pbt = m.prob_views(spair.target_x);
  const auto fs = predict(pbt, Head::source_head);
  const auto ft = predict(pbt, Head::target_head);
  auto bin_of = [](double v) {
    int b = static_cast<int>(v * 20.0);
    return std::min(std::max(b, 0), 19);
  };
  int agree = 0;
  for (std::size_t i = 0; i < fs.size(); ++i) {
    h.max_ps[bin_of(fs[i].confidence)] += 1;
    h.max_pt[bin_of(ft[i].confidence)] += 1;
    h.gap[bin_of(std::abs(fs[i].confidence - ft[i].confidence))] += 1;
    if (fs[i].label == ft[i].label) ++agree;
  }
  h.agreement = fs.empty() ? 0.0 : static_cast<double>(agree) / static_cast<double>(fs.size());
  return h;
}

inline std::string consistency_csv(const ConsistencyHist& h) {
  std::string out = "bin_lo,bin_hi,count_max_ps,count_max_pt,count_abs_gap\n";
  for (int b = 0; b < 20; ++b) {
    out += fmt_double(b / 20.0) + "," + fmt_double((b + 1) / 20.0) + "," +
           std::to_string(h.max_ps[b]) + "," + std::to_string(h.max_pt[b]) + "," +
           std::to_string(h.gap[b]) + "\n";
  }
  return out;
}

/// K x K confusion counts on target (rows: true label, cols: prediction).
inline std::string confusion_csv(const TrainedModel& tm, const DomainPair& spair) {
  std::string out = "head,true_label,pred_label,count\n";
  const JointModel* jm = tm.joint ? &*tm.joint : (tm.rca ? &tm.rca->joint : nullptr);
  auto emit = [&](const std::string& head, const std::vector<int>& preds) {
    std::vector<int> counts(spair.K * spair.K, 0);
    for (std::size_t i = 0; i < preds.size(); ++i)
      counts[static_cast<std::size_t>(spair.target_eval_labels[i]) * spair.K +
             static_cast<std::size_t>(preds[i])] += 1;
    for (std::size_t t = 0; t < spair.K; ++t)
      for (std::size_t q = 0; q < spair.K; ++q)
        out += head + "," + std::to_string(t) + "," + std::to_string(q) + "," +
               std::to_string(counts[t * spair.K + q]) + "\n";
  };
  if (jm) {
    const ProbBatch pbt = jm->prob_views(spair.target_x);
    auto labels_of = [](const std::vector<Prediction>& ps) {
      std::vector<int> l(ps.size());
      for (std::size_t i = 0; i < ps.size(); ++i) l[i] = ps[i].label;
      return l;
    };
    emit("Fs", labels_of(predict(pbt, Head::source_head)));
    emit("Ft", labels_of(predict(pbt, Head::target_head)));
  }
  if (tm.dann || tm.mada || tm.rca) {
    const Mlp& g = tm.extractor();
    const AffineLayer& task = tm.dann ? tm.dann->task : (tm.mada ? tm.mada->task : tm.rca->task);
    MlpCache cache;
    emit("C", detail::kway_argmax(kway_softmax(affine_forward(task, g.forward(spair.target_x, &cache)))));
  }
  return out;
}

/// One row per instance, both domains: domain, features G(x), then the
/// predicted label and confidence per available head.
inline std::string features_csv(const TrainedModel& tm, const DomainPair& spair) {
  const JointModel* jm = tm.joint ? &*tm.joint : (tm.rca ? &tm.rca->joint : nullptr);
  std::string out = "domain";
  const std::size_t fd = tm.extractor().output_dim();
  for (std::size_t j = 0; j < fd; ++j) out += ",g" + std::to_string(j + 1);
  if (jm) out += ",pred_fs,conf_fs,pred_ft,conf_ft";
  else out += ",pred_c,conf_c";
  out += "\n";
  auto emit = [&](const char* dom, const Matrix& x) {
    MlpCache cache;
    const Matrix feats = tm.extractor().forward(x, &cache);
    std::vector<Prediction> fs, ft;
    KwayProb kp;
    if (jm) {
      const ProbBatch pb = jm->prob_views(x);
      fs = predict(pb, Head::source_head);
      ft = predict(pb, Head::target_head);
    } else {
      const AffineLayer& task = tm.dann ? tm.dann->task : tm.mada->task;
      kp = kway_softmax(affine_forward(task, feats));
    }
    for (std::size_t i = 0; i < x.rows(); ++i) {
      out += dom;
      for (std::size_t j = 0; j < fd; ++j) out += "," + fmt_double(feats(i, j));
      if (jm) {
        out += "," + std::to_string(fs[i].label) + "," + fmt_double(fs[i].confidence);
        out += "," + std::to_string(ft[i].label) + "," + fmt_double(ft[i].confidence);
      } else {
        std::size_t best = 0;
        for (std::size_t j = 1; j < kp.p.cols(); ++j)
          if (kp.p(i, j) > kp.p(i, best)) best = j;
        out += "," + std::to_string(best) + "," + fmt_double(kp.p(i, best));
      }
      out += "\n";
    }
  };
  emit("source", spair.source_x);
  emit("target", spair.target_x);
  return out;
}

inline std::string tdsr_csv(const TdsrResult& res) {
  std::string out = "epoch,loss_begin,loss_end,target_acc,refine_iters,max_cluster_share,aborted\n";
  for (const auto& r : res.trace)
    out += std::to_string(r.epoch) + "," + fmt_double(r.loss_begin) + "," + fmt_double(r.loss_end) +
           "," + fmt_double(r.target_acc) + "," + std::to_string(r.refine_iters) + "," +
           fmt_double(r.max_cluster_share) + "," + (r.aborted ? "1" : "0") + "\n";
  return out;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path.string());
  out << content;
}

inline void write_artifacts(TrainResult& result, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  write_text_file(dir / "metrics.csv", metrics_csv(result.metrics));
  write_text_file(dir / "confusion.csv", confusion_csv(result.model, result.std_pair));
  write_text_file(dir / "features.csv", features_csv(result.model, result.std_pair));
  if (result.model.joint)
    write_text_file(dir / "consistency.csv",
                    consistency_csv(consistency_report(*result.model.joint, result.std_pair)));
  if (!result.tdsr.trace.empty()) write_text_file(dir / "tdsr.csv", tdsr_csv(result.tdsr));
  save_checkpoint((dir / "checkpoint.txt").string(), result.model);
}

// -------------------------------------------------------------- ablation ---

struct AblationCell {
  std::string name;
  ExperimentConfig config;
};

struct AblationRun {
  std::string cell;
  std::uint64_t seed = 0;
  double acc = 0;
  bool failed = false;
  std::string error;
};

struct AblationSummary {
  std::string cell;
  int n = 0;
  double mean = 0, stddev = 0, median = 0, min = 0, max = 0;
  int failed = 0;
};

struct AblationTable {
  std::vector<AblationRun> runs;
  std::vector<AblationSummary> summaries;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Runs every (cell, seed) as an independent training job; cells are pure
/// functions of their config so jobs execute in parallel. Failed runs are
/// marked and the table is still emitted.
inline AblationTable ablate(const std::vector<AblationCell>& cells,
                            const std::vector<std::uint64_t>& seeds) {
  check_arg(!cells.empty(), "ablate: need at least one cell");
  check_arg(!seeds.empty(), "ablate: need at least one seed");
  AblationTable table;
  table.runs.resize(cells.size() * seeds.size());

  std::vector<std::pair<std::size_t, std::size_t>> jobs;
  for (std::size_t ci = 0; ci < cells.size(); ++ci)
    for (std::size_t si = 0; si < seeds.size(); ++si) jobs.emplace_back(ci, si);

  const std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
  for (std::size_t start = 0; start < jobs.size(); start += workers) {
    std::vector<std::future<void>> wave;
    for (std::size_t j = start; j < std::min(start + workers, jobs.size()); ++j) {
      wave.push_back(std::async(std::launch::async, [&table, &cells, &seeds, &jobs, j]() {
        const auto [ci, si] = jobs[j];
        AblationRun& run = table.runs[ci * seeds.size() + si];
        run.cell = cells[ci].name;
        run.seed = seeds[si];
        try {
          ExperimentConfig cfg = cells[ci].config;
          cfg.seed = seeds[si];
          TrainResult r = train(cfg);
          if (r.aborted) throw std::runtime_error(r.abort_reason);
          run.acc = r.final_target_acc;
        } catch (const std::exception& e) {
          run.failed = true;
          run.error = e.what();
        }
      }));
    }
    for (auto& f : wave) f.get();
  }

  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    AblationSummary s;
    s.cell = cells[ci].name;
    std::vector<double> accs;
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const auto& run = table.runs[ci * seeds.size() + si];
      if (run.failed) {
        s.failed += 1;
        continue;
      }
      accs.push_back(run.acc);
    }
    s.n = static_cast<int>(accs.size());
    if (!accs.empty()) {
      for (double a : accs) s.mean += a;
      s.mean /= accs.size();
      double var = 0;
      for (double a : accs) var += (a - s.mean) * (a - s.mean);
      s.stddev = accs.size() > 1 ? std::sqrt(var / (accs.size() - 1)) : 0.0;
      s.median = median_of(accs);
      s.min = *std::min_element(accs.begin(), accs.end());
      s.max = *std::max_element(accs.begin(), accs.end());
    }
    table.summaries.push_back(s);
  }
  return table;
}

inline std::string ablation_csv(const AblationTable& table) {
  std::string out = "cell,n_seeds,acc_mean,acc_std,acc_median,acc_min,acc_max,failed\n";
  for (const auto& s : table.summaries)
    out += s.cell + "," + std::to_string(s.n) + "," + fmt_double(s.mean) + "," +
           fmt_double(s.stddev) + "," + fmt_double(s.median) + "," + fmt_double(s.min) + "," +
           fmt_double(s.max) + "," + std::to_string(s.failed) + "\n";
  return out;
}

inline std::string ablation_runs_csv(const AblationTable& table) {
  std::string out = "cell,seed,target_acc,failed,error\n";
  for (const auto& r : table.runs)
    out += r.cell + "," + std::to_string(r.seed) + "," + fmt_double(r.acc) + "," +
           (r.failed ? "1" : "0") + "," + r.error + "\n";
  return out;
}

/// The full Table-1-style grid on the base config's dataset.
inline std::vector<AblationCell> default_ablation_cells(const ExperimentConfig& base) {
  std::vector<AblationCell> cells;
  auto push = [&](const std::string& name, MethodName method, auto mutate) {
    ExperimentConfig c = base;
    c.method = method;
    c.switches = CatdaSwitches{};
    c.tdsr_enabled = false;
    mutate(c);
    cells.push_back({name, c});
  };
  auto nop = [](ExperimentConfig&) {};
  push("no_adapt", MethodName::no_adapt, nop);
  push("dann", MethodName::dann, nop);
  push("mada", MethodName::mada, nop);
  push("rca", MethodName::rca, nop);
  push("symnet", MethodName::symnet, nop);
  push("vidann", MethodName::vidann, nop);
  push("virca", MethodName::virca, nop);
  push("catda_wo_dadv_cadv", MethodName::catda, [](ExperimentConfig& c) {
    c.switches.disable_domain_adv = true;
    c.switches.disable_category_adv = true;
  });
  push("catda_wo_cadv", MethodName::catda,
       [](ExperimentConfig& c) { c.switches.disable_category_adv = true; });
  push("vicatda_wo_vcadv", MethodName::vicatda,
       [](ExperimentConfig& c) { c.switches.disable_category_adv = true; });
  push("catda_wo_dadv", MethodName::catda,
       [](ExperimentConfig& c) { c.switches.disable_domain_adv = true; });
  push("vicatda_wo_vdadv", MethodName::vicatda,
       [](ExperimentConfig& c) { c.switches.disable_domain_adv = true; });
  push("catda_same_domain_weighting", MethodName::catda,
       [](ExperimentConfig& c) { c.switches.same_domain_weighting = true; });
  push("catda_mixup", MethodName::catda, [](ExperimentConfig& c) { c.switches.mixup = true; });
  push("catda", MethodName::catda, nop);
  push("vicatda", MethodName::vicatda, nop);
  push("vicatda_tdsr", MethodName::vicatda, [](ExperimentConfig& c) { c.tdsr_enabled = true; });
  return cells;
}

/// The beta sweep of the sensitivity table: vicatda at each beta value.
inline std::vector<AblationCell> beta_sweep_cells(const ExperimentConfig& base,
                                                  const std::vector<double>& betas) {
  std::vector<AblationCell> cells;
  for (double b : betas) {
    ExperimentConfig c = base;
    c.method = MethodName::vicatda;
    c.switches = CatdaSwitches{};
    c.tdsr_enabled = false;
    c.beta_param = b;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "beta_%.1f", b);
    cells.push_back({buf, c});
  }
  return cells;
}

}  // namespace dalab
