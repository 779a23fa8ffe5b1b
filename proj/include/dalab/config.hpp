#pragma once

#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "dalab/catda.hpp"
#include "dalab/data.hpp"
#include "dalab/optim.hpp"

namespace dalab {

enum class MethodName { no_adapt, dann, mada, rca, symnet, catda, vicatda, vidann, virca };

inline MethodName method_from_string(const std::string& s) {
  if (s == "no_adapt") return MethodName::no_adapt;
  if (s == "dann") return MethodName::dann;
  if (s == "mada") return MethodName::mada;
  if (s == "rca") return MethodName::rca;
  if (s == "symnet") return MethodName::symnet;
  if (s == "catda") return MethodName::catda;
  if (s == "vicatda") return MethodName::vicatda;
  if (s == "vidann") return MethodName::vidann;
  if (s == "virca") return MethodName::virca;
  throw std::invalid_argument("unknown method: " + s);
}

inline std::string to_string(MethodName m) {
  switch (m) {
    case MethodName::no_adapt: return "no_adapt";
    case MethodName::dann: return "dann";
    case MethodName::mada: return "mada";
    case MethodName::rca: return "rca";
    case MethodName::symnet: return "symnet";
    case MethodName::catda: return "catda";
    case MethodName::vicatda: return "vicatda";
    case MethodName::vidann: return "vidann";
    default: return "virca";
  }
}

/// Dataset source: the default desk-scale task is two-moons with 500
/// instances per domain, jitter noise 0.1 and a 45-degree target rotation.
struct DatasetSpec {
  std::string kind = "two_moons";  // two_moons | gaussian_blobs | csv
  std::size_t n_per_domain = 500;
  double noise = 0.1;
  ShiftSpec shift{45.0, {}, {}, 0.0};
  std::size_t blob_k = 4;
  std::size_t blob_dim = 3;
  double blob_class_sep = 3.0;
  std::string csv_path;
};

struct ExperimentConfig {
  MethodName method = MethodName::catda;
  int epochs = 200;
  /// Source-supervised warmup of the extractor before the method stage (the
  /// paper fine-tunes a pretrained G and trains the classifier from scratch;
  /// this stage is the desk-scale stand-in for that pretraining). Classifier
  /// heads are reinitialized and the optimizer state reset when it ends.
  int pretrain_epochs = 100;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
  Schedule schedule;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double beta_param = 0.2;
  std::vector<std::size_t> hidden = {16, 16};
  std::string activation = "relu";
  CatdaSwitches switches;
  bool tdsr_enabled = false;
  int tdsr_epochs = 10;
  DatasetSpec dataset;

  void validate() const {
    check_arg(epochs >= 0, "config: epochs must be >= 0");
    check_arg(pretrain_epochs >= 0, "config: pretrain_epochs must be >= 0");
    check_arg(batch_size >= 1, "config: batch_size must be >= 1");
    check_arg(beta_param > 0, "config: beta_param must be positive");
    check_arg(!hidden.empty(), "config: hidden widths must be nonempty");
    schedule.validate();
    const bool catda_family = method == MethodName::catda || method == MethodName::vicatda;
    const bool any_switch = switches.disable_domain_adv || switches.disable_category_adv ||
                            switches.same_domain_weighting || switches.mixup ||
                            switches.ent_enabled || tdsr_enabled;
    check_arg(!any_switch || catda_family,
              "config: ablation switches are only legal for catda/vicatda");
    check_arg(!switches.mixup || method == MethodName::catda,
              "config: mixup is a catda-only variant");
    check_arg(dataset.kind == "two_moons" || dataset.kind == "gaussian_blobs" || dataset.kind == "csv",
              "config: unknown dataset kind " + dataset.kind);
  }
};

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  static const std::set<std::string> known = {
      "method", "epochs", "pretrain_epochs", "batch_size", "seed", "schedule", "momentum",
      "weight_decay", "beta_param", "hidden", "activation", "switches", "tdsr_enabled",
      "tdsr_epochs", "dataset"};
  for (auto it = j.begin(); it != j.end(); ++it)
    check_arg(known.count(it.key()) > 0, "config: unknown key " + it.key());

  if (j.contains("method")) c.method = method_from_string(j["method"].get<std::string>());
  if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
  if (j.contains("pretrain_epochs")) c.pretrain_epochs = j["pretrain_epochs"].get<int>();
  if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<std::size_t>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("momentum")) c.momentum = j["momentum"].get<double>();
  if (j.contains("weight_decay")) c.weight_decay = j["weight_decay"].get<double>();
  if (j.contains("beta_param")) c.beta_param = j["beta_param"].get<double>();
  if (j.contains("hidden")) c.hidden = j["hidden"].get<std::vector<std::size_t>>();
  if (j.contains("activation")) c.activation = j["activation"].get<std::string>();
  if (j.contains("tdsr_enabled")) c.tdsr_enabled = j["tdsr_enabled"].get<bool>();
  if (j.contains("tdsr_epochs")) c.tdsr_epochs = j["tdsr_epochs"].get<int>();
  if (j.contains("schedule")) {
    const auto& s = j["schedule"];
    if (s.contains("eta0")) c.schedule.eta0 = s["eta0"].get<double>();
    if (s.contains("alpha_sched")) c.schedule.alpha_sched = s["alpha_sched"].get<double>();
    if (s.contains("beta_sched")) c.schedule.beta_sched = s["beta_sched"].get<double>();
    if (s.contains("gamma")) c.schedule.gamma = s["gamma"].get<double>();
    if (s.contains("lr_ratio_f_over_g"))
      c.schedule.lr_ratio_f_over_g = s["lr_ratio_f_over_g"].get<double>();
  }
  if (j.contains("switches")) {
    const auto& s = j["switches"];
    if (s.contains("disable_domain_adv")) c.switches.disable_domain_adv = s["disable_domain_adv"].get<bool>();
    if (s.contains("disable_category_adv")) c.switches.disable_category_adv = s["disable_category_adv"].get<bool>();
    if (s.contains("same_domain_weighting")) c.switches.same_domain_weighting = s["same_domain_weighting"].get<bool>();
    if (s.contains("mixup")) c.switches.mixup = s["mixup"].get<bool>();
    if (s.contains("ent_enabled")) c.switches.ent_enabled = s["ent_enabled"].get<bool>();
  }
  if (j.contains("dataset")) {
    const auto& d = j["dataset"];
    if (d.contains("kind")) c.dataset.kind = d["kind"].get<std::string>();
    if (d.contains("n_per_domain")) c.dataset.n_per_domain = d["n_per_domain"].get<std::size_t>();
    if (d.contains("noise")) c.dataset.noise = d["noise"].get<double>();
    if (d.contains("rotation_deg")) c.dataset.shift.rotation_deg = d["rotation_deg"].get<double>();
    if (d.contains("translation")) c.dataset.shift.translation = d["translation"].get<std::vector<double>>();
    if (d.contains("scale")) c.dataset.shift.scale = d["scale"].get<std::vector<double>>();
    if (d.contains("target_noise")) c.dataset.shift.noise_std = d["target_noise"].get<double>();
    if (d.contains("blob_k")) c.dataset.blob_k = d["blob_k"].get<std::size_t>();
    if (d.contains("blob_dim")) c.dataset.blob_dim = d["blob_dim"].get<std::size_t>();
    if (d.contains("blob_class_sep")) c.dataset.blob_class_sep = d["blob_class_sep"].get<double>();
    if (d.contains("csv_path")) c.dataset.csv_path = d["csv_path"].get<std::string>();
  }
  c.validate();
  return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["method"] = to_string(c.method);
  j["epochs"] = c.epochs;
  j["pretrain_epochs"] = c.pretrain_epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["beta_param"] = c.beta_param;
  j["hidden"] = c.hidden;
  j["activation"] = c.activation;
  j["tdsr_enabled"] = c.tdsr_enabled;
  j["tdsr_epochs"] = c.tdsr_epochs;
  j["schedule"] = {{"eta0", c.schedule.eta0},
                   {"alpha_sched", c.schedule.alpha_sched},
                   {"beta_sched", c.schedule.beta_sched},
                   {"gamma", c.schedule.gamma},
                   {"lr_ratio_f_over_g", c.schedule.lr_ratio_f_over_g}};
  j["switches"] = {{"disable_domain_adv", c.switches.disable_domain_adv},
                   {"disable_category_adv", c.switches.disable_category_adv},
                   {"same_domain_weighting", c.switches.same_domain_weighting},
                   {"mixup", c.switches.mixup},
                   {"ent_enabled", c.switches.ent_enabled}};
  nlohmann::json d;
  d["kind"] = c.dataset.kind;
  d["n_per_domain"] = c.dataset.n_per_domain;
  d["noise"] = c.dataset.noise;
  d["rotation_deg"] = c.dataset.shift.rotation_deg;
  if (!c.dataset.shift.translation.empty()) d["translation"] = c.dataset.shift.translation;
  if (!c.dataset.shift.scale.empty()) d["scale"] = c.dataset.shift.scale;
  d["target_noise"] = c.dataset.shift.noise_std;
  if (c.dataset.kind == "gaussian_blobs") {
    d["blob_k"] = c.dataset.blob_k;
    d["blob_dim"] = c.dataset.blob_dim;
    d["blob_class_sep"] = c.dataset.blob_class_sep;
  }
  if (c.dataset.kind == "csv") d["csv_path"] = c.dataset.csv_path;
  j["dataset"] = d;
  return j;
}

/// Builds the dataset named by the config; the generator stream is derived
/// from the experiment seed.
inline DomainPair build_dataset(const ExperimentConfig& c) {
  const std::uint64_t dseed = derive_seed(c.seed, "dataset");
  if (c.dataset.kind == "two_moons")
    return gen_two_moons(c.dataset.n_per_domain, c.dataset.noise, c.dataset.shift, dseed);
  if (c.dataset.kind == "gaussian_blobs")
    return gen_gaussian_blobs(c.dataset.blob_k, c.dataset.blob_dim, c.dataset.n_per_domain,
                              c.dataset.blob_class_sep, c.dataset.shift, dseed);
  return load_csv(c.dataset.csv_path);
}

}  // namespace dalab
