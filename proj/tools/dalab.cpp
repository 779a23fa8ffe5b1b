// Command-line front end: generate-data, train, ablate, tdsr, check, eval.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "dalab/harness.hpp"
#include "dalab/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j;
  in >> j;
  return j;
}

dalab::ExperimentConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
  dalab::ExperimentConfig cfg =
      path.empty() ? dalab::ExperimentConfig{} : dalab::config_from_json(load_json(path));
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

int cmd_generate_data(const std::string& config_path, std::optional<std::uint64_t> seed,
                      const std::string& out_dir) {
  const auto cfg = load_config(config_path, seed);
  const dalab::DomainPair pair = dalab::build_dataset(cfg);
  fs::create_directories(out_dir);
  const auto path = fs::path(out_dir) / "data.csv";
  dalab::save_csv(path.string(), pair);
  std::printf("wrote %s (%zu source, %zu target, K=%zu, d=%zu)\n", path.string().c_str(),
              pair.n_source(), pair.n_target(), pair.K, pair.dim);
  return 0;
}

int cmd_train(const std::string& config_path, std::optional<std::uint64_t> seed,
              const std::string& out_dir) {
  const auto cfg = load_config(config_path, seed);
  dalab::TrainResult result = dalab::train(cfg);
  dalab::write_artifacts(result, out_dir);
  {
    std::ofstream out(fs::path(out_dir) / "config.json");
    out << dalab::config_to_json(cfg).dump(2) << "\n";
  }
  if (result.aborted) {
    std::printf("ABORTED: %s\n", result.abort_reason.c_str());
    return 2;
  }
  std::printf("method=%s epochs=%d final target acc=%.4f (artifacts in %s)\n",
              dalab::to_string(cfg.method).c_str(), cfg.epochs, result.final_target_acc,
              out_dir.c_str());
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_dir) {
  const json j = load_json(config_path);
  dalab::ExperimentConfig base;
  if (j.contains("base")) base = dalab::config_from_json(j["base"]);

  std::vector<dalab::AblationCell> cells;
  if (j.contains("grid")) {
    const std::string grid = j["grid"].get<std::string>();
    if (grid == "table1") {
      cells = dalab::default_ablation_cells(base);
    } else if (grid == "beta_sweep") {
      std::vector<double> betas = {0.2, 0.4, 0.6, 0.8, 1.0};
      if (j.contains("betas")) betas = j["betas"].get<std::vector<double>>();
      cells = dalab::beta_sweep_cells(base, betas);
    } else {
      throw std::runtime_error("unknown grid name: " + grid);
    }
  }
  if (j.contains("cells")) {
    for (const auto& cj : j["cells"]) {
      dalab::AblationCell cell;
      cell.name = cj.at("name").get<std::string>();
      cell.config = dalab::config_from_json(cj.at("config"));
      cells.push_back(std::move(cell));
    }
  }
  if (cells.empty()) throw std::runtime_error("ablate config needs a grid or cells");

  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};
  if (j.contains("seeds")) seeds = j["seeds"].get<std::vector<std::uint64_t>>();

  const dalab::AblationTable table = dalab::ablate(cells, seeds);
  fs::create_directories(out_dir);
  dalab::write_text_file(fs::path(out_dir) / "ablation.csv", dalab::ablation_csv(table));
  dalab::write_text_file(fs::path(out_dir) / "ablation_runs.csv", dalab::ablation_runs_csv(table));
  for (const auto& s : table.summaries)
    std::printf("%-28s n=%d acc %.4f +- %.4f (median %.4f)%s\n", s.cell.c_str(), s.n, s.mean,
                s.stddev, s.median, s.failed ? "  [failures]" : "");
  std::printf("wrote %s/ablation.csv\n", out_dir.c_str());
  return 0;
}

int cmd_tdsr(const std::string& checkpoint_path, const std::string& data_path, int epochs,
             std::optional<std::uint64_t> seed, const std::string& out_dir) {
  dalab::TrainedModel tm = dalab::load_checkpoint(checkpoint_path);
  if (!tm.joint)
    throw std::runtime_error("tdsr needs a joint-classifier checkpoint (catda/vicatda family)");
  dalab::DomainPair pair = dalab::load_csv(data_path);
  tm.standardizer.apply(pair.source_x);
  tm.standardizer.apply(pair.target_x);

  dalab::TdsrOptions opts;
  opts.epochs = epochs;
  opts.eta_final = dalab::eta_at(dalab::Schedule{}, 1.0);
  opts.seed = seed.value_or(1);
  const dalab::TdsrResult res =
      dalab::tdsr_finetune(*tm.joint, pair.target_x, &pair.target_eval_labels, opts);

  fs::create_directories(out_dir);
  dalab::write_text_file(fs::path(out_dir) / "tdsr.csv", dalab::tdsr_csv(res));
  dalab::save_checkpoint((fs::path(out_dir) / "checkpoint.txt").string(), tm);
  for (const auto& r : res.trace)
    std::printf("epoch %d: loss %.5f -> %.5f acc %.4f (refine iters %d)%s\n", r.epoch,
                r.loss_begin, r.loss_end, r.target_acc, r.refine_iters,
                r.aborted ? " [aborted]" : "");
  if (res.aborted) std::printf("NOTE: %s\n", res.note.c_str());
  return 0;
}

int cmd_check() {
  const dalab::VerifyReport rep = dalab::verify();
  for (const auto& c : rep.checks)
    std::printf("[%s] %-45s %s\n", c.pass ? "PASS" : "FAIL", c.name.c_str(), c.detail.c_str());
  std::printf("%zu checks, %s\n", rep.checks.size(), rep.all_pass ? "all passed" : "FAILURES");
  return rep.all_pass ? 0 : 1;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& data_path,
             const std::string& out_dir) {
  dalab::TrainedModel tm = dalab::load_checkpoint(checkpoint_path);
  dalab::DomainPair pair = dalab::load_csv(data_path);
  tm.standardizer.apply(pair.source_x);
  tm.standardizer.apply(pair.target_x);
  const dalab::EvalOutcome ev = dalab::evaluate_model(tm, pair);
  std::printf("source acc %.4f | target acc Fs %.4f Ft %.4f eval %.4f | agreement %.4f\n",
              ev.source_acc, ev.target_acc_fs, ev.target_acc_ft, ev.target_acc_eval,
              ev.head_agreement);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    dalab::write_text_file(fs::path(out_dir) / "confusion.csv", dalab::confusion_csv(tm, pair));
    dalab::write_text_file(fs::path(out_dir) / "features.csv", dalab::features_csv(tm, pair));
    if (tm.joint)
      dalab::write_text_file(fs::path(out_dir) / "consistency.csv",
                             dalab::consistency_csv(dalab::consistency_report(*tm.joint, pair)));
    std::printf("wrote evaluation artifacts to %s\n", out_dir.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial domain-adaptation laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", checkpoint_path, data_path;
  std::optional<std::uint64_t> seed;
  int tdsr_epochs = 10;

  auto* gen = app.add_subcommand("generate-data", "Generate a synthetic two-domain CSV");
  gen->add_option("--config", config_path, "experiment config JSON");
  gen->add_option("--seed", seed, "seed override");
  gen->add_option("--out-dir", out_dir, "output directory");

  auto* tr = app.add_subcommand("train", "Train one configuration and emit artifacts");
  tr->add_option("--config", config_path, "experiment config JSON");
  tr->add_option("--seed", seed, "seed override");
  tr->add_option("--out-dir", out_dir, "output directory");

  auto* ab = app.add_subcommand("ablate", "Run a grid of configurations over seeds");
  ab->add_option("--config", config_path, "ablation config JSON (base/grid/cells/seeds)")
      ->required();
  ab->add_option("--out-dir", out_dir, "output directory");

  auto* td = app.add_subcommand("tdsr", "Fine-tune a trained joint model with cluster labels");
  td->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  td->add_option("--data", data_path, "dataset CSV")->required();
  td->add_option("--epochs", tdsr_epochs, "fine-tuning epochs");
  td->add_option("--seed", seed, "seed override");
  td->add_option("--out-dir", out_dir, "output directory");

  app.add_subcommand("check", "Run the analytic verification suite");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset CSV");
  ev->add_option("--checkpoint", checkpoint_path, "model checkpoint")->required();
  ev->add_option("--data", data_path, "dataset CSV")->required();
  ev->add_option("--out-dir", out_dir, "output directory (optional artifacts)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_generate_data(config_path, seed, out_dir);
    if (tr->parsed()) return cmd_train(config_path, seed, out_dir);
    if (ab->parsed()) return cmd_ablate(config_path, out_dir);
    if (td->parsed()) return cmd_tdsr(checkpoint_path, data_path, tdsr_epochs, seed, out_dir);
    if (app.get_subcommand("check")->parsed()) return cmd_check();
    if (ev->parsed()) return cmd_eval(checkpoint_path, data_path, out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
