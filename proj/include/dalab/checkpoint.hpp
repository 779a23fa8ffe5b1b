#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dalab/baselines.hpp"
#include "dalab/config.hpp"

namespace dalab {

/// A model plus everything needed to evaluate it on raw data: the method it
/// was trained with, the source-fitted standardizer, and the architecture.
struct TrainedModel {
  MethodName method = MethodName::catda;
  std::size_t K = 0;
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden;
  std::string activation = "relu";
  Standardizer standardizer;

  std::optional<JointModel> joint;  // catda / vicatda / symnet / no_adapt
  std::optional<DannModel> dann;    // dann / vidann
  std::optional<MadaModel> mada;    // mada
  std::optional<RcaModel> rca;      // rca / virca

  ParamSet params() {
    if (joint) return joint->params();
    if (dann) return dann->params();
    if (mada) return mada->params();
    if (rca) return rca->params();
    throw std::logic_error("TrainedModel: no model populated");
  }

  const Mlp& extractor() const {
    if (joint) return joint->extractor;
    if (dann) return dann->extractor;
    if (mada) return mada->extractor;
    if (rca) return rca->joint.extractor;
    throw std::logic_error("TrainedModel: no model populated");
  }
};

/// Builds the method's model family with freshly initialized parameters.
inline TrainedModel make_trained_model_shell(MethodName method, std::size_t input_dim,
                                             const std::vector<std::size_t>& hidden, std::size_t K,
                                             const std::string& activation, Rng& rng) {
  TrainedModel tm;
  tm.method = method;
  tm.K = K;
  tm.input_dim = input_dim;
  tm.hidden = hidden;
  tm.activation = activation;
  const Activation act = activation_from_string(activation);
  switch (method) {
    case MethodName::dann:
    case MethodName::vidann:
      tm.dann = make_dann_model(input_dim, hidden, K, act, rng);
      break;
    case MethodName::mada:
      tm.mada = make_mada_model(input_dim, hidden, K, act, rng);
      break;
    case MethodName::rca:
    case MethodName::virca:
      tm.rca = make_rca_model(input_dim, hidden, K, act, rng);
      break;
    default:
      tm.joint = make_joint_model(input_dim, hidden, K, act, rng);
      break;
  }
  return tm;
}

// Versioned plain-text checkpoint: a header, the standardizer, then every
// parameter matrix as `matrix <name> <rows> <cols>` followed by rows of
// decimal floats printed with enough digits to round-trip exactly.

inline void save_checkpoint(const std::string& path, TrainedModel& tm) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
  out << "dalab-checkpoint v1\n";
  out << "method " << to_string(tm.method) << "\n";
  out << "K " << tm.K << "\n";
  out << "input_dim " << tm.input_dim << "\n";
  out << "activation " << tm.activation << "\n";
  out << "hidden";
  for (auto h : tm.hidden) out << " " << h;
  out << "\n";
  auto dump = [&](const std::string& name, const Matrix& m) {
    out << "matrix " << name << " " << m.rows() << " " << m.cols() << "\n";
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) out << (j ? " " : "") << fmt_double(m(i, j));
      out << "\n";
    }
  };
  Matrix mean(1, tm.standardizer.mean.size());
  Matrix sd(1, tm.standardizer.std_dev.size());
  for (std::size_t j = 0; j < tm.standardizer.mean.size(); ++j) {
    mean(0, j) = tm.standardizer.mean[j];
    sd(0, j) = tm.standardizer.std_dev[j];
  }
  dump("std.mean", mean);
  dump("std.std", sd);
  for (auto& p : tm.params()) dump(p.name, *p.value);
}

inline TrainedModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
  std::string line;
  auto next_line = [&]() {
    if (!std::getline(in, line)) throw std::runtime_error("load_checkpoint: truncated file");
    return line;
  };
  if (next_line() != "dalab-checkpoint v1")
    throw std::runtime_error("load_checkpoint: bad version line");

  TrainedModel tm;
  std::string word;
  {
    std::istringstream ss(next_line());
    ss >> word >> word;
    tm.method = method_from_string(word);
  }
  {
    std::istringstream ss(next_line());
    ss >> word >> tm.K;
  }
  {
    std::istringstream ss(next_line());
    ss >> word >> tm.input_dim;
  }
  {
    std::istringstream ss(next_line());
    ss >> word >> tm.activation;
  }
  {
    std::istringstream ss(next_line());
    ss >> word;
    std::size_t h;
    while (ss >> h) tm.hidden.push_back(h);
  }
  Rng rng(0);
  TrainedModel shell = make_trained_model_shell(tm.method, tm.input_dim, tm.hidden, tm.K,
                                                tm.activation, rng);
  shell.standardizer.mean.assign(tm.input_dim, 0.0);
  shell.standardizer.std_dev.assign(tm.input_dim, 1.0);

  ParamSet params = shell.params();
  auto read_matrix = [&](const std::string& header) {
    std::istringstream ss(header);
    std::string tag, name;
    std::size_t r, c;
    ss >> tag >> name >> r >> c;
    if (tag != "matrix") throw std::runtime_error("load_checkpoint: expected matrix line, got " + header);
    Matrix m(r, c);
    for (std::size_t i = 0; i < r; ++i) {
      std::istringstream rowss(next_line());
      for (std::size_t j = 0; j < c; ++j)
        if (!(rowss >> m(i, j))) throw std::runtime_error("load_checkpoint: short row in " + name);
    }
    return std::pair<std::string, Matrix>{name, std::move(m)};
  };

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto [name, m] = read_matrix(line);
    if (name == "std.mean") {
      shell.standardizer.mean.assign(m.data().begin(), m.data().end());
      continue;
    }
    if (name == "std.std") {
      shell.standardizer.std_dev.assign(m.data().begin(), m.data().end());
      continue;
    }
    bool found = false;
    for (auto& p : params)
      if (p.name == name) {
        check_arg(p.value->same_shape(m), "load_checkpoint: shape mismatch for " + name);
        *p.value = std::move(m);
        found = true;
        break;
      }
    if (!found) throw std::runtime_error("load_checkpoint: unknown parameter " + name);
  }
  return shell;
}

}  // namespace dalab
