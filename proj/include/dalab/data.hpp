#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dalab/matrix.hpp"
#include "dalab/rng.hpp"

namespace dalab {

/// One training minibatch: labeled source rows plus unlabeled target rows.
struct LabeledBatch {
  Matrix xs;
  std::vector<int> ys;
  Matrix xt;
};

/// Labeled source set + unlabeled target set. Target labels are held out of
/// every training path by type separation — only evaluation code receives
/// them.
struct DomainPair {
  Matrix source_x;
  std::vector<int> source_y;
  Matrix target_x;
  std::vector<int> target_eval_labels;
  std::size_t K = 0;
  std::size_t dim = 0;

  std::size_t n_source() const { return source_x.rows(); }
  std::size_t n_target() const { return target_x.rows(); }

  void validate() const {
    check_arg(K >= 2, "DomainPair: K must be >= 2");
    check_arg(source_x.cols() == dim && target_x.cols() == dim, "DomainPair: feature dim mismatch");
    check_arg(source_y.size() == n_source(), "DomainPair: source label count mismatch");
    check_arg(target_eval_labels.size() == n_target(), "DomainPair: target label count mismatch");
    std::set<int> ls(source_y.begin(), source_y.end());
    std::set<int> lt(target_eval_labels.begin(), target_eval_labels.end());
    for (int y : ls) check_arg(y >= 0 && y < static_cast<int>(K), "DomainPair: source label out of range");
    for (int y : lt) check_arg(y >= 0 && y < static_cast<int>(K), "DomainPair: target label out of range");
    check_arg(ls == lt, "DomainPair: domain label sets differ (closed-set UDA)");
  }
};

/// Controllable domain gap: the target draw is rotated (first two axes,
/// about the generator's construction centroid), scaled per axis, translated,
/// and optionally jittered with extra noise.
struct ShiftSpec {
  double rotation_deg = 0.0;
  std::vector<double> translation;  // empty = zeros
  std::vector<double> scale;        // empty = ones
  double noise_std = 0.0;

  void validate(std::size_t d) const {
    check_arg(noise_std >= 0.0, "ShiftSpec: noise std must be >= 0");
    check_arg(translation.empty() || translation.size() == d, "ShiftSpec: translation length != dim");
    check_arg(scale.empty() || scale.size() == d, "ShiftSpec: scale length != dim");
    for (double s : scale) check_arg(s > 0.0, "ShiftSpec: scale must be positive");
  }
};

inline void apply_shift(Matrix& x, const ShiftSpec& spec, const std::vector<double>& centroid,
                        Rng& rng) {
  const std::size_t d = x.cols();
  spec.validate(d);
  const double th = spec.rotation_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(th), st = std::sin(th);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      const double s = spec.scale.empty() ? 1.0 : spec.scale[j];
      x(i, j) = s * (x(i, j) - centroid[j]);
    }
    if (d >= 2) {
      const double a = x(i, 0), b = x(i, 1);
      x(i, 0) = ct * a - st * b;
      x(i, 1) = st * a + ct * b;
    }
    for (std::size_t j = 0; j < d; ++j) {
      x(i, j) += centroid[j] + (spec.translation.empty() ? 0.0 : spec.translation[j]);
      if (spec.noise_std > 0.0) x(i, j) += rng.normal(0.0, spec.noise_std);
    }
  }
}

namespace detail {
// Standard two-moons construction; its analytic centroid is (0.5, 0.25) and
// a 180-degree rotation about that point swaps the two classes exactly.
inline void sample_moons(std::size_t n, double noise, Rng& rng, Matrix& x, std::vector<int>& y) {
  x = Matrix(n, 2);
  y.resize(n);
  const std::size_t n0 = n / 2;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = rng.uniform(0.0, std::numbers::pi);
    double px, py;
    if (i < n0) {
      px = std::cos(t);
      py = std::sin(t);
      y[i] = 0;
    } else {
      px = 1.0 - std::cos(t);
      py = 0.5 - std::sin(t);
      y[i] = 1;
    }
    x(i, 0) = px + (noise > 0.0 ? rng.normal(0.0, noise) : 0.0);
    x(i, 1) = py + (noise > 0.0 ? rng.normal(0.0, noise) : 0.0);
  }
}
}  // namespace detail

/// Two-moons pair: both domains draw from the same construction with the
/// given jitter noise; the target draw is then transformed by the shift.
inline DomainPair gen_two_moons(std::size_t n_per_domain, double noise, const ShiftSpec& shift,
                                std::uint64_t seed) {
  check_arg(n_per_domain >= 2, "gen_two_moons: need n >= 2");
  check_arg(noise >= 0.0, "gen_two_moons: noise must be >= 0");
  DomainPair pair;
  pair.K = 2;
  pair.dim = 2;
  Rng rs(derive_seed(seed, "moons-source"));
  Rng rt(derive_seed(seed, "moons-target"));
  detail::sample_moons(n_per_domain, noise, rs, pair.source_x, pair.source_y);
  detail::sample_moons(n_per_domain, noise, rt, pair.target_x, pair.target_eval_labels);
  apply_shift(pair.target_x, shift, {0.5, 0.25}, rt);
  pair.validate();
  return pair;
}

/// K class-conditional unit Gaussians with means placed deterministically on
/// a circle of radius class_sep in the first two axes (centroid: the origin).
inline DomainPair gen_gaussian_blobs(std::size_t K, std::size_t d, std::size_t n_per_domain,
                                     double class_sep, const ShiftSpec& shift, std::uint64_t seed) {
  check_arg(K >= 2 && d >= 2, "gen_gaussian_blobs: need K >= 2 and d >= 2");
  check_arg(n_per_domain >= K, "gen_gaussian_blobs: need n >= K");
  DomainPair pair;
  pair.K = K;
  pair.dim = d;
  auto sample_domain = [&](Rng& rng, Matrix& x, std::vector<int>& y) {
    x = Matrix(n_per_domain, d);
    y.resize(n_per_domain);
    for (std::size_t i = 0; i < n_per_domain; ++i) {
      const std::size_t k = i % K;  // balanced classes
      const double th = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(K);
      y[i] = static_cast<int>(k);
      for (std::size_t j = 0; j < d; ++j) {
        double mean = 0.0;
        if (j == 0) mean = class_sep * std::cos(th);
        if (j == 1) mean = class_sep * std::sin(th);
        x(i, j) = mean + rng.normal(0.0, 1.0);
      }
    }
  };
  Rng rs(derive_seed(seed, "blobs-source"));
  Rng rt(derive_seed(seed, "blobs-target"));
  sample_domain(rs, pair.source_x, pair.source_y);
  sample_domain(rt, pair.target_x, pair.target_eval_labels);
  apply_shift(pair.target_x, shift, std::vector<double>(d, 0.0), rt);
  pair.validate();
  return pair;
}

/// Analytic class mean of the blob generator (for distribution sanity tests).
inline double blob_mean(std::size_t K, double class_sep, std::size_t k, std::size_t j) {
  const double th = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(K);
  if (j == 0) return class_sep * std::cos(th);
  if (j == 1) return class_sep * std::sin(th);
  return 0.0;
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

/// CSV schema: header `f1,...,fd,label,domain`, one instance per row,
/// domain in {source, target}; target labels are evaluation-only.
inline void save_csv(const std::string& path, const DomainPair& pair) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open " + path);
  for (std::size_t j = 0; j < pair.dim; ++j) out << "f" << (j + 1) << ",";
  out << "label,domain\n";
  auto dump = [&](const Matrix& x, const std::vector<int>& y, const char* dom) {
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) out << fmt_double(x(i, j)) << ",";
      out << y[i] << "," << dom << "\n";
    }
  };
  dump(pair.source_x, pair.source_y, "source");
  dump(pair.target_x, pair.target_eval_labels, "target");
}

inline DomainPair load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("load_csv: empty file " + path);
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) header.push_back(tok);
  }
  check_arg(header.size() >= 3, "load_csv: header needs f1..fd,label,domain");
  const std::size_t d = header.size() - 2;
  for (std::size_t j = 0; j < d; ++j)
    check_arg(header[j] == "f" + std::to_string(j + 1), "load_csv: bad feature column name " + header[j]);
  check_arg(header[d] == "label", "load_csv: missing label column");
  check_arg(header[d + 1] == "domain", "load_csv: missing domain column");

  std::vector<std::vector<double>> sx, tx;
  std::vector<int> sy, ty;
  std::size_t line_no = 1;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<std::string> cells;
    while (std::getline(ss, tok, ',')) cells.push_back(tok);
    if (cells.size() != d + 2)
      throw std::runtime_error("load_csv: line " + std::to_string(line_no) + ": expected " +
                               std::to_string(d + 2) + " fields, got " + std::to_string(cells.size()));
    std::vector<double> row(d);
    try {
      for (std::size_t j = 0; j < d; ++j) row[j] = std::stod(cells[j]);
    } catch (const std::exception&) {
      throw std::runtime_error("load_csv: line " + std::to_string(line_no) + ": malformed number");
    }
    int label;
    try {
      std::size_t pos = 0;
      label = std::stoi(cells[d], &pos);
      if (pos != cells[d].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw std::runtime_error("load_csv: line " + std::to_string(line_no) + ": malformed label");
    }
    if (label < 0)
      throw std::runtime_error("load_csv: line " + std::to_string(line_no) + ": negative label");
    max_label = std::max(max_label, label);
    if (cells[d + 1] == "source") {
      sx.push_back(std::move(row));
      sy.push_back(label);
    } else if (cells[d + 1] == "target") {
      tx.push_back(std::move(row));
      ty.push_back(label);
    } else {
      throw std::runtime_error("load_csv: line " + std::to_string(line_no) + ": domain must be source or target");
    }
  }
  if (sx.empty()) throw std::invalid_argument("load_csv: no source rows");
  if (tx.empty()) throw std::invalid_argument("load_csv: no target rows");

  DomainPair pair;
  pair.K = static_cast<std::size_t>(max_label + 1);
  pair.dim = d;
  auto to_matrix = [&](const std::vector<std::vector<double>>& v) {
    Matrix m(v.size(), d);
    for (std::size_t i = 0; i < v.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) m(i, j) = v[i][j];
    return m;
  };
  pair.source_x = to_matrix(sx);
  pair.target_x = to_matrix(tx);
  pair.source_y = std::move(sy);
  pair.target_eval_labels = std::move(ty);
  pair.validate();
  return pair;
}

/// Zero-mean unit-variance transform fitted on SOURCE statistics only and
/// applied to both domains, so no target structure leaks into preprocessing.
struct Standardizer {
  std::vector<double> mean, std_dev;

  void apply(Matrix& x) const {
    check_arg(x.cols() == mean.size(), "Standardizer: dim mismatch");
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) = (x(i, j) - mean[j]) / std_dev[j];
  }
};

inline Standardizer fit_source_standardizer(const Matrix& source_x) {
  check_arg(source_x.rows() >= 1, "fit_source_standardizer: empty source");
  const std::size_t d = source_x.cols();
  Standardizer s;
  s.mean.assign(d, 0.0);
  s.std_dev.assign(d, 0.0);
  const double n = static_cast<double>(source_x.rows());
  for (std::size_t i = 0; i < source_x.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) s.mean[j] += source_x(i, j);
  for (double& m : s.mean) m /= n;
  for (std::size_t i = 0; i < source_x.rows(); ++i)
    for (std::size_t j = 0; j < d; ++j) {
      const double c = source_x(i, j) - s.mean[j];
      s.std_dev[j] += c * c;
    }
  for (double& v : s.std_dev) {
    v = std::sqrt(v / n);
    if (v < 1e-12) v = 1.0;  // constant feature
  }
  return s;
}

/// Seeded minibatch pairing: both domains are shuffled independently each
/// epoch, batches carry equal source/target counts, the ragged tail is
/// dropped.
class Batcher {
 public:
  Batcher(const DomainPair& pair, std::size_t batch_size, std::uint64_t seed)
      : pair_(&pair), batch_(batch_size), rng_(seed) {
    check_arg(batch_size > 0, "Batcher: batch size must be positive");
    check_arg(batch_size <= std::min(pair.n_source(), pair.n_target()),
              "Batcher: batch size exceeds a domain size");
    src_idx_.resize(pair.n_source());
    tgt_idx_.resize(pair.n_target());
    std::iota(src_idx_.begin(), src_idx_.end(), 0u);
    std::iota(tgt_idx_.begin(), tgt_idx_.end(), 0u);
  }

  std::size_t batches_per_epoch() const {
    return std::min(pair_->n_source() / batch_, pair_->n_target() / batch_);
  }

  std::vector<LabeledBatch> next_epoch() {
    rng_.shuffle(src_idx_);
    rng_.shuffle(tgt_idx_);
    std::vector<LabeledBatch> out;
    const std::size_t nb = batches_per_epoch();
    out.reserve(nb);
    for (std::size_t bi = 0; bi < nb; ++bi) {
      LabeledBatch b;
      b.xs = Matrix(batch_, pair_->dim);
      b.xt = Matrix(batch_, pair_->dim);
      b.ys.resize(batch_);
      for (std::size_t r = 0; r < batch_; ++r) {
        const std::size_t si = src_idx_[bi * batch_ + r];
        const std::size_t ti = tgt_idx_[bi * batch_ + r];
        for (std::size_t j = 0; j < pair_->dim; ++j) {
          b.xs(r, j) = pair_->source_x(si, j);
          b.xt(r, j) = pair_->target_x(ti, j);
        }
        b.ys[r] = pair_->source_y[si];
      }
      out.push_back(std::move(b));
    }
    return out;
  }

 private:
  const DomainPair* pair_;
  std::size_t batch_;
  Rng rng_;
  std::vector<std::size_t> src_idx_, tgt_idx_;
};

}  // namespace dalab
