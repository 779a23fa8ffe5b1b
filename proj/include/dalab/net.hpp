#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "dalab/matrix.hpp"
#include "dalab/rng.hpp"

namespace dalab {

enum class Activation { relu, tanh_act, identity };

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh_act;
  if (s == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation: " + s);
}

inline std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh_act: return "tanh";
    default: return "identity";
  }
}

/// One affine map: X (n x in) -> X*W + b (n x out). W is in x out, b is 1 x out.
struct AffineLayer {
  Matrix W;
  Matrix b;

  std::size_t in_dim() const { return W.rows(); }
  std::size_t out_dim() const { return W.cols(); }
};

inline AffineLayer make_affine(std::size_t in, std::size_t out, Rng& rng) {
  AffineLayer l{Matrix(in, out), Matrix(1, out)};
  const double scale = 1.0 / std::sqrt(static_cast<double>(in));
  for (double& w : l.W.data()) w = rng.normal(0.0, scale);
  return l;
}

inline Matrix affine_forward(const AffineLayer& l, const Matrix& x) {
  check_arg(x.cols() == l.in_dim(), "affine_forward: input width mismatch");
  Matrix z = matmul(x, l.W);
  for (std::size_t i = 0; i < z.rows(); ++i)
    for (std::size_t j = 0; j < z.cols(); ++j) z(i, j) += l.b(0, j);
  return z;
}

/// Accumulates dW/db for one affine layer and returns dX.
inline Matrix affine_backward(const AffineLayer& l, const Matrix& x, const Matrix& dz,
                              Matrix* dW, Matrix* db) {
  if (dW) add_scaled(*dW, 1.0, matmul_at_b(x, dz));
  if (db) add_scaled(*db, 1.0, col_sums(dz));
  return matmul_a_bt(dz, l.W);
}

enum class Group { extractor, classifier };

/// Named, grouped view over a model's parameter matrices. Order is fixed by
/// the owning model and shared with GradSet / OptimizerState by index.
struct ParamRef {
  std::string name;
  Group group;
  Matrix* value;
};

class ParamSet {
 public:
  void add(std::string name, Group g, Matrix* m) { refs_.push_back({std::move(name), g, m}); }
  std::size_t size() const { return refs_.size(); }
  ParamRef& operator[](std::size_t i) { return refs_[i]; }
  const ParamRef& operator[](std::size_t i) const { return refs_[i]; }
  auto begin() { return refs_.begin(); }
  auto end() { return refs_.end(); }
  auto begin() const { return refs_.begin(); }
  auto end() const { return refs_.end(); }

 private:
  std::vector<ParamRef> refs_;
};

/// One gradient matrix per ParamSet entry, shape-congruent, zeroed between steps.
struct GradSet {
  std::vector<Matrix> g;

  void init_like(const ParamSet& ps) {
    g.clear();
    for (const auto& r : ps) g.emplace_back(r.value->rows(), r.value->cols());
  }
  void zero() {
    for (auto& m : g) m.fill(0.0);
  }
};

/// Per-layer activations retained by Mlp::forward for exact backprop.
struct MlpCache {
  Matrix input;
  std::vector<Matrix> pre;   // pre-activation per layer
  std::vector<Matrix> post;  // post-activation per layer
};

/// Small fully-connected stack; the activation follows every layer.
struct Mlp {
  std::vector<AffineLayer> layers;
  Activation act = Activation::relu;

  std::size_t input_dim() const { return layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.back().out_dim(); }

  Matrix forward(const Matrix& x, MlpCache* cache) const {
    check_arg(!layers.empty(), "Mlp::forward: no layers");
    check_arg(x.cols() == input_dim(), "Mlp::forward: input width mismatch");
    if (cache) {
      cache->input = x;
      cache->pre.clear();
      cache->post.clear();
    }
    Matrix h = x;
    for (const auto& l : layers) {
      Matrix z = affine_forward(l, h);
      Matrix a = z;
      apply_activation(a);
      if (cache) {
        cache->pre.push_back(z);
        cache->post.push_back(a);
      }
      h = std::move(a);
    }
    ensure_finite(h, "Mlp::forward output");
    return h;
  }

  /// Accumulates layer gradients into grads (2 slots per layer: W then b,
  /// any of which may be null) and returns the gradient wrt the input.
  Matrix backward(const Matrix& d_out, const MlpCache& cache, std::span<Matrix*> grads) const {
    check_arg(cache.pre.size() == layers.size(), "Mlp::backward: stale cache");
    check_arg(grads.empty() || grads.size() == 2 * layers.size(),
              "Mlp::backward: grads slot count mismatch");
    Matrix d = d_out;
    for (std::size_t li = layers.size(); li-- > 0;) {
      // through activation
      const Matrix& z = cache.pre[li];
      check_arg(d.same_shape(z), "Mlp::backward: gradient shape mismatch");
      for (std::size_t i = 0; i < d.size(); ++i)
        d.data()[i] *= activation_derivative(z.data()[i], cache.post[li].data()[i]);
      const Matrix& x = li == 0 ? cache.input : cache.post[li - 1];
      Matrix* dW = grads.empty() ? nullptr : grads[2 * li];
      Matrix* db = grads.empty() ? nullptr : grads[2 * li + 1];
      d = affine_backward(layers[li], x, d, dW, db);
    }
    return d;
  }

 private:
  void apply_activation(Matrix& a) const {
    switch (act) {
      case Activation::relu:
        for (double& v : a.data()) v = v > 0.0 ? v : 0.0;
        break;
      case Activation::tanh_act:
        for (double& v : a.data()) v = std::tanh(v);
        break;
      case Activation::identity:
        break;
    }
  }
  double activation_derivative(double pre, double post) const {
    switch (act) {
      case Activation::relu: return pre > 0.0 ? 1.0 : 0.0;
      case Activation::tanh_act: return 1.0 - post * post;
      default: return 1.0;
    }
  }
};

/// widths = hidden layer sizes; returns input -> widths[0] -> ... -> widths.back().
inline Mlp make_mlp(std::size_t input_dim, const std::vector<std::size_t>& widths,
                    Activation act, Rng& rng) {
  check_arg(!widths.empty(), "make_mlp: need at least one layer");
  Mlp m;
  m.act = act;
  std::size_t in = input_dim;
  for (std::size_t w : widths) {
    m.layers.push_back(make_affine(in, w, rng));
    in = w;
  }
  return m;
}

}  // namespace dalab
