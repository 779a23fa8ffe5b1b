#pragma once

#include <string>
#include <vector>

#include "dalab/net.hpp"
#include "dalab/prob_ops.hpp"

namespace dalab {

/// Joint domain-category classifier: extractor G followed by a single
/// affine layer producing 2K logits. The source task head is the first K
/// logits and the target task head the last K; they are stored as the two
/// column slices head_src / head_tgt of that one layer, so the views share
/// parameters by construction.
struct JointModel {
  Mlp extractor;
  AffineLayer head_src;  // feature_dim -> K
  AffineLayer head_tgt;  // feature_dim -> K
  std::size_t K = 0;

  std::size_t input_dim() const { return extractor.input_dim(); }
  std::size_t feature_dim() const { return extractor.output_dim(); }

  struct Fwd {
    MlpCache cache;
    Matrix features;  // n x feature_dim
    Matrix logits;    // n x 2K
  };

  Fwd forward(const Matrix& x) const {
    Fwd f;
    f.features = extractor.forward(x, &f.cache);
    const Matrix zs = affine_forward(head_src, f.features);
    const Matrix zt = affine_forward(head_tgt, f.features);
    f.logits = Matrix(x.rows(), 2 * K);
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t k = 0; k < K; ++k) {
        f.logits(i, k) = zs(i, k);
        f.logits(i, k + K) = zt(i, k);
      }
    ensure_finite(f.logits, "JointModel logits");
    return f;
  }

  /// Canonical parameter order: G layers (W, b each), then head_src W/b,
  /// then head_tgt W/b. GradSet/OptimizerState indices follow this order.
  ParamSet params() {
    ParamSet ps;
    for (std::size_t li = 0; li < extractor.layers.size(); ++li) {
      ps.add("G." + std::to_string(li) + ".W", Group::extractor, &extractor.layers[li].W);
      ps.add("G." + std::to_string(li) + ".b", Group::extractor, &extractor.layers[li].b);
    }
    ps.add("F.src.W", Group::classifier, &head_src.W);
    ps.add("F.src.b", Group::classifier, &head_src.b);
    ps.add("F.tgt.W", Group::classifier, &head_tgt.W);
    ps.add("F.tgt.b", Group::classifier, &head_tgt.b);
    return ps;
  }

  /// Backpropagates dLogits (n x 2K) into grads (congruent with params()),
  /// accumulating only into the requested groups. Head gradients are skipped
  /// when into_classifier is false; extractor gradients are skipped (and the
  /// walk stops at the features) when into_extractor is false.
  void backward(const Fwd& f, const Matrix& dlogits, GradSet& grads, bool into_extractor,
                bool into_classifier) const {
    check_arg(dlogits.rows() == f.logits.rows() && dlogits.cols() == 2 * K,
              "JointModel::backward: dlogits shape");
    const std::size_t n = dlogits.rows();
    Matrix dzs(n, K), dzt(n, K);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < K; ++k) {
        dzs(i, k) = dlogits(i, k);
        dzt(i, k) = dlogits(i, k + K);
      }
    const std::size_t ng = 2 * extractor.layers.size();
    Matrix* dWs = into_classifier ? &grads.g[ng + 0] : nullptr;
    Matrix* dbs = into_classifier ? &grads.g[ng + 1] : nullptr;
    Matrix* dWt = into_classifier ? &grads.g[ng + 2] : nullptr;
    Matrix* dbt = into_classifier ? &grads.g[ng + 3] : nullptr;
    Matrix dfeat = affine_backward(head_src, f.features, dzs, dWs, dbs);
    add_scaled(dfeat, 1.0, affine_backward(head_tgt, f.features, dzt, dWt, dbt));
    if (into_extractor) {
      std::vector<Matrix*> slots;
      for (std::size_t i = 0; i < ng; ++i) slots.push_back(&grads.g[i]);
      extractor.backward(dfeat, f.cache, slots);
    }
  }

  ProbBatch prob_views(const Matrix& x) const { return prob_views_from_logits(forward(x).logits, K); }
};

inline JointModel make_joint_model(std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                   std::size_t K, Activation act, Rng& rng) {
  check_arg(K >= 1, "make_joint_model: K must be >= 1");
  JointModel m;
  m.extractor = make_mlp(input_dim, hidden, act, rng);
  m.head_src = make_affine(m.extractor.output_dim(), K, rng);
  m.head_tgt = make_affine(m.extractor.output_dim(), K, rng);
  m.K = K;
  return m;
}

enum class Head { source_head, target_head, joint };

struct Prediction {
  int label = 0;          // category index in 0..K-1
  double confidence = 0;  // max probability of the designated view
  Head head = Head::target_head;
};

/// Deterministic argmax with ties broken toward the lowest index. The joint
/// head reduces its 2K argmax to a category via mod K.
inline std::vector<Prediction> predict(const ProbBatch& pb, Head head) {
  std::vector<Prediction> out(pb.size());
  for (std::size_t i = 0; i < pb.size(); ++i) {
    const Matrix& v = head == Head::joint ? pb.p : pb.view(head == Head::source_head ? Block::first : Block::second);
    std::size_t best = 0;
    for (std::size_t j = 1; j < v.cols(); ++j)
      if (v(i, j) > v(i, best)) best = j;
    out[i] = {static_cast<int>(best % pb.K), v(i, best), head};
  }
  return out;
}

inline std::vector<Prediction> predict(const JointModel& m, const Matrix& x, Head head) {
  return predict(m.prob_views(x), head);
}

/// G(x) rows, no side effects; feeds feature export and TDSR.
inline Matrix export_features(const JointModel& m, const Matrix& x) {
  MlpCache cache;
  return m.extractor.forward(x, &cache);
}

}  // namespace dalab
