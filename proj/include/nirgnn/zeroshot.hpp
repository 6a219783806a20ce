#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nirgnn/autodiff.hpp"
#include "nirgnn/ingest/attributes.hpp"

namespace nirgnn {

inline constexpr double bc_epsilon = 1e-12;

/// One-hidden-layer map from attribute space (d_a) to item space (d).
struct ThetaParams {
  ad::Tensor h_w;  // d_a x h
  ad::Tensor h_b;  // 1 x h
  ad::Tensor o_w;  // h x d
  ad::Tensor o_b;  // 1 x d

  static ThetaParams create(ad::ParamStore& store, std::size_t d_a, std::size_t h, std::size_t d, std::uint64_t seed) {
    if (d_a == 0 || h == 0 || d == 0) throw ConfigError("theta dimensions must be positive");
    ThetaParams p;
    const double bh = 1.0 / std::sqrt(static_cast<double>(d_a));
    const double bo = 1.0 / std::sqrt(static_cast<double>(h));
    p.h_w = store.add("zeroshot.theta.h_w", ad::init_uniform({d_a, h}, bh, seed, "zeroshot.theta.h_w"));
    p.h_b = store.add("zeroshot.theta.h_b", ad::init_uniform({1, h}, bh, seed, "zeroshot.theta.h_b"));
    p.o_w = store.add("zeroshot.theta.o_w", ad::init_uniform({h, d}, bo, seed, "zeroshot.theta.o_w"));
    p.o_b = store.add("zeroshot.theta.o_b", ad::init_uniform({1, d}, bo, seed, "zeroshot.theta.o_b"));
    return p;
  }

  std::size_t input_dim() const { return h_w.rows(); }
  std::size_t output_dim() const { return o_w.cols(); }
};

/// v* = tanh(atr h_w + h_b) o_w + o_b, row-wise.
inline ad::Tensor theta(const ThetaParams& p, const ad::Tensor& atr) {
  if (atr.cols() != p.input_dim()) {
    throw DimensionError("theta: input width " + std::to_string(atr.cols()) + ", expected " +
                         std::to_string(p.input_dim()));
  }
  return ad::matmul(ad::tanh(ad::matmul(atr, p.h_w) + p.h_b), p.o_w) + p.o_b;
}

/// Row-wise Bhattacharyya distance between softmax(v) and softmax(w):
/// -log(sum_j sqrt(p_j q_j)), or 0 when the coefficient is below bc_epsilon.
/// Returns rows x 1.
inline ad::Tensor bhattacharyya_rows(const ad::Tensor& v, const ad::Tensor& w) {
  if (v.shape() != w.shape()) {
    throw DimensionError("bhattacharyya: " + ad::shape_str(v.shape()) + " vs " + ad::shape_str(w.shape()));
  }
  const ad::Tensor rho = ad::sum(ad::exp(0.5 * (ad::log_softmax(v) + ad::log_softmax(w))), 1);
  return ad::neg_log_clamped(rho, bc_epsilon);
}

/// Scalar distance for one pair of vectors.
inline ad::Tensor bhattacharyya(const ad::Tensor& v, const ad::Tensor& w) {
  if (v.rows() != 1) throw DimensionError("bhattacharyya: expected single vectors");
  return ad::sum(bhattacharyya_rows(v, w));
}

/// Plain-number coefficient, for diagnostics and tests.
inline double bhattacharyya_coefficient(std::span<const double> v, std::span<const double> w) {
  if (v.size() != w.size()) throw DimensionError("bhattacharyya_coefficient: unequal lengths");
  auto lse = [](std::span<const double> x) {
    double m = x[0];
    for (double e : x) m = std::max(m, e);
    double s = 0.0;
    for (double e : x) s += std::exp(e - m);
    return m + std::log(s);
  };
  const double lv = lse(v), lw = lse(w);
  double rho = 0.0;
  for (std::size_t j = 0; j < v.size(); ++j) rho += std::exp(0.5 * ((v[j] - lv) + (w[j] - lw)));
  return rho;
}

/// Sum of per-node distances between node embeddings and theta(attributes).
inline ad::Tensor l_zero(const ad::Tensor& v, const ad::Tensor& atr, const ThetaParams& p) {
  return ad::sum(bhattacharyya_rows(v, theta(p, atr)));
}

/// Attribute source for zero-shot inference: the token table (trainable
/// parameter or frozen constant) plus the item -> token layout.
struct AttributeEncoder {
  const ingest::AttributeTable* layout = nullptr;
  ad::Tensor tokens;  // rows x d_a

  /// Mean token embedding per item, rows in the order of `items`.
  ad::Tensor embed(std::span<const ItemIndex> items) const {
    for (ItemIndex i : items) {
      if (i >= layout->item_tokens.size()) throw LookupError("item " + std::to_string(i) + " has no attribute entry");
    }
    std::vector<std::size_t> offsets, members;
    layout->segments(items, offsets, members);
    return ad::segment_mean(tokens, offsets, members, 0);
  }
};

/// Inferred item-space embeddings c_i = theta(atr_i). Never reads the item
/// embedding table.
inline ad::Tensor infer_items(const AttributeEncoder& attrs, const ThetaParams& p, std::span<const ItemIndex> items) {
  return theta(p, attrs.embed(items));
}

inline ad::Tensor infer_new_item(const AttributeEncoder& attrs, const ThetaParams& p, ItemIndex item) {
  const ItemIndex one[1] = {item};
  return infer_items(attrs, p, one);
}

}  // namespace nirgnn
