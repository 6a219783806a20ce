#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nirgnn/autodiff.hpp"
#include "nirgnn/session_graph.hpp"

namespace nirgnn {

using TaxonomyIds = std::array<std::size_t, 3>;

struct GgnnParams {
  ad::Tensor H;  // d x 2d
  ad::Tensor b;  // 1 x d
  ad::Tensor Wz, Uz, Wr, Ur, Wo, Uo;  // d x d
  std::size_t steps = 1;

  std::size_t dim() const { return Wz.rows(); }
};

struct EmbeddingTables {
  ad::Tensor item_table;               // items x d, row 0 is UNKNOWN
  std::array<ad::Tensor, 3> tax;       // level sizes x d, row 0 is UNKNOWN
  ad::Tensor Wtax;                     // 3d x d
  ad::Tensor Wtax_b;                   // 1 x d
};

struct EncoderSizes {
  std::size_t items = 0;                 // including UNKNOWN
  std::array<std::size_t, 3> levels{};   // including UNKNOWN
  std::size_t d = 0;
  std::size_t steps = 1;
};

struct EncoderParams {
  EmbeddingTables tables;
  GgnnParams ggnn;

  /// Registers every encoder tensor in `store` with its checkpoint name.
  static EncoderParams create(ad::ParamStore& store, const EncoderSizes& s, std::uint64_t seed) {
    if (s.d == 0) throw ConfigError("embedding dimension must be positive");
    if (s.steps == 0) throw ConfigError("GGNN steps must be at least 1");
    const std::size_t d = s.d;
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    auto normal = [&](const std::string& name, ad::Shape shape) {
      return store.add(name, ad::init_normal(std::move(shape), 0.1, seed, name));
    };
    auto uniform = [&](const std::string& name, ad::Shape shape) {
      return store.add(name, ad::init_uniform(std::move(shape), bound, seed, name));
    };
    EncoderParams p;
    p.tables.item_table = normal("enc.item_table", {s.items, d});
    for (std::size_t l = 0; l < 3; ++l) p.tables.tax[l] = normal("enc.tax" + std::to_string(l + 1), {s.levels[l], d});
    p.tables.Wtax = uniform("enc.Wtax", {3 * d, d});
    p.tables.Wtax_b = uniform("enc.Wtax_b", {1, d});
    p.ggnn.H = uniform("enc.ggnn.H", {d, 2 * d});
    p.ggnn.b = uniform("enc.ggnn.b", {1, d});
    p.ggnn.Wz = uniform("enc.ggnn.Wz", {d, d});
    p.ggnn.Uz = uniform("enc.ggnn.Uz", {d, d});
    p.ggnn.Wr = uniform("enc.ggnn.Wr", {d, d});
    p.ggnn.Ur = uniform("enc.ggnn.Ur", {d, d});
    p.ggnn.Wo = uniform("enc.ggnn.Wo", {d, d});
    p.ggnn.Uo = uniform("enc.ggnn.Uo", {d, d});
    p.ggnn.steps = s.steps;
    return p;
  }
};

/// t_i = tanh((t_i1 ⊕ t_i2 ⊕ t_i3) W_tax + bias), one row per item.
inline ad::Tensor taxonomy_embed(const EmbeddingTables& tables, std::span<const TaxonomyIds> paths,
                                 std::span<const ItemIndex> items) {
  std::array<std::vector<std::size_t>, 3> ids;
  for (ItemIndex it : items) {
    if (it >= paths.size()) throw LookupError("item " + std::to_string(it) + " has no taxonomy path");
    for (std::size_t l = 0; l < 3; ++l) ids[l].push_back(paths[it][l]);
  }
  const ad::Tensor t1 = ad::gather_rows(tables.tax[0], ids[0]);
  const ad::Tensor t2 = ad::gather_rows(tables.tax[1], ids[1]);
  const ad::Tensor t3 = ad::gather_rows(tables.tax[2], ids[2]);
  return ad::tanh(ad::matmul(ad::concat(ad::concat(t1, t2), t3), tables.Wtax) + tables.Wtax_b);
}

/// Gated propagation over the session graph, `p.steps` rounds. Rows of
/// `init` follow graph node order. Messages: M = V H, split into an
/// outgoing half and an incoming half, a = A_out M_out + A_in M_in + b.
inline ad::Tensor ggnn_forward(const SessionGraph& g, const ad::Tensor& init, const GgnnParams& p) {
  const std::size_t n = g.size(), d = p.dim();
  if (init.rank() != 2 || init.rows() != n || init.cols() != d) {
    throw DimensionError("ggnn_forward: init is " + ad::shape_str(init.shape()) + ", graph has " +
                         std::to_string(n) + " nodes of width " + std::to_string(d));
  }
  if (p.H.rows() != d || p.H.cols() != 2 * d) throw DimensionError("ggnn_forward: H must be d x 2d");
  const ad::Tensor a_out = ad::Tensor::matrix(n, n, g.adj_out);
  const ad::Tensor a_in = ad::Tensor::matrix(n, n, g.adj_in);
  ad::Tensor v = init;
  for (std::size_t t = 0; t < p.steps; ++t) {
    const ad::Tensor m = ad::matmul(v, p.H);
    const ad::Tensor a = ad::matmul(a_out, ad::slice_cols(m, 0, d)) + ad::matmul(a_in, ad::slice_cols(m, d, 2 * d)) + p.b;
    const ad::Tensor z = ad::sigmoid(ad::matmul(a, p.Wz) + ad::matmul(v, p.Uz));
    const ad::Tensor r = ad::sigmoid(ad::matmul(a, p.Wr) + ad::matmul(v, p.Ur));
    const ad::Tensor cand = ad::tanh(ad::matmul(a, p.Wo) + ad::matmul(r * v, p.Uo));
    v = (1.0 - z) * v + z * cand;
  }
  return v;
}

struct SessionEmbedding {
  ad::Tensor v;  // nodes x d
  ad::Tensor t;  // nodes x d
};

/// Node item embeddings through the GGNN and per-node taxonomy embeddings.
/// With `propagate_taxonomy` the taxonomy rows also pass through the GGNN.
/// Padding rows (beyond g.valid) come out as zeros.
inline SessionEmbedding embed_session(const SessionGraph& g, const EncoderParams& enc,
                                      std::span<const TaxonomyIds> paths, bool propagate_taxonomy = false) {
  const ad::Tensor init = ad::gather_rows(enc.tables.item_table, g.nodes);
  SessionEmbedding out;
  out.v = ggnn_forward(g, init, enc.ggnn);
  out.t = taxonomy_embed(enc.tables, paths, g.nodes);
  if (propagate_taxonomy) out.t = ggnn_forward(g, out.t, enc.ggnn);
  if (g.is_padded()) {
    std::vector<double> mask(g.size(), 0.0);
    std::fill_n(mask.begin(), g.valid, 1.0);
    const ad::Tensor m = ad::Tensor::matrix(g.size(), 1, mask);
    out.v = out.v * m;
    out.t = out.t * m;
  }
  return out;
}

}  // namespace nirgnn
