#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nirgnn/error.hpp"

namespace nirgnn {

/// Dense catalog index of an item. Index 0 is the reserved UNKNOWN item.
using ItemIndex = std::size_t;

/// Directed session graph over deduplicated items.
///
/// `adj_out[i][j]` is count(i->j) / outdegree(i); `adj_in[j][i]` is
/// count(i->j) / indegree(j). Both are n x n row-major. A graph produced by
/// `batch_graphs` may carry trailing padding nodes; only the first
/// `valid` nodes are real.
struct SessionGraph {
  std::vector<ItemIndex> nodes;
  std::vector<double> adj_out;
  std::vector<double> adj_in;
  std::vector<ItemIndex> history;
  std::optional<ItemIndex> ground_truth;
  std::size_t last_node = 0;
  std::size_t valid = 0;

  std::size_t size() const { return nodes.size(); }
  double out(std::size_t i, std::size_t j) const { return adj_out[i * nodes.size() + j]; }
  double in(std::size_t i, std::size_t j) const { return adj_in[i * nodes.size() + j]; }
  bool is_padded() const { return valid < nodes.size(); }
};

template <class Item>
struct MaskedSession {
  std::vector<Item> history;
  Item ground_truth;
};

/// Takes the last item as the ground truth and removes every occurrence of
/// it from the sequence, keeping the remaining order. Returns nullopt (the
/// skip marker) when fewer than two items are given or nothing remains.
template <class Item>
std::optional<MaskedSession<Item>> mask_ground_truth(std::span<const Item> sequence) {
  if (sequence.size() < 2) return std::nullopt;
  MaskedSession<Item> out{{}, sequence.back()};
  for (const auto& it : sequence) {
    if (!(it == out.ground_truth)) out.history.push_back(it);
  }
  if (out.history.empty()) return std::nullopt;
  return out;
}

template <class Item>
std::optional<MaskedSession<Item>> mask_ground_truth(const std::vector<Item>& sequence) {
  return mask_ground_truth(std::span<const Item>(sequence));
}

/// Builds the session graph of a (masked) history. When `catalog_size` is
/// non-zero every item must lie in [1, catalog_size).
inline SessionGraph build_graph(std::span<const ItemIndex> history, std::size_t catalog_size = 0) {
  if (history.empty()) throw ProtocolError("cannot build a session graph from an empty history");
  SessionGraph g;
  g.history.assign(history.begin(), history.end());
  for (ItemIndex item : history) {
    if (catalog_size != 0 && (item == 0 || item >= catalog_size)) {
      throw IngestError("item index " + std::to_string(item) + " is not in the catalog");
    }
    if (std::find(g.nodes.begin(), g.nodes.end(), item) == g.nodes.end()) g.nodes.push_back(item);
  }
  const std::size_t n = g.nodes.size();
  auto pos = [&](ItemIndex item) {
    return static_cast<std::size_t>(std::find(g.nodes.begin(), g.nodes.end(), item) - g.nodes.begin());
  };
  std::vector<double> counts(n * n, 0.0);
  for (std::size_t k = 0; k + 1 < history.size(); ++k) counts[pos(history[k]) * n + pos(history[k + 1])] += 1.0;

  g.adj_out.assign(n * n, 0.0);
  g.adj_in.assign(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double outdeg = 0.0, indeg = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      outdeg += counts[i * n + j];
      indeg += counts[j * n + i];
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (outdeg > 0) g.adj_out[i * n + j] = counts[i * n + j] / outdeg;
      if (indeg > 0) g.adj_in[i * n + j] = counts[j * n + i] / indeg;
    }
  }
  g.last_node = pos(history.back());
  g.valid = n;
  return g;
}

inline SessionGraph build_graph(const std::vector<ItemIndex>& history, std::size_t catalog_size = 0) {
  return build_graph(std::span<const ItemIndex>(history), catalog_size);
}

/// Zero-pads every graph to `pad_to` nodes. Padding nodes use item 0 and
/// have empty adjacency rows and columns.
inline std::vector<SessionGraph> batch_graphs(std::span<const SessionGraph> graphs, std::size_t pad_to) {
  std::vector<SessionGraph> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs) {
    const std::size_t n = g.valid;
    if (n > pad_to) {
      throw ConfigError("graph with " + std::to_string(n) + " nodes exceeds padding size " +
                        std::to_string(pad_to));
    }
    SessionGraph p;
    p.history = g.history;
    p.ground_truth = g.ground_truth;
    p.last_node = g.last_node;
    p.valid = n;
    p.nodes.assign(pad_to, 0);
    std::copy_n(g.nodes.begin(), n, p.nodes.begin());
    p.adj_out.assign(pad_to * pad_to, 0.0);
    p.adj_in.assign(pad_to * pad_to, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        p.adj_out[i * pad_to + j] = g.out(i, j);
        p.adj_in[i * pad_to + j] = g.in(i, j);
      }
    }
    out.push_back(std::move(p));
  }
  return out;
}

/// Validity mask of a (possibly padded) graph.
inline std::vector<bool> node_mask(const SessionGraph& g) {
  std::vector<bool> m(g.size(), false);
  std::fill_n(m.begin(), g.valid, true);
  return m;
}

}  // namespace nirgnn
