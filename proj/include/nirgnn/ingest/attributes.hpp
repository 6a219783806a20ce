#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nirgnn/autodiff/params.hpp"
#include "nirgnn/ingest/catalog.hpp"

namespace nirgnn::ingest {

enum class AttributeMode { trainable, pretrained };

inline const char* to_string(AttributeMode m) { return m == AttributeMode::trainable ? "trainable" : "pretrained"; }

struct PretrainedVectors {
  std::size_t dim = 0;
  std::map<std::string, std::vector<double>> vectors;
};

/// Reads "token v1 v2 ... v_d" lines. Every line must have the same width.
inline PretrainedVectors parse_vector_file(std::istream& in, const std::string& source = "<vectors>") {
  PretrainedVectors pv;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string token;
    if (!(ls >> token)) continue;
    std::vector<double> v;
    std::string field;
    while (ls >> field) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(field, &used));
        if (used != field.size()) throw std::invalid_argument(field);
      } catch (const std::exception&) {
        throw IngestError(source + ":" + std::to_string(lineno) + ": bad number '" + field + "'");
      }
    }
    if (v.empty()) throw IngestError(source + ":" + std::to_string(lineno) + ": token without a vector");
    if (pv.dim == 0) pv.dim = v.size();
    if (v.size() != pv.dim) {
      throw IngestError(source + ":" + std::to_string(lineno) + ": vector has " + std::to_string(v.size()) +
                        " dimensions, expected " + std::to_string(pv.dim));
    }
    pv.vectors[token] = std::move(v);
  }
  return pv;
}

inline PretrainedVectors load_vector_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open vector file " + path);
  return parse_vector_file(in, path);
}

struct CoverageReport {
  std::size_t tokens = 0;          // distinct attribute tokens in the catalog
  std::size_t covered = 0;         // of which have a vector
  std::vector<std::string> unknown_items;  // items whose attributes all map to UNKNOWN

  double ratio() const { return tokens == 0 ? 1.0 : static_cast<double>(covered) / static_cast<double>(tokens); }
};

/// Attribute embedding source. Row 0 of the token table is UNKNOWN; an
/// item's attribute embedding is the mean of its token rows, or the UNKNOWN
/// row when it has none.
struct AttributeTable {
  AttributeMode mode = AttributeMode::trainable;
  std::size_t dim = 0;
  std::size_t rows = 0;                         // token vocabulary size
  std::vector<double> frozen;                   // rows x dim, pretrained mode only
  std::vector<std::vector<std::size_t>> item_tokens;  // effective token rows per item index
  CoverageReport coverage;

  /// Offsets/members layout for segment_mean over `items`.
  void segments(std::span<const ItemIndex> items, std::vector<std::size_t>& offsets,
                std::vector<std::size_t>& members) const {
    offsets.assign(1, 0);
    members.clear();
    for (ItemIndex i : items) {
      const auto& t = item_tokens.at(i);
      members.insert(members.end(), t.begin(), t.end());
      offsets.push_back(members.size());
    }
  }
};

/// Sets up the attribute encoder for a catalog. Trainable mode leaves the
/// token table to the model; pretrained mode freezes vectors from `vectors`,
/// requiring at least `min_coverage` of the tokens to be present.
inline AttributeTable encode_attributes(const ItemCatalog& catalog, AttributeMode mode, std::size_t dim,
                                        const PretrainedVectors* vectors = nullptr,
                                        double min_coverage = 0.95) {
  AttributeTable t;
  t.mode = mode;
  t.rows = catalog.attributes.size();
  t.coverage.tokens = catalog.attributes.size() - 1;
  t.item_tokens.assign(catalog.size(), {});
  if (mode == AttributeMode::trainable) {
    if (dim == 0) throw ConfigError("attribute dimension must be positive");
    t.dim = dim;
    t.coverage.covered = t.coverage.tokens;
    for (std::size_t i = 1; i < catalog.size(); ++i) {
      t.item_tokens[i] = catalog.tokens[i];
      if (t.item_tokens[i].empty()) t.coverage.unknown_items.push_back(catalog.items.name(i));
    }
    return t;
  }
  if (!vectors) throw ConfigError("pretrained attribute mode needs a vector file");
  if (dim != 0 && vectors->dim != dim) {
    throw IngestError("vector file has dimension " + std::to_string(vectors->dim) + ", expected " +
                      std::to_string(dim));
  }
  t.dim = vectors->dim;
  t.frozen.assign(t.rows * t.dim, 0.0);
  std::vector<bool> known(t.rows, false);
  for (std::size_t k = 1; k < t.rows; ++k) {
    auto it = vectors->vectors.find(catalog.attributes.name(k));
    if (it == vectors->vectors.end()) continue;
    known[k] = true;
    ++t.coverage.covered;
    std::copy(it->second.begin(), it->second.end(), t.frozen.begin() + static_cast<std::ptrdiff_t>(k * t.dim));
  }
  if (t.coverage.ratio() < min_coverage) {
    throw IngestError("vector file covers " + std::to_string(t.coverage.covered) + " of " +
                      std::to_string(t.coverage.tokens) + " attribute tokens, below the required " +
                      std::to_string(min_coverage));
  }
  for (std::size_t i = 1; i < catalog.size(); ++i) {
    for (auto k : catalog.tokens[i]) {
      if (known[k]) t.item_tokens[i].push_back(k);
    }
    if (t.item_tokens[i].empty()) t.coverage.unknown_items.push_back(catalog.items.name(i));
  }
  return t;
}

/// Initial token table: the frozen vectors, or the seeded normal(0, 0.1)
/// initialization the model uses for a trainable table.
inline ad::Tensor initial_token_table(const AttributeTable& t, std::uint64_t seed) {
  if (t.mode == AttributeMode::pretrained) return ad::Tensor::matrix(t.rows, t.dim, t.frozen);
  return ad::init_normal({t.rows, t.dim}, 0.1, seed, "attr.tokens");
}

/// Per-item attribute embeddings (plain numbers) from a token table.
inline std::map<std::string, std::vector<double>> item_attribute_vectors(const ItemCatalog& catalog,
                                                                         const AttributeTable& t,
                                                                         const ad::Tensor& table) {
  std::map<std::string, std::vector<double>> out;
  for (std::size_t i = 1; i < catalog.size(); ++i) {
    std::vector<double> v(t.dim, 0.0);
    const auto& toks = t.item_tokens[i];
    if (toks.empty()) {
      for (std::size_t j = 0; j < t.dim; ++j) v[j] = table.at(0, j);
    } else {
      for (auto k : toks)
        for (std::size_t j = 0; j < t.dim; ++j) v[j] += table.at(k, j);
      for (double& x : v) x /= static_cast<double>(toks.size());
    }
    out[catalog.items.name(i)] = std::move(v);
  }
  return out;
}

}  // namespace nirgnn::ingest
