#pragma once

#include <array>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "nirgnn/error.hpp"
#include "nirgnn/session_graph.hpp"

namespace nirgnn::ingest {

inline constexpr const char* unknown_token = "<unk>";

/// Dense string table. Index 0 is always UNKNOWN; the remaining entries are
/// assigned in sorted order so indices do not depend on input order.
class Vocab {
 public:
  Vocab() { names_.push_back(unknown_token); }

  static Vocab from(const std::set<std::string>& names) {
    Vocab v;
    for (const auto& n : names) {
      if (n == unknown_token) continue;
      v.index_.emplace(n, v.names_.size());
      v.names_.push_back(n);
    }
    return v;
  }

  static Vocab from_ordered(const std::vector<std::string>& names) {
    if (names.empty() || names[0] != unknown_token) throw IngestError("vocabulary must start with " + std::string(unknown_token));
    Vocab v;
    for (std::size_t i = 1; i < names.size(); ++i) {
      if (!v.index_.emplace(names[i], i).second) throw IngestError("duplicate vocabulary entry '" + names[i] + "'");
      v.names_.push_back(names[i]);
    }
    return v;
  }

  std::size_t size() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const std::vector<std::string>& names() const { return names_; }

  std::optional<std::size_t> find(const std::string& n) const {
    auto it = index_.find(n);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  std::size_t at(const std::string& n) const {
    if (auto i = find(n)) return *i;
    throw LookupError("unknown entry '" + n + "'");
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// One line of the catalog file.
struct CatalogRecord {
  std::string item;
  std::optional<std::vector<std::string>> taxonomy;
  std::optional<std::vector<std::string>> labels;
  std::vector<std::string> attributes;
};

using TaxonomyPath = std::array<std::string, 3>;

struct ItemCatalog {
  Vocab items;
  std::array<Vocab, 3> taxonomy;
  Vocab attributes;
  std::vector<std::array<std::size_t, 3>> paths;   // by item index; row 0 is UNKNOWN
  std::vector<std::vector<std::size_t>> tokens;    // attribute token indices by item index

  std::size_t size() const { return items.size(); }
  std::size_t item_count() const { return items.size() - 1; }

  ItemIndex index_of(const std::string& item) const {
    if (auto i = items.find(item)) return *i;
    throw LookupError("item '" + item + "' is not in the catalog");
  }
};

inline std::vector<CatalogRecord> parse_catalog(std::istream& in, const std::string& source = "<catalog>") {
  std::vector<CatalogRecord> out;
  std::set<std::string> seen;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string& why) {
    throw IngestError(source + ":" + std::to_string(lineno) + ": " + why);
  };
  auto strings = [&](const nlohmann::json& j, const char* field) {
    std::vector<std::string> v;
    if (!j.is_array()) fail(std::string("field '") + field + "' must be an array of strings");
    for (const auto& s : j) {
      if (!s.is_string()) fail(std::string("field '") + field + "' must be an array of strings");
      v.push_back(s.get<std::string>());
    }
    return v;
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      fail(std::string("malformed JSON (") + e.what() + ")");
    }
    if (!j.is_object() || !j.contains("item") || !j["item"].is_string()) fail("missing string field 'item'");
    CatalogRecord r;
    r.item = j["item"].get<std::string>();
    if (r.item == unknown_token) fail("item id '" + r.item + "' is reserved");
    if (!seen.insert(r.item).second) fail("duplicate item '" + r.item + "'");
    if (j.contains("taxonomy") && !j["taxonomy"].is_null()) {
      r.taxonomy = strings(j["taxonomy"], "taxonomy");
      if (r.taxonomy->size() > 3) fail("taxonomy has more than three levels");
    }
    if (j.contains("labels") && !j["labels"].is_null()) r.labels = strings(j["labels"], "labels");
    if (j.contains("attributes") && !j["attributes"].is_null()) r.attributes = strings(j["attributes"], "attributes");
    out.push_back(std::move(r));
  }
  return out;
}

inline std::vector<CatalogRecord> load_catalog_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open catalog file " + path);
  return parse_catalog(in, path);
}

/// Level keys are path-qualified so two items that share a level-3 node
/// always share its ancestors.
inline std::array<std::string, 3> qualified_levels(const TaxonomyPath& p) {
  return {p[0], p[0] + " > " + p[1], p[0] + " > " + p[1] + " > " + p[2]};
}

/// Builds vocabularies and per-item tables. Items without an explicit
/// taxonomy take their path from `derived` when present; missing levels
/// become UNKNOWN.
inline ItemCatalog build_catalog(const std::vector<CatalogRecord>& records,
                                 const std::map<std::string, TaxonomyPath>& derived = {}) {
  auto path_of = [&](const CatalogRecord& r) -> std::optional<TaxonomyPath> {
    if (r.taxonomy) {
      TaxonomyPath p{unknown_token, unknown_token, unknown_token};
      for (std::size_t l = 0; l < r.taxonomy->size(); ++l) p[l] = (*r.taxonomy)[l];
      return p;
    }
    if (auto it = derived.find(r.item); it != derived.end()) return it->second;
    return std::nullopt;
  };

  std::set<std::string> items, tokens;
  std::array<std::set<std::string>, 3> levels;
  for (const auto& r : records) {
    items.insert(r.item);
    tokens.insert(r.attributes.begin(), r.attributes.end());
    if (auto p = path_of(r)) {
      const auto q = qualified_levels(*p);
      for (std::size_t l = 0; l < 3; ++l) {
        if ((*p)[l] != unknown_token) levels[l].insert(q[l]);
      }
    }
  }
  ItemCatalog cat;
  cat.items = Vocab::from(items);
  for (std::size_t l = 0; l < 3; ++l) cat.taxonomy[l] = Vocab::from(levels[l]);
  cat.attributes = Vocab::from(tokens);
  cat.paths.assign(cat.items.size(), {0, 0, 0});
  cat.tokens.assign(cat.items.size(), {});
  for (const auto& r : records) {
    const ItemIndex idx = cat.items.at(r.item);
    if (auto p = path_of(r)) {
      const auto q = qualified_levels(*p);
      for (std::size_t l = 0; l < 3; ++l) {
        cat.paths[idx][l] = (*p)[l] == unknown_token ? 0 : cat.taxonomy[l].at(q[l]);
      }
    }
    for (const auto& t : r.attributes) cat.tokens[idx].push_back(cat.attributes.at(t));
  }
  return cat;
}

}  // namespace nirgnn::ingest
