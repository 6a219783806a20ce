#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "nirgnn/autodiff/container.hpp"
#include "nirgnn/ingest/attributes.hpp"
#include "nirgnn/ingest/catalog.hpp"
#include "nirgnn/ingest/sessions.hpp"
#include "nirgnn/ingest/split.hpp"
#include "nirgnn/ingest/taxonomy.hpp"
#include "nirgnn/session_graph.hpp"

namespace nirgnn::ingest {

/// A masked session ready for the model.
struct Example {
  std::string session_id;
  std::vector<ItemIndex> history;
  ItemIndex ground_truth = 0;
  std::int64_t ts = 0;
  std::size_t length = 0;  // events before masking
};

struct PrepareOptions {
  int boundary_days = 7;
  std::array<std::size_t, 3> level_sizes{100, 50, 10};
  AttributeMode attr_mode = AttributeMode::trainable;
  std::size_t d_a = 32;
  double min_coverage = 0.95;
  std::uint64_t seed = 42;
};

struct PrepareStats {
  std::size_t items = 0;
  std::size_t train_sessions = 0;
  std::size_t test_sessions = 0;
  double average_length = 0.0;
  std::size_t skipped = 0;   // sessions whose masked history was empty
  std::size_t resorted = 0;  // sessions auto-sorted by timestamp
  bool taxonomy_clustered = false;
};

struct Dataset {
  ItemCatalog catalog;
  AttributeTable attributes;
  std::vector<Example> train;
  std::vector<Example> test;
  std::int64_t boundary = 0;
  PrepareStats stats;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::string> label_words(const std::string& label) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : label) {
    if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-') {
      cur.push_back(ch);
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

/// Runs the ingestion pipeline: optional taxonomy synthesis, catalog
/// vocabularies, attribute encoder setup, ground-truth masking and the
/// time split. Examples on each side are ordered by session id.
inline Dataset prepare_dataset(const SessionLog& log, const std::vector<CatalogRecord>& records,
                               const PrepareOptions& opt, const PretrainedVectors* attr_vectors = nullptr,
                               const PretrainedVectors* label_vectors = nullptr) {
  Dataset ds;

  // Attribute setup needs a catalog; build a provisional one to get the
  // token vocabulary, which does not depend on taxonomy.
  ItemCatalog provisional = build_catalog(records);
  AttributeTable attrs = encode_attributes(provisional, opt.attr_mode, opt.attr_mode == AttributeMode::trainable ? opt.d_a : 0,
                                           attr_vectors, opt.min_coverage);

  std::map<std::string, std::vector<std::string>> flat;
  for (const auto& r : records) {
    if (!r.taxonomy && r.labels && !r.labels->empty()) flat[r.item] = *r.labels;
  }
  std::map<std::string, TaxonomyPath> derived;
  if (!flat.empty()) {
    const ad::Tensor table = initial_token_table(attrs, opt.seed);
    const auto item_vecs = item_attribute_vectors(provisional, attrs, table);
    auto vecs = label_vectors_from_items(flat, item_vecs);
    if (label_vectors) {
      // Explicit label vectors win; multi-word labels average their words.
      for (auto& [label, v] : vecs) {
        if (auto it = label_vectors->vectors.find(label); it != label_vectors->vectors.end()) {
          v = it->second;
          continue;
        }
        std::vector<double> acc;
        std::size_t n = 0;
        for (const auto& w : detail::label_words(label)) {
          auto wt = label_vectors->vectors.find(w);
          if (wt == label_vectors->vectors.end()) continue;
          if (acc.empty()) acc.assign(wt->second.size(), 0.0);
          for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += wt->second[j];
          ++n;
        }
        if (n > 0) {
          for (double& x : acc) x /= static_cast<double>(n);
          v = std::move(acc);
        }
      }
      std::size_t dim = 0;
      for (const auto& [label, v] : vecs) {
        if (dim == 0) dim = v.size();
        if (v.size() != dim) throw IngestError("label vectors mix dimensions; label '" + label + "'");
      }
    }
    TaxonomyTree tree = build_taxonomy_tree(flat, vecs, opt.level_sizes, opt.seed);
    derived = std::move(tree.paths);
    ds.warnings.insert(ds.warnings.end(), tree.warnings.begin(), tree.warnings.end());
    ds.stats.taxonomy_clustered = true;
  }
  ds.catalog = build_catalog(records, derived);
  // Token vocabulary is identical between the two catalogs.
  ds.attributes = std::move(attrs);

  std::vector<Session> retained;
  std::map<std::string, MaskedSession<std::string>> masked;
  for (const auto& s : log.sessions) {
    const auto items = s.items();
    for (const auto& it : items) {
      if (!ds.catalog.items.find(it)) {
        throw IngestError("session '" + s.session_id + "' references item '" + it + "' absent from the catalog");
      }
    }
    auto m = mask_ground_truth(items);
    if (!m) {
      ++ds.stats.skipped;
      continue;
    }
    masked.emplace(s.session_id, std::move(*m));
    retained.push_back(s);
  }
  if (retained.empty()) throw IngestError("no session survives ground-truth masking");
  const DatasetSplit split = time_split(retained, opt.boundary_days);
  ds.boundary = split.boundary;

  auto to_examples = [&](const std::vector<Session>& side) {
    std::vector<Example> out;
    for (const auto& s : side) {
      const auto& m = masked.at(s.session_id);
      Example ex;
      ex.session_id = s.session_id;
      ex.ts = s.last_ts();
      ex.length = s.events.size();
      ex.ground_truth = ds.catalog.index_of(m.ground_truth);
      for (const auto& it : m.history) ex.history.push_back(ds.catalog.index_of(it));
      out.push_back(std::move(ex));
    }
    std::sort(out.begin(), out.end(), [](const Example& a, const Example& b) { return a.session_id < b.session_id; });
    return out;
  };
  ds.train = to_examples(split.train_sessions);
  ds.test = to_examples(split.test_sessions);

  ds.stats.items = ds.catalog.item_count();
  ds.stats.train_sessions = ds.train.size();
  ds.stats.test_sessions = ds.test.size();
  ds.stats.resorted = log.resorted;
  double total = 0.0;
  for (const auto& e : ds.train) total += static_cast<double>(e.length);
  for (const auto& e : ds.test) total += static_cast<double>(e.length);
  ds.stats.average_length = total / static_cast<double>(ds.train.size() + ds.test.size());
  return ds;
}

// ------------------------------------------------------------------ shards

inline constexpr const char* shard_data_file = "data.bin";
inline constexpr const char* shard_index_file = "index.json";

namespace detail {

inline ad::NamedArray array_of(std::string name, const std::vector<double>& v) {
  return {std::move(name), {v.size()}, v};
}

template <class Seq>
inline void flatten(const std::vector<Seq>& lists, std::vector<double>& offsets, std::vector<double>& members) {
  offsets.assign(1, 0.0);
  members.clear();
  for (const auto& l : lists) {
    for (auto x : l) members.push_back(static_cast<double>(x));
    offsets.push_back(static_cast<double>(members.size()));
  }
}

inline std::vector<std::vector<std::size_t>> unflatten(const ad::NamedArray& offsets, const ad::NamedArray& members) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s + 1 < offsets.values.size(); ++s) {
    const auto b = static_cast<std::size_t>(offsets.values[s]);
    const auto e = static_cast<std::size_t>(offsets.values[s + 1]);
    if (b > e || e > members.values.size()) throw IngestError("corrupt shard offsets in '" + offsets.name + "'");
    std::vector<std::size_t> l;
    for (std::size_t k = b; k < e; ++k) l.push_back(static_cast<std::size_t>(members.values[k]));
    out.push_back(std::move(l));
  }
  return out;
}

inline void write_examples(const std::string& prefix, const std::vector<Example>& xs,
                           std::vector<ad::NamedArray>& arrays) {
  std::vector<std::vector<ItemIndex>> hist;
  std::vector<double> gt, ts, len;
  for (const auto& x : xs) {
    hist.push_back(x.history);
    gt.push_back(static_cast<double>(x.ground_truth));
    ts.push_back(static_cast<double>(x.ts));
    len.push_back(static_cast<double>(x.length));
  }
  std::vector<double> off, mem;
  flatten(hist, off, mem);
  arrays.push_back(array_of(prefix + ".offsets", off));
  arrays.push_back(array_of(prefix + ".history", mem));
  arrays.push_back(array_of(prefix + ".ground_truth", gt));
  arrays.push_back(array_of(prefix + ".ts", ts));
  arrays.push_back(array_of(prefix + ".length", len));
}

inline std::vector<Example> read_examples(const std::string& prefix, const std::vector<ad::NamedArray>& arrays,
                                          const nlohmann::json& ids) {
  const auto hist = unflatten(ad::find_entry(arrays, prefix + ".offsets"), ad::find_entry(arrays, prefix + ".history"));
  const auto& gt = ad::find_entry(arrays, prefix + ".ground_truth").values;
  const auto& ts = ad::find_entry(arrays, prefix + ".ts").values;
  const auto& len = ad::find_entry(arrays, prefix + ".length").values;
  if (hist.size() != ids.size() || gt.size() != ids.size()) throw IngestError("shard side '" + prefix + "' is inconsistent");
  std::vector<Example> out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    Example e;
    e.session_id = ids[i].get<std::string>();
    e.history.assign(hist[i].begin(), hist[i].end());
    e.ground_truth = static_cast<ItemIndex>(gt[i]);
    e.ts = static_cast<std::int64_t>(ts[i]);
    e.length = static_cast<std::size_t>(len[i]);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace detail

inline nlohmann::json stats_json(const PrepareStats& s) {
  return {{"items", s.items},
          {"train_sessions", s.train_sessions},
          {"test_sessions", s.test_sessions},
          {"average_length", s.average_length},
          {"skipped", s.skipped},
          {"resorted", s.resorted},
          {"taxonomy_clustered", s.taxonomy_clustered}};
}

/// Writes data.bin (named-array container) and index.json into `dir`.
inline void write_shard(const std::filesystem::path& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  std::vector<ad::NamedArray> arrays;
  std::vector<double> paths;
  for (const auto& p : ds.catalog.paths)
    for (auto x : p) paths.push_back(static_cast<double>(x));
  arrays.push_back({"catalog.paths", {ds.catalog.paths.size(), 3}, paths});
  std::vector<double> off, mem;
  detail::flatten(ds.catalog.tokens, off, mem);
  arrays.push_back(detail::array_of("catalog.token_offsets", off));
  arrays.push_back(detail::array_of("catalog.tokens", mem));
  detail::flatten(ds.attributes.item_tokens, off, mem);
  arrays.push_back(detail::array_of("attr.item_offsets", off));
  arrays.push_back(detail::array_of("attr.item_tokens", mem));
  if (ds.attributes.mode == AttributeMode::pretrained) {
    arrays.push_back({"attr.frozen", {ds.attributes.rows, ds.attributes.dim}, ds.attributes.frozen});
  }
  detail::write_examples("train", ds.train, arrays);
  detail::write_examples("test", ds.test, arrays);
  ad::save_container((dir / shard_data_file).string(), arrays);

  nlohmann::json idx;
  idx["format"] = "nirgnn-shard-1";
  idx["items"] = ds.catalog.items.names();
  idx["taxonomy"] = {ds.catalog.taxonomy[0].names(), ds.catalog.taxonomy[1].names(), ds.catalog.taxonomy[2].names()};
  idx["attributes"] = ds.catalog.attributes.names();
  nlohmann::json train_ids = nlohmann::json::array(), test_ids = nlohmann::json::array();
  for (const auto& e : ds.train) train_ids.push_back(e.session_id);
  for (const auto& e : ds.test) test_ids.push_back(e.session_id);
  idx["train_sessions"] = train_ids;
  idx["test_sessions"] = test_ids;
  idx["attr"] = {{"mode", to_string(ds.attributes.mode)},
                 {"dim", ds.attributes.dim},
                 {"rows", ds.attributes.rows},
                 {"coverage", {{"tokens", ds.attributes.coverage.tokens},
                               {"covered", ds.attributes.coverage.covered},
                               {"unknown_items", ds.attributes.coverage.unknown_items}}}};
  idx["boundary"] = ds.boundary;
  idx["stats"] = stats_json(ds.stats);
  idx["warnings"] = ds.warnings;
  std::ofstream os(dir / shard_index_file, std::ios::trunc);
  if (!os) throw IngestError("cannot write " + (dir / shard_index_file).string());
  os << idx.dump(2) << '\n';
}

inline Dataset read_shard(const std::filesystem::path& dir) {
  std::ifstream is(dir / shard_index_file);
  if (!is) throw IngestError("cannot open shard index " + (dir / shard_index_file).string());
  nlohmann::json idx;
  try {
    idx = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw IngestError("malformed shard index: " + std::string(e.what()));
  }
  if (idx.value("format", "") != "nirgnn-shard-1") throw IngestError("unsupported shard format");
  const auto arrays = ad::load_container((dir / shard_data_file).string());

  Dataset ds;
  ds.catalog.items = Vocab::from_ordered(idx["items"].get<std::vector<std::string>>());
  for (std::size_t l = 0; l < 3; ++l) {
    ds.catalog.taxonomy[l] = Vocab::from_ordered(idx["taxonomy"][l].get<std::vector<std::string>>());
  }
  ds.catalog.attributes = Vocab::from_ordered(idx["attributes"].get<std::vector<std::string>>());
  const auto& paths = ad::find_entry(arrays, "catalog.paths");
  if (paths.dims.size() != 2 || paths.dims[0] != ds.catalog.items.size() || paths.dims[1] != 3) {
    throw IngestError("shard taxonomy table does not match the item vocabulary");
  }
  ds.catalog.paths.resize(ds.catalog.items.size());
  for (std::size_t i = 0; i < ds.catalog.paths.size(); ++i)
    for (std::size_t l = 0; l < 3; ++l) ds.catalog.paths[i][l] = static_cast<std::size_t>(paths.values[i * 3 + l]);
  ds.catalog.tokens =
      detail::unflatten(ad::find_entry(arrays, "catalog.token_offsets"), ad::find_entry(arrays, "catalog.tokens"));

  const auto& a = idx["attr"];
  ds.attributes.mode = a["mode"].get<std::string>() == "pretrained" ? AttributeMode::pretrained : AttributeMode::trainable;
  ds.attributes.dim = a["dim"].get<std::size_t>();
  ds.attributes.rows = a["rows"].get<std::size_t>();
  ds.attributes.coverage.tokens = a["coverage"]["tokens"].get<std::size_t>();
  ds.attributes.coverage.covered = a["coverage"]["covered"].get<std::size_t>();
  ds.attributes.coverage.unknown_items = a["coverage"]["unknown_items"].get<std::vector<std::string>>();
  ds.attributes.item_tokens =
      detail::unflatten(ad::find_entry(arrays, "attr.item_offsets"), ad::find_entry(arrays, "attr.item_tokens"));
  if (ds.attributes.mode == AttributeMode::pretrained) ds.attributes.frozen = ad::find_entry(arrays, "attr.frozen").values;

  ds.train = detail::read_examples("train", arrays, idx["train_sessions"]);
  ds.test = detail::read_examples("test", arrays, idx["test_sessions"]);
  ds.boundary = idx["boundary"].get<std::int64_t>();
  const auto& st = idx["stats"];
  ds.stats.items = st["items"].get<std::size_t>();
  ds.stats.train_sessions = st["train_sessions"].get<std::size_t>();
  ds.stats.test_sessions = st["test_sessions"].get<std::size_t>();
  ds.stats.average_length = st["average_length"].get<double>();
  ds.stats.skipped = st["skipped"].get<std::size_t>();
  ds.stats.resorted = st["resorted"].get<std::size_t>();
  ds.stats.taxonomy_clustered = st["taxonomy_clustered"].get<bool>();
  ds.warnings = idx["warnings"].get<std::vector<std::string>>();
  return ds;
}

}  // namespace nirgnn::ingest
