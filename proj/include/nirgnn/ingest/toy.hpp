#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nirgnn/ingest/catalog.hpp"
#include "nirgnn/ingest/sessions.hpp"
#include "nirgnn/ingest/split.hpp"

namespace nirgnn::ingest {

/// Small memorization set: 20 items and 10 fixed session patterns. Each
/// pattern appears 5 times in the training window and once, 10 days later,
/// in the test window. Every item carries a unique brand token, so the
/// ground truth is identifiable from attributes alone.
struct ToyData {
  SessionLog sessions;
  std::vector<CatalogRecord> catalog;
};

inline std::string toy_item(std::size_t i) {
  std::string s = "i";
  if (i < 10) s += '0';
  return s + std::to_string(i);
}

inline ToyData make_toy_data(std::size_t items = 20, std::size_t patterns = 10, std::size_t train_repeats = 5) {
  ToyData toy;
  for (std::size_t i = 0; i < items; ++i) {
    CatalogRecord r;
    r.item = toy_item(i);
    const std::size_t leaf = i % 8, sub = leaf % 4, cat = sub % 2;
    r.taxonomy = std::vector<std::string>{"cat" + std::to_string(cat), "sub" + std::to_string(sub),
                                          "leaf" + std::to_string(leaf)};
    r.attributes = {"brand_" + std::to_string(i), "price_" + std::to_string(i % 5)};
    toy.catalog.push_back(std::move(r));
  }

  auto pattern = [&](std::size_t p) {
    std::vector<std::size_t> seq{(2 * p) % items, (2 * p + 1) % items};
    if (p % 2 == 1) seq.push_back((2 * p) % items);  // a repeat, giving a back edge
    seq.push_back((2 * p + 5) % items);
    seq.push_back((2 * p + 10) % items);  // ground truth, last
    return seq;
  };
  auto emit = [&](const std::string& id, const std::vector<std::size_t>& seq, std::int64_t start) {
    Session s;
    s.session_id = id;
    for (std::size_t k = 0; k < seq.size(); ++k) s.events.push_back({toy_item(seq[k]), start + static_cast<std::int64_t>(k) * 60});
    toy.sessions.sessions.push_back(std::move(s));
  };
  for (std::size_t p = 0; p < patterns; ++p) {
    for (std::size_t r = 0; r < train_repeats; ++r) {
      std::ostringstream id;
      id << "train-" << p << "-" << r;
      const std::int64_t day = static_cast<std::int64_t>((p + r) % 3);
      emit(id.str(), pattern(p), day * seconds_per_day + static_cast<std::int64_t>(r) * 3600);
    }
    emit("test-" + std::to_string(p), pattern(p), 10 * seconds_per_day + static_cast<std::int64_t>(p) * 3600);
  }
  return toy;
}

/// Writes sessions.jsonl and catalog.jsonl in the ingest formats.
inline void write_toy_files(const ToyData& toy, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream ss(dir / "sessions.jsonl", std::ios::trunc);
  for (const auto& s : toy.sessions.sessions) {
    nlohmann::json j;
    j["session_id"] = s.session_id;
    j["events"] = nlohmann::json::array();
    for (const auto& e : s.events) j["events"].push_back({{"item", e.item}, {"ts", e.ts}});
    ss << j.dump() << '\n';
  }
  std::ofstream cs(dir / "catalog.jsonl", std::ios::trunc);
  for (const auto& r : toy.catalog) {
    nlohmann::json j;
    j["item"] = r.item;
    j["taxonomy"] = r.taxonomy ? nlohmann::json(*r.taxonomy) : nlohmann::json(nullptr);
    j["attributes"] = r.attributes;
    cs << j.dump() << '\n';
  }
  if (!ss || !cs) throw IngestError("cannot write toy files under " + dir.string());
}

}  // namespace nirgnn::ingest
