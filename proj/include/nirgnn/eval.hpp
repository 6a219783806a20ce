#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <exception>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nirgnn/model.hpp"

namespace nirgnn::eval {

struct RankedResult {
  std::string session_id;
  ItemIndex gt_item = 0;
  std::vector<ItemIndex> ranked;  // descending score, ties by ascending id
  std::size_t gt_rank = 0;        // 1-based
};

/// Sorts candidates by descending score, breaking ties by ascending item
/// id, and records the ground truth's rank.
inline RankedResult rank(std::span<const std::pair<ItemIndex, double>> scores, ItemIndex gt,
                         const std::string& session_id = {}) {
  std::vector<std::pair<ItemIndex, double>> s(scores.begin(), scores.end());
  std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  RankedResult r;
  r.session_id = session_id;
  r.gt_item = gt;
  r.ranked.reserve(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    r.ranked.push_back(s[k].first);
    if (s[k].first == gt) r.gt_rank = k + 1;
  }
  if (r.gt_rank == 0) {
    throw ProtocolError("ground truth " + std::to_string(gt) + " is not among the scored candidates" +
                        (session_id.empty() ? "" : " of session '" + session_id + "'"));
  }
  return r;
}

inline RankedResult rank(const std::map<ItemIndex, double>& scores, ItemIndex gt, const std::string& session_id = {}) {
  std::vector<std::pair<ItemIndex, double>> v(scores.begin(), scores.end());
  return rank(v, gt, session_id);
}

/// Hit-rate percent; with `strict`, hits / (k * sessions) percent.
inline double precision_at_k(std::span<const RankedResult> results, std::size_t k, bool strict = false) {
  if (k == 0) throw ConfigError("k must be >= 1");
  if (results.empty()) throw DomainError("precision_at_k over zero sessions");
  std::size_t hits = 0;
  for (const auto& r : results) hits += r.gt_rank <= k ? 1 : 0;
  const double denom = static_cast<double>(results.size()) * (strict ? static_cast<double>(k) : 1.0);
  return 100.0 * static_cast<double>(hits) / denom;
}

inline double mrr_at_k(std::span<const RankedResult> results, std::size_t k) {
  if (k == 0) throw ConfigError("k must be >= 1");
  if (results.empty()) throw DomainError("mrr_at_k over zero sessions");
  double s = 0.0;
  for (const auto& r : results) {
    if (r.gt_rank <= k) s += 1.0 / static_cast<double>(r.gt_rank);
  }
  return 100.0 * s / static_cast<double>(results.size());
}

struct MetricsReport {
  std::vector<std::size_t> ks;
  std::map<std::size_t, double> p, mrr;
  std::map<std::size_t, double> p_std, mrr_std;  // sampled mode only
  std::size_t sessions = 0;
  std::size_t skipped = 0;
  std::uint64_t seed = 0;
  bool strict_precision = false;
  std::string beta_mode = "mean";
  std::size_t repeats = 1;
  nlohmann::json config = nlohmann::json::object();
};

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j;
  auto table = [](const std::map<std::size_t, double>& m) {
    nlohmann::json t = nlohmann::json::object();
    for (const auto& [k, v] : m) t[std::to_string(k)] = v;
    return t;
  };
  j["p"] = table(r.p);
  j["mrr"] = table(r.mrr);
  if (!r.p_std.empty()) {
    j["p_std"] = table(r.p_std);
    j["mrr_std"] = table(r.mrr_std);
  }
  j["sessions"] = r.sessions;
  j["skipped"] = r.skipped;
  j["seed"] = r.seed;
  j["precision"] = r.strict_precision ? "strict" : "hit_rate";
  j["beta_mode"] = r.beta_mode;
  j["repeats"] = r.repeats;
  j["config"] = r.config;
  return j;
}

inline MetricsReport report_from_json(const nlohmann::json& j) {
  MetricsReport r;
  auto table = [](const nlohmann::json& t, std::map<std::size_t, double>& m) {
    for (auto it = t.begin(); it != t.end(); ++it) m[std::stoul(it.key())] = it.value().get<double>();
  };
  table(j.at("p"), r.p);
  table(j.at("mrr"), r.mrr);
  if (j.contains("p_std")) {
    table(j["p_std"], r.p_std);
    table(j["mrr_std"], r.mrr_std);
  }
  for (const auto& [k, v] : r.p) r.ks.push_back(k);
  r.sessions = j.at("sessions").get<std::size_t>();
  r.skipped = j.at("skipped").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.strict_precision = j.value("precision", "hit_rate") == "strict";
  r.beta_mode = j.value("beta_mode", "mean");
  r.repeats = j.value("repeats", std::size_t{1});
  r.config = j.value("config", nlohmann::json::object());
  return r;
}

struct EvalOptions {
  std::vector<std::size_t> ks{10, 20};
  bool strict_precision = false;
  bool sampled_beta = false;
  std::size_t repeats = 1;  // sampled mode only
  std::uint64_t seed = 42;
  std::size_t threads = 1;
};

struct EvalResult {
  MetricsReport report;
  std::vector<RankedResult> rankings;  // first repeat, session-id order
};

namespace detail {

inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += threads) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

inline std::vector<std::optional<RankedResult>> rank_sessions(const Model& model,
                                                              const std::vector<ingest::Example>& test,
                                                              const EvalOptions& opt, std::size_t repeat) {
  ad::NoGrad ng;
  const ad::Tensor c_all = model.infer_all();
  std::vector<std::optional<RankedResult>> out(test.size());
  parallel_for(test.size(), opt.threads, [&](std::size_t i) {
    ad::NoGrad local;
    const auto& ex = test[i];
    const auto cands = model.candidates(ex.history, ex.ground_truth, CandidateMode::full_vocab);
    if (cands.empty() || std::find(cands.begin(), cands.end(), ex.ground_truth) == cands.end()) return;
    const SessionGraph g = build_graph(ex.history, model.item_count());
    ad::Rng rng(ad::derive_seed(opt.seed, "eval-beta", ex.session_id + "#" + std::to_string(repeat)));
    BetaSampler sampler = opt.sampled_beta ? BetaSampler::sampled(rng) : BetaSampler::mean_mode();
    const auto z = model.score(g, cands, c_all, sampler);
    std::vector<std::pair<ItemIndex, double>> scored(cands.size());
    for (std::size_t k = 0; k < cands.size(); ++k) scored[k] = {cands[k], z[k]};
    out[i] = rank(scored, ex.ground_truth, ex.session_id);
  });
  return out;
}

}  // namespace detail

/// Ranks every test session over the full vocabulary minus its history and
/// aggregates P@k and MRR@k. Mean-mode Beta weights by default; sampled
/// mode repeats R times and reports mean and population std over repeats.
inline EvalResult evaluate(const Model& model, const std::vector<ingest::Example>& test, const EvalOptions& opt) {
  if (test.empty()) throw EvaluationError("test split is empty");
  const std::size_t repeats = opt.sampled_beta ? std::max<std::size_t>(1, opt.repeats) : 1;
  EvalResult res;
  MetricsReport& rep = res.report;
  rep.ks = opt.ks;
  std::sort(rep.ks.begin(), rep.ks.end());
  rep.ks.erase(std::unique(rep.ks.begin(), rep.ks.end()), rep.ks.end());
  rep.seed = opt.seed;
  rep.strict_precision = opt.strict_precision;
  rep.beta_mode = opt.sampled_beta ? "sampled" : "mean";
  rep.repeats = repeats;

  std::map<std::size_t, std::vector<double>> ps, ms;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto ranked = detail::rank_sessions(model, test, opt, r);
    std::vector<RankedResult> kept;
    std::size_t skipped = 0;
    for (const auto& x : ranked) {
      if (x) {
        kept.push_back(*x);
      } else {
        ++skipped;
      }
    }
    if (kept.empty()) throw EvaluationError("every test session was skipped");
    for (auto k : rep.ks) {
      ps[k].push_back(precision_at_k(kept, k, opt.strict_precision));
      ms[k].push_back(mrr_at_k(kept, k));
    }
    if (r == 0) {
      rep.sessions = kept.size();
      rep.skipped = skipped;
      res.rankings = std::move(kept);
    }
  }
  auto moments = [](const std::vector<double>& v, double& mean, double& sd) {
    mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - mean) * (x - mean);
    sd = std::sqrt(ss / static_cast<double>(v.size()));
  };
  for (auto k : rep.ks) {
    double m, s;
    moments(ps[k], m, s);
    rep.p[k] = m;
    if (opt.sampled_beta) rep.p_std[k] = s;
    moments(ms[k], m, s);
    rep.mrr[k] = m;
    if (opt.sampled_beta) rep.mrr_std[k] = s;
  }
  return res;
}

// ---------------------------------------------------------------- files

inline void write_metrics_json(const std::filesystem::path& path, const MetricsReport& r) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw EvaluationError("cannot write " + path.string());
  os << to_json(r).dump(2) << '\n';
}

inline MetricsReport read_metrics_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw EvaluationError("cannot open " + path.string());
  return report_from_json(nlohmann::json::parse(is));
}

/// session_id,gt_item,gt_rank,top20 (pipe-separated item ids).
inline void write_rankings_csv(const std::filesystem::path& path, const std::vector<RankedResult>& rs,
                               const ingest::Vocab& items, std::size_t top = 20) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw EvaluationError("cannot write " + path.string());
  os << "session_id,gt_item,gt_rank,top" << top << '\n';
  for (const auto& r : rs) {
    os << r.session_id << ',' << items.name(r.gt_item) << ',' << r.gt_rank << ',';
    for (std::size_t k = 0; k < std::min(top, r.ranked.size()); ++k) os << (k ? "|" : "") << items.name(r.ranked[k]);
    os << '\n';
  }
}

struct SweepRow {
  double value = 0.0;
  std::optional<double> p20;
  std::string failure;  // empty on success
};

/// param,P@20,failure; rows sorted by parameter value.
inline void write_plotdata_csv(const std::filesystem::path& path, const std::string& param, std::vector<SweepRow> rows) {
  std::sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) { return a.value < b.value; });
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw EvaluationError("cannot write " + path.string());
  os << param << ",P@20,failure\n";
  for (const auto& r : rows) {
    os << r.value << ',';
    if (r.p20) os << *r.p20;
    std::string f = r.failure;
    std::replace(f.begin(), f.end(), ',', ';');
    std::replace(f.begin(), f.end(), '\n', ' ');
    os << ',' << f << '\n';
  }
}

}  // namespace nirgnn::eval
