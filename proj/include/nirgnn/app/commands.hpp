#pragma once

#include <spdlog/spdlog.h>

#include <array>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "nirgnn/app/config.hpp"
#include "nirgnn/app/manifest.hpp"
#include "nirgnn/eval.hpp"
#include "nirgnn/ingest/dataset.hpp"
#include "nirgnn/ingest/toy.hpp"
#include "nirgnn/model.hpp"

namespace nirgnn::app {

namespace fs = std::filesystem;

inline constexpr const char* checkpoint_file = "checkpoint.bin";
inline constexpr const char* config_file = "config.txt";
inline constexpr const char* epoch_log_file = "epochs.jsonl";
inline constexpr const char* metrics_file = "metrics.json";
inline constexpr const char* rankings_file = "rankings.csv";
inline constexpr const char* plotdata_file = "plotdata.csv";
inline constexpr const char* stats_file = "stats.tsv";

/// 0 success, 2 ingestion, 3 training, 4 evaluation, 1 anything else.
inline int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::ingest: return 2;
    case ErrorKind::training: return 3;
    case ErrorKind::evaluation: return 4;
    default: return 1;
  }
}

namespace detail {

/// Runs `fn`, re-raising failures other than configuration and ingestion
/// errors as `Stage` so the exit code names the failing stage.
template <class Stage, class F>
auto in_stage(F&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const IngestError&) {
    throw;
  } catch (const Error& e) {
    if (dynamic_cast<const Stage*>(&e)) throw;
    throw Stage(e.what());
  } catch (const fs::filesystem_error& e) {
    throw Stage(e.what());
  }
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

// ---------------------------------------------------------------- prepare

struct PrepareArgs {
  std::string sessions;
  std::string catalog;
  std::string out;
  std::string vectors;        // attribute vectors; switches to pretrained mode
  std::string label_vectors;  // optional label vectors for taxonomy clustering
  std::array<std::size_t, 3> levels{100, 50, 10};
  int boundary_days = 7;
  std::size_t d_a = 32;
  double min_coverage = 0.95;
  std::uint64_t seed = 42;
};

inline std::string stats_table(const ingest::PrepareStats& s) {
  std::ostringstream os;
  os << "Items\tTrain sessions\tTest sessions\tAverage length\n";
  os << s.items << '\t' << s.train_sessions << '\t' << s.test_sessions << '\t' << std::fixed << std::setprecision(2)
     << s.average_length << '\n';
  return os.str();
}

inline ingest::Dataset cmd_prepare(const PrepareArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  ingest::Dataset ds = detail::in_stage<IngestError>([&] {
    const ingest::SessionLog log = ingest::load_sessions(a.sessions);
    const auto records = ingest::load_catalog_records(a.catalog);
    ingest::PrepareOptions opt;
    opt.boundary_days = a.boundary_days;
    opt.level_sizes = a.levels;
    opt.d_a = a.d_a;
    opt.min_coverage = a.min_coverage;
    opt.seed = a.seed;
    std::optional<ingest::PretrainedVectors> vec, labels;
    if (!a.vectors.empty()) {
      vec = ingest::load_vector_file(a.vectors);
      opt.attr_mode = ingest::AttributeMode::pretrained;
    }
    if (!a.label_vectors.empty()) labels = ingest::load_vector_file(a.label_vectors);
    return ingest::prepare_dataset(log, records, opt, vec ? &*vec : nullptr, labels ? &*labels : nullptr);
  });
  for (const auto& w : ds.warnings) spdlog::warn("{}", w);
  if (!ds.attributes.coverage.unknown_items.empty()) {
    spdlog::warn("{} items have no known attribute token and use the UNKNOWN vector",
                 ds.attributes.coverage.unknown_items.size());
  }
  if (ds.stats.resorted > 0) spdlog::info("{} sessions were re-sorted by timestamp", ds.stats.resorted);
  if (ds.stats.skipped > 0) spdlog::info("{} sessions were too short to mask and were skipped", ds.stats.skipped);

  const fs::path out(a.out);
  detail::in_stage<IngestError>([&] {
    ingest::write_shard(out, ds);
    std::ofstream st(out / stats_file, std::ios::trunc);
    st << stats_table(ds.stats);
    if (!st) throw IngestError("cannot write " + (out / stats_file).string());
    return 0;
  });
  RunManifest m;
  m.command = "prepare";
  std::ostringstream cfg;
  cfg << "boundary_days=" << a.boundary_days << "\nd_a=" << a.d_a << "\nlevels=" << a.levels[0] << ',' << a.levels[1]
      << ',' << a.levels[2] << "\nmin_coverage=" << a.min_coverage << "\nseed=" << a.seed << '\n';
  m.config_hash = sha256_string(cfg.str());
  m.seed = a.seed;
  m.add_input(a.sessions);
  m.add_input(a.catalog);
  if (!a.vectors.empty()) m.add_input(a.vectors);
  if (!a.label_vectors.empty()) m.add_input(a.label_vectors);
  m.outputs = {(out / ingest::shard_data_file).string(), (out / ingest::shard_index_file).string(),
               (out / stats_file).string()};
  m.wall_seconds = detail::seconds_since(t0);
  m.write(out);
  spdlog::info("prepared {} items, {} train / {} test sessions", ds.stats.items, ds.stats.train_sessions,
               ds.stats.test_sessions);
  return ds;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string out;
  std::string config_path;  // optional key=value file
  KeyValues overrides;      // command-line settings, highest precedence
  Ablation ablation = Ablation::none;
};

/// defaults < config file < overrides, then the ablation switch.
inline TrainConfig resolve_config(const std::string& config_path, const KeyValues& overrides, Ablation which) {
  TrainConfig cfg;
  if (!config_path.empty()) apply_config(cfg, load_key_values(config_path));
  apply_config(cfg, overrides);
  return ablate(cfg, which);
}

struct TrainOutcome {
  TrainConfig config;
  TrainStats stats;
  fs::path checkpoint;
};

inline TrainOutcome train_on(const ingest::Dataset& ds, const TrainConfig& cfg, const fs::path& out) {
  fs::create_directories(out);
  Model model(ds.catalog, ds.attributes, cfg);
  spdlog::info("training {} parameters on {} sessions for {} epochs", model.params().scalar_count(), ds.train.size(),
               cfg.epochs);
  std::ofstream log(out / epoch_log_file, std::ios::trunc);
  TrainOutcome o;
  o.stats = detail::in_stage<TrainingError>([&] {
    return train(model, ds.train, [&](const EpochLog& e) {
      const nlohmann::json j = {{"epoch", e.epoch},
                                {"loss_ce", e.loss_ce},
                                {"loss_zero", e.loss_zero},
                                {"loss", e.loss},
                                {"seconds", e.seconds}};
      log << j.dump() << '\n';
      log.flush();
      spdlog::debug("epoch {} loss {:.6f} (ce {:.6f}, zero {:.6f})", e.epoch, e.loss, e.loss_ce, e.loss_zero);
    });
  });
  o.config = model.config();
  o.checkpoint = out / checkpoint_file;
  model.save(o.checkpoint.string());
  std::ofstream c(out / config_file, std::ios::trunc);
  c << config_text(o.config);
  if (!c) throw TrainingError("cannot write " + (out / config_file).string());
  return o;
}

inline TrainOutcome cmd_train(const TrainArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  const TrainConfig cfg = resolve_config(a.config_path, a.overrides, a.ablation);
  const ingest::Dataset ds = ingest::read_shard(a.data);
  const fs::path out(a.out);
  TrainOutcome o = train_on(ds, cfg, out);
  RunManifest m;
  m.command = a.ablation == Ablation::none ? "train" : std::string("train --ablate ") + to_string(a.ablation);
  m.config_hash = sha256_string(config_text(o.config));
  m.seed = o.config.seed;
  m.add_input(a.data);
  if (!a.config_path.empty()) m.add_input(a.config_path);
  m.outputs = {o.checkpoint.string(), (out / config_file).string(), (out / epoch_log_file).string()};
  m.wall_seconds = detail::seconds_since(t0);
  m.write(out);
  if (!o.stats.epochs.empty()) spdlog::info("final epoch loss {:.6f}", o.stats.epochs.back().loss);
  return o;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string data;
  std::string checkpoint;  // checkpoint file or the run directory holding it
  std::string out;         // defaults to the checkpoint directory
  std::optional<std::vector<std::size_t>> ks;
  bool strict_precision = false;
  bool sampled_beta = false;
  std::size_t repeats = 5;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
};

inline std::string metrics_table(const eval::MetricsReport& r) {
  std::ostringstream os;
  const bool pm = !r.p_std.empty();
  os << std::left << std::setw(6) << "k" << std::setw(pm ? 22 : 12) << (r.strict_precision ? "P@k(strict)" : "P@k")
     << "MRR@k\n";
  os << std::fixed << std::setprecision(3);
  for (auto k : r.ks) {
    std::ostringstream p, m;
    p << std::fixed << std::setprecision(3) << r.p.at(k);
    m << std::fixed << std::setprecision(3) << r.mrr.at(k);
    if (pm) {
      p << " ± " << r.p_std.at(k);
      m << " ± " << r.mrr_std.at(k);
    }
    os << std::setw(6) << k << std::setw(pm ? 22 : 12) << p.str() << m.str() << '\n';
  }
  os << "sessions " << r.sessions << ", skipped " << r.skipped;
  if (pm) os << ", mean ± population std over " << r.repeats << " sampled runs";
  os << '\n';
  return os.str();
}

struct EvalOutcome {
  eval::EvalResult result;
  fs::path metrics;
  fs::path rankings;
};

inline EvalOutcome eval_on(const ingest::Dataset& ds, const fs::path& checkpoint, const TrainConfig& cfg,
                           const EvalArgs& a, const fs::path& out) {
  fs::create_directories(out);
  return detail::in_stage<EvaluationError>([&] {
    Model model(ds.catalog, ds.attributes, cfg);
    try {
      model.load(checkpoint.string());
    } catch (const Error& e) {
      throw EvaluationError("checkpoint " + checkpoint.string() + " does not match the dataset: " + e.what());
    }
    eval::EvalOptions opt;
    opt.ks = a.ks.value_or(cfg.eval_ks);
    opt.strict_precision = a.strict_precision;
    opt.sampled_beta = a.sampled_beta;
    opt.repeats = a.repeats;
    opt.seed = a.seed.value_or(cfg.seed);
    opt.threads = a.threads;
    EvalOutcome o;
    o.result = eval::evaluate(model, ds.test, opt);
    o.result.report.config = config_json(cfg);
    o.metrics = out / metrics_file;
    o.rankings = out / rankings_file;
    eval::write_metrics_json(o.metrics, o.result.report);
    eval::write_rankings_csv(o.rankings, o.result.rankings, ds.catalog.items);
    return o;
  });
}

inline fs::path checkpoint_path(const std::string& p) {
  fs::path c(p);
  if (fs::is_directory(c)) c /= checkpoint_file;
  if (!fs::exists(c)) throw EvaluationError("checkpoint not found: " + c.string());
  return c;
}

inline EvalOutcome cmd_eval(const EvalArgs& a, std::ostream* table = nullptr) {
  const auto t0 = std::chrono::steady_clock::now();
  const fs::path ckpt = checkpoint_path(a.checkpoint);
  const fs::path cfg_path = ckpt.parent_path() / config_file;
  if (!fs::exists(cfg_path)) throw EvaluationError("missing " + cfg_path.string() + " next to the checkpoint");
  TrainConfig cfg;
  apply_config(cfg, load_key_values(cfg_path.string()));
  const ingest::Dataset ds = ingest::read_shard(a.data);
  const fs::path out = a.out.empty() ? ckpt.parent_path() : fs::path(a.out);
  EvalOutcome o = eval_on(ds, ckpt, cfg, a, out);
  if (table) *table << metrics_table(o.result.report);
  RunManifest m;
  m.command = "eval";
  m.config_hash = sha256_string(config_text(cfg));
  m.seed = o.result.report.seed;
  m.add_input(a.data);
  m.add_input(ckpt);
  m.add_input(cfg_path);
  m.outputs = {o.metrics.string(), o.rankings.string()};
  m.wall_seconds = detail::seconds_since(t0);
  m.write(out);
  return o;
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
  TrainArgs train;
  EvalArgs eval;
};

/// Trains with one component switched off, then evaluates into the same directory.
inline EvalOutcome cmd_ablate(const AblateArgs& a, std::ostream* table = nullptr) {
  if (a.train.ablation == Ablation::none) throw ConfigError("ablate needs --which no_alpha|no_beta|no_lzero");
  const TrainOutcome t = cmd_train(a.train);
  EvalArgs e = a.eval;
  e.data = a.train.data;
  e.checkpoint = t.checkpoint.string();
  e.out = a.train.out;
  return cmd_eval(e, table);
}

// ---------------------------------------------------------------- sweep

struct SweepArgs {
  std::string data;
  std::string out;
  std::string param = "lambda";
  std::vector<double> values{0.1, 0.3, 0.5, 0.7, 0.9};
  std::string config_path;
  KeyValues overrides;
  std::size_t threads = 1;
};

inline std::string sweep_dir_name(const std::string& param, double v) {
  std::ostringstream os;
  os << param << '_' << v;
  return os.str();
}

/// Trains and evaluates once per value with a shared seed; a failed value
/// is recorded in the failure column and the sweep continues.
inline std::vector<eval::SweepRow> cmd_sweep(const SweepArgs& a) {
  const auto t0 = std::chrono::steady_clock::now();
  if (a.param != "lambda" && a.param != "gamma") throw ConfigError("sweep --param must be lambda or gamma");
  for (double v : a.values) {
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("sweep values must lie in [0,1]");
  }
  const TrainConfig base = resolve_config(a.config_path, a.overrides, Ablation::none);
  const ingest::Dataset ds = ingest::read_shard(a.data);
  const fs::path out(a.out);
  fs::create_directories(out);
  std::vector<eval::SweepRow> rows;
  for (double v : a.values) {
    eval::SweepRow row;
    row.value = v;
    try {
      TrainConfig cfg = base;
      (a.param == "lambda" ? cfg.lambda : cfg.gamma) = v;
      std::vector<std::size_t> ks = cfg.eval_ks;
      if (std::find(ks.begin(), ks.end(), 20) == ks.end()) ks.push_back(20);
      const fs::path dir = out / sweep_dir_name(a.param, v);
      const TrainOutcome t = train_on(ds, cfg, dir);
      EvalArgs e;
      e.ks = ks;
      e.threads = a.threads;
      const EvalOutcome o = eval_on(ds, t.checkpoint, t.config, e, dir);
      row.p20 = o.result.report.p.at(20);
      spdlog::info("{}={} P@20={:.3f}", a.param, v, *row.p20);
    } catch (const Error& e) {
      row.failure = e.what();
      spdlog::error("{}={} failed: {}", a.param, v, e.what());
    }
    rows.push_back(row);
  }
  eval::write_plotdata_csv(out / plotdata_file, a.param, rows);
  RunManifest m;
  m.command = "sweep --param " + a.param;
  m.config_hash = sha256_string(config_text(base));
  m.seed = base.seed;
  m.add_input(a.data);
  if (!a.config_path.empty()) m.add_input(a.config_path);
  m.outputs = {(out / plotdata_file).string()};
  m.wall_seconds = detail::seconds_since(t0);
  m.write(out);
  std::sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) { return x.value < y.value; });
  return rows;
}

// ---------------------------------------------------------------- toy

inline void cmd_toy(const std::string& out) {
  ingest::write_toy_files(ingest::make_toy_data(), out);
  spdlog::info("wrote toy sessions.jsonl and catalog.jsonl to {}", out);
}

}  // namespace nirgnn::app
