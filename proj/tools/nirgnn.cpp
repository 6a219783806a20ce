// Command-line front end: prepare, train, eval, ablate, sweep, toy.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "nirgnn/app/commands.hpp"

namespace {

using nirgnn::app::KeyValues;

void configure_logging() {
  auto logger = spdlog::stderr_color_mt("nirgnn");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%l] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("NIRREC_LOG")) {
    const std::string v = env;
    if (v == "error") spdlog::set_level(spdlog::level::err);
    else if (v == "debug") spdlog::set_level(spdlog::level::debug);
    else if (v == "info") spdlog::set_level(spdlog::level::info);
    else spdlog::warn("ignoring NIRREC_LOG={} (expected error, info or debug)", v);
  }
}

std::string number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Training settings exposed as flags; each one set on the command line
// overrides the config file.
struct TrainFlags {
  std::optional<std::size_t> d, d_a, h, steps, epochs, batch_size, negatives;
  std::optional<double> lambda, gamma, lr;
  std::optional<std::uint64_t> sampler_seed;
  std::string candidate_mode;
  bool propagate_taxonomy = false;

  void add(CLI::App* c) {
    c->add_option("--d", d, "Embedding dimension");
    c->add_option("--d-a", d_a, "Attribute embedding dimension (trainable mode)");
    c->add_option("--hidden", h, "Hidden width of the attribute map (0 = 2d)");
    c->add_option("--steps", steps, "GGNN propagation steps");
    c->add_option("--epochs", epochs, "Training epochs");
    c->add_option("--batch-size", batch_size, "Sessions per optimizer step");
    c->add_option("--negatives", negatives, "Negatives per session in sampled candidate mode");
    c->add_option("--lambda", lambda, "Weight of the alpha intent");
    c->add_option("--gamma", gamma, "Weight of the cross-entropy loss");
    c->add_option("--lr", lr, "Adam learning rate");
    c->add_option("--sampler-seed", sampler_seed, "Seed for Beta draws (defaults to --seed)");
    c->add_option("--candidates", candidate_mode, "full_vocab or sampled");
    c->add_flag("--propagate-taxonomy", propagate_taxonomy, "Pass taxonomy embeddings through the GGNN");
  }

  void into(KeyValues& kv) const {
    if (d) kv["d"] = std::to_string(*d);
    if (d_a) kv["d_a"] = std::to_string(*d_a);
    if (h) kv["h"] = std::to_string(*h);
    if (steps) kv["steps"] = std::to_string(*steps);
    if (epochs) kv["epochs"] = std::to_string(*epochs);
    if (batch_size) kv["batch_size"] = std::to_string(*batch_size);
    if (negatives) kv["negatives"] = std::to_string(*negatives);
    if (lambda) kv["lambda"] = number(*lambda);
    if (gamma) kv["gamma"] = number(*gamma);
    if (lr) kv["lr"] = number(*lr);
    if (sampler_seed) kv["sampler_seed"] = std::to_string(*sampler_seed);
    if (!candidate_mode.empty()) kv["candidate_mode"] = candidate_mode;
    if (propagate_taxonomy) kv["propagate_taxonomy"] = "true";
  }
};

struct EvalFlags {
  std::string ks;
  bool strict = false;
  std::string beta_mode = "mean";
  std::size_t repeats = 5;

  void add(CLI::App* c) {
    c->add_option("--k", ks, "Comma-separated cut-offs, e.g. 5,10,20");
    c->add_flag("--strict-precision", strict, "Report hits/k instead of the hit rate");
    c->add_option("--beta-mode", beta_mode, "mean (deterministic) or sampled")->check(CLI::IsMember({"mean", "sampled"}));
    c->add_option("--repeats", repeats, "Sampled-mode repetitions");
  }

  void into(nirgnn::app::EvalArgs& e) const {
    if (!ks.empty()) e.ks = nirgnn::app::parse_size_list(ks, "--k");
    e.strict_precision = strict;
    e.sampled_beta = beta_mode == "sampled";
    e.repeats = repeats;
  }
};

}  // namespace

int main(int argc, char** argv) {
  configure_logging();
  CLI::App app{"Session-based new-item recommendation"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::size_t threads = 1;
  std::string config_path, out;
  auto shared = [&](CLI::App* c, bool needs_out) {
    c->add_option("--seed", seed, "Random seed");
    c->add_option("--threads", threads, "Worker threads for evaluation")->check(CLI::PositiveNumber);
    c->add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
    auto* o = c->add_option("--out", out, "Output directory");
    if (needs_out) o->required();
  };

  nirgnn::app::PrepareArgs prep;
  std::string levels = "100,50,10";
  auto* c_prep = app.add_subcommand("prepare", "Build dataset shards from sessions and a catalog");
  c_prep->add_option("--sessions", prep.sessions, "Sessions JSON-lines file")->required();
  c_prep->add_option("--catalog", prep.catalog, "Catalog JSON-lines file")->required();
  c_prep->add_option("--vectors", prep.vectors, "Pretrained attribute vectors (token v1 ... vd)");
  c_prep->add_option("--label-vectors", prep.label_vectors, "Vectors for flat labels (taxonomy clustering)");
  c_prep->add_option("--levels", levels, "Taxonomy cluster counts fine,mid,coarse");
  c_prep->add_option("--boundary-days", prep.boundary_days, "Test window in days");
  c_prep->add_option("--d-a", prep.d_a, "Attribute dimension for trainable mode");
  c_prep->add_option("--min-coverage", prep.min_coverage, "Minimum token coverage of the vector file");
  shared(c_prep, true);

  nirgnn::app::TrainArgs tr;
  TrainFlags tflags;
  auto* c_train = app.add_subcommand("train", "Train a model on prepared shards");
  c_train->add_option("--data", tr.data, "Shard directory")->required();
  std::string ablate_name;
  c_train->add_option("--ablate", ablate_name, "no_alpha, no_beta or no_lzero");
  tflags.add(c_train);
  shared(c_train, true);

  nirgnn::app::EvalArgs ev;
  EvalFlags eflags;
  auto* c_eval = app.add_subcommand("eval", "Evaluate a checkpoint on the test split");
  c_eval->add_option("--data", ev.data, "Shard directory")->required();
  c_eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file or run directory")->required();
  eflags.add(c_eval);
  shared(c_eval, false);

  nirgnn::app::AblateArgs ab;
  TrainFlags aflags;
  EvalFlags aeflags;
  std::string which;
  auto* c_ablate = app.add_subcommand("ablate", "Train and evaluate with one component disabled");
  c_ablate->add_option("--data", ab.train.data, "Shard directory")->required();
  c_ablate->add_option("--which", which, "no_alpha, no_beta or no_lzero")->required();
  aflags.add(c_ablate);
  aeflags.add(c_ablate);
  shared(c_ablate, true);

  nirgnn::app::SweepArgs sw;
  TrainFlags sflags;
  std::string values = "0.1,0.3,0.5,0.7,0.9";
  auto* c_sweep = app.add_subcommand("sweep", "Train and evaluate over a grid of lambda or gamma");
  c_sweep->add_option("--data", sw.data, "Shard directory")->required();
  c_sweep->add_option("--param", sw.param, "lambda or gamma")->check(CLI::IsMember({"lambda", "gamma"}));
  c_sweep->add_option("--values", values, "Comma-separated values in [0,1]");
  sflags.add(c_sweep);
  shared(c_sweep, true);

  auto* c_toy = app.add_subcommand("toy", "Write the built-in toy dataset as input files");
  shared(c_toy, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (c_prep->parsed()) {
      const auto lv = nirgnn::app::parse_size_list(levels, "--levels");
      if (lv.size() != 3) throw nirgnn::ConfigError("--levels needs three counts");
      prep.levels = {lv[0], lv[1], lv[2]};
      prep.out = out;
      if (seed) prep.seed = *seed;
      const auto ds = nirgnn::app::cmd_prepare(prep);
      std::cout << nirgnn::app::stats_table(ds.stats);
    } else if (c_train->parsed()) {
      tr.out = out;
      tr.config_path = config_path;
      tflags.into(tr.overrides);
      if (seed) tr.overrides["seed"] = std::to_string(*seed);
      if (!ablate_name.empty()) tr.ablation = nirgnn::parse_ablation(ablate_name);
      nirgnn::app::cmd_train(tr);
    } else if (c_eval->parsed()) {
      ev.out = out;
      ev.seed = seed;
      ev.threads = threads;
      eflags.into(ev);
      nirgnn::app::cmd_eval(ev, &std::cout);
    } else if (c_ablate->parsed()) {
      ab.train.out = out;
      ab.train.config_path = config_path;
      ab.train.ablation = nirgnn::parse_ablation(which);
      aflags.into(ab.train.overrides);
      if (seed) ab.train.overrides["seed"] = std::to_string(*seed);
      ab.eval.threads = threads;
      aeflags.into(ab.eval);
      nirgnn::app::cmd_ablate(ab, &std::cout);
    } else if (c_sweep->parsed()) {
      sw.out = out;
      sw.config_path = config_path;
      sw.values = nirgnn::app::parse_double_list(values, "--values");
      sflags.into(sw.overrides);
      if (seed) sw.overrides["seed"] = std::to_string(*seed);
      sw.threads = threads;
      for (const auto& row : nirgnn::app::cmd_sweep(sw)) {
        std::cout << sw.param << '=' << row.value << "  P@20=";
        if (row.p20) std::cout << *row.p20;
        else std::cout << "failed (" << row.failure << ')';
        std::cout << '\n';
      }
    } else if (c_toy->parsed()) {
      nirgnn::app::cmd_toy(out);
    }
  } catch (const nirgnn::Error& e) {
    spdlog::error("{}", e.what());
    return nirgnn::app::exit_code(e);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return 1;
  }
  return 0;
}
