#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "nirgnn/app/commands.hpp"
#include "support/tempdir.hpp"

namespace app = nirgnn::app;
namespace fs = std::filesystem;
using testing_support::TempDir;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Run {
  int code;
  std::string err;
};

// Runs the CLI with stderr captured to a file.
Run cli(const std::string& args, const fs::path& scratch) {
  const fs::path log = scratch / "stderr.txt";
  const std::string cmd = std::string(NIRGNN_CLI_PATH) + " " + args + " 2> " + log.string() + " > /dev/null";
  const int status = std::system(cmd.c_str());
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(log)};
}

// Toy inputs and prepared shards shared by the tests in this file.
const fs::path& prepared() {
  static TempDir dir("nirgnn-app");
  static const bool done = [] {
    app::cmd_toy(dir.path().string());
    app::PrepareArgs a;
    a.sessions = (dir / "sessions.jsonl").string();
    a.catalog = (dir / "catalog.jsonl").string();
    a.out = (dir / "data").string();
    app::cmd_prepare(a);
    return true;
  }();
  (void)done;
  return dir.path();
}

app::KeyValues quick() { return {{"d", "8"}, {"d_a", "6"}, {"epochs", "2"}}; }

}  // namespace

TEST(Config, PrecedenceDefaultsThenFileThenOverrides) {
  TempDir tmp;
  {
    std::ofstream f(tmp / "c.txt");
    f << "# comment\nd = 16\nlambda=0.2\n\ngamma=0.4\n";
  }
  const auto cfg = app::resolve_config((tmp / "c.txt").string(), {{"lambda", "0.7"}}, nirgnn::Ablation::none);
  EXPECT_EQ(cfg.d, 16u);
  EXPECT_EQ(cfg.lambda, 0.7);
  EXPECT_EQ(cfg.gamma, 0.4);
  EXPECT_EQ(cfg.epochs, nirgnn::TrainConfig{}.epochs);
  const auto ab = app::resolve_config((tmp / "c.txt").string(), {}, nirgnn::Ablation::no_lzero);
  EXPECT_EQ(ab.gamma, 1.0);
}

TEST(Config, TextRoundTripAndErrors) {
  nirgnn::TrainConfig cfg;
  cfg.lambda = 0.123456789;
  cfg.eval_ks = {5, 10};
  cfg.sampler_seed = 17;
  std::istringstream in(app::config_text(cfg));
  nirgnn::TrainConfig back;
  app::apply_config(back, app::parse_key_values(in));
  EXPECT_EQ(app::config_text(back), app::config_text(cfg));
  EXPECT_EQ(back.lambda, cfg.lambda);

  nirgnn::TrainConfig x;
  EXPECT_THROW(app::apply_config(x, {{"no_such_key", "1"}}), nirgnn::ConfigError);
  EXPECT_THROW(app::apply_config(x, {{"lambda", "1.5"}}), nirgnn::ConfigError);
  EXPECT_THROW(app::apply_config(x, {{"d", "abc"}}), nirgnn::ConfigError);
  EXPECT_THROW(app::parse_size_list("5,x,10", "--k"), nirgnn::ConfigError);
  EXPECT_EQ(app::parse_size_list("5,10,20", "--k"), (std::vector<std::size_t>{5, 10, 20}));
}

TEST(ExitCodes, MapErrorKinds) {
  EXPECT_EQ(app::exit_code(nirgnn::IngestError("x")), 2);
  EXPECT_EQ(app::exit_code(nirgnn::TrainingError("x")), 3);
  EXPECT_EQ(app::exit_code(nirgnn::EvaluationError("x")), 4);
  EXPECT_EQ(app::exit_code(nirgnn::ConfigError("x")), 1);
}

TEST(Cli, MissingCatalogExitsTwoAndNamesFile) {
  TempDir tmp;
  const auto& in = prepared();
  const auto r = cli("prepare --sessions " + (in / "sessions.jsonl").string() + " --catalog " +
                         (tmp / "nope.jsonl").string() + " --out " + (tmp / "d").string(),
                     tmp.path());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("nope.jsonl"), std::string::npos) << r.err;
}

TEST(Cli, ParseErrorsExitOne) {
  TempDir tmp;
  EXPECT_EQ(cli("", tmp.path()).code, 1);
  EXPECT_EQ(cli("train --out x", tmp.path()).code, 1);
  EXPECT_EQ(cli("frobnicate", tmp.path()).code, 1);
  EXPECT_EQ(cli("--help", tmp.path()).code, 0);
}

TEST(Cli, EvalOnMissingCheckpointExitsFour) {
  TempDir tmp;
  const auto r = cli("eval --data " + (prepared() / "data").string() + " --checkpoint " + tmp.path().string(),
                     tmp.path());
  EXPECT_EQ(r.code, 4);
}

TEST(Cli, EndToEndWithCustomCutoffs) {
  TempDir tmp;
  const std::string data = (prepared() / "data").string();
  const std::string run = (tmp / "run").string();
  ASSERT_EQ(cli("train --data " + data + " --out " + run + " --d 8 --d-a 6 --epochs 2 --seed 3", tmp.path()).code, 0);
  ASSERT_EQ(cli("eval --data " + data + " --checkpoint " + run + " --k 5,10,20", tmp.path()).code, 0);
  const auto report = nirgnn::eval::read_metrics_json(fs::path(run) / app::metrics_file);
  EXPECT_EQ(report.ks, (std::vector<std::size_t>{5, 10, 20}));
  EXPECT_EQ(report.p.size(), 3u);
  std::ifstream rk(fs::path(run) / app::rankings_file);
  std::string line;
  std::size_t rows = 0;
  while (std::getline(rk, line)) ++rows;
  EXPECT_EQ(rows, report.sessions + 1);
  EXPECT_TRUE(fs::exists(fs::path(run) / "manifest.json"));
  EXPECT_TRUE(fs::exists(fs::path(run) / app::epoch_log_file));
}

TEST(Prepare, IdempotentShards) {
  TempDir tmp;
  app::PrepareArgs a;
  a.sessions = (prepared() / "sessions.jsonl").string();
  a.catalog = (prepared() / "catalog.jsonl").string();
  a.out = (tmp / "d").string();
  app::cmd_prepare(a);
  const auto first = app::sha256_file(tmp / "d" / nirgnn::ingest::shard_data_file);
  const auto index = slurp(tmp / "d" / nirgnn::ingest::shard_index_file);
  app::cmd_prepare(a);
  EXPECT_EQ(app::sha256_file(tmp / "d" / nirgnn::ingest::shard_data_file), first);
  EXPECT_EQ(slurp(tmp / "d" / nirgnn::ingest::shard_index_file), index);
  EXPECT_EQ(first, app::sha256_file(prepared() / "data" / nirgnn::ingest::shard_data_file));
}

TEST(Train, LambdaOneMatchesNoBetaAblation) {
  TempDir tmp;
  app::TrainArgs a;
  a.data = (prepared() / "data").string();
  a.overrides = quick();
  a.overrides["lambda"] = "1";
  a.out = (tmp / "lambda").string();
  app::cmd_train(a);
  a.overrides.erase("lambda");
  a.ablation = nirgnn::Ablation::no_beta;
  a.out = (tmp / "ablate").string();
  app::cmd_train(a);
  EXPECT_EQ(slurp(tmp / "lambda" / app::checkpoint_file), slurp(tmp / "ablate" / app::checkpoint_file));
  EXPECT_EQ(slurp(tmp / "lambda" / app::config_file), slurp(tmp / "ablate" / app::config_file));
}

TEST(Ablate, RejectsNone) {
  app::AblateArgs a;
  EXPECT_THROW(app::cmd_ablate(a), nirgnn::ConfigError);
}

TEST(Sweep, RowsSortedAndPlotDataWritten) {
  TempDir tmp;
  app::SweepArgs s;
  s.data = (prepared() / "data").string();
  s.out = (tmp / "sweep").string();
  s.param = "gamma";
  s.values = {0.9, 0.1};
  s.overrides = quick();
  const auto rows = app::cmd_sweep(s);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].value, 0.1);
  EXPECT_EQ(rows[1].value, 0.9);
  for (const auto& r : rows) EXPECT_TRUE(r.p20.has_value()) << r.failure;
  std::ifstream in(tmp / "sweep" / app::plotdata_file);
  std::string line;
  std::size_t n = 0;
  std::getline(in, line);
  EXPECT_EQ(line, "gamma,P@20,failure");
  while (std::getline(in, line)) ++n;
  EXPECT_EQ(n, 2u);
  EXPECT_TRUE(fs::exists(tmp / "sweep" / app::sweep_dir_name("gamma", 0.1) / app::checkpoint_file));
}

TEST(Sweep, SingleValueAndBadParam) {
  TempDir tmp;
  app::SweepArgs s;
  s.data = (prepared() / "data").string();
  s.out = (tmp / "sweep").string();
  s.values = {0.5};
  s.overrides = quick();
  EXPECT_EQ(app::cmd_sweep(s).size(), 1u);
  s.param = "lr";
  EXPECT_THROW(app::cmd_sweep(s), nirgnn::ConfigError);
  s.param = "lambda";
  s.values = {1.5};
  EXPECT_THROW(app::cmd_sweep(s), nirgnn::ConfigError);
}
