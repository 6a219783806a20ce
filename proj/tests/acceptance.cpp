// Acceptance checks: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "nirgnn/app/commands.hpp"
#include "support/gradcheck.hpp"
#include "support/tempdir.hpp"

namespace ad = nirgnn::ad;
namespace app = nirgnn::app;
namespace ev = nirgnn::eval;
namespace fs = std::filesystem;
namespace ing = nirgnn::ingest;
using nirgnn::BetaSampler;
using nirgnn::ItemIndex;
using nirgnn::Model;
using nirgnn::TrainConfig;
using testing_support::TempDir;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Check {
  bool ok = true;
  std::ostringstream note;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) note << what;
    ok = ok && cond;
  }
};

const ing::Dataset& toy() {
  static const ing::Dataset ds = [] {
    const auto t = ing::make_toy_data();
    return ing::prepare_dataset(t.sessions, t.catalog, {});
  }();
  return ds;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(NIRGNN_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// ---------------------------------------------------------------- 1

void gradient_integrity(Check& c) {
  const auto t0 = Clock::now();
  ad::Rng rng(5);
  using testing_support::random_tensor;
  using testing_support::weighted_sum;
  const auto a = random_tensor(rng, {3, 4}), b = random_tensor(rng, {4, 2}), p = random_tensor(rng, {3, 4}, 0.5, 3.0);
  const std::vector<std::size_t> offs{0, 2, 3}, mem{0, 2, 1}, rows{2, 0, 2};
  const std::vector<std::pair<std::string, std::function<ad::Tensor()>>> ops{
      {"matmul", [&] { return weighted_sum(ad::matmul(a, b)); }},
      {"sigmoid", [&] { return weighted_sum(ad::sigmoid(a)); }},
      {"tanh", [&] { return weighted_sum(ad::tanh(a)); }},
      {"softplus", [&] { return weighted_sum(ad::softplus(a)); }},
      {"log", [&] { return weighted_sum(ad::log(p)); }},
      {"sqrt", [&] { return weighted_sum(ad::sqrt(p)); }},
      {"div", [&] { return weighted_sum(a / p); }},
      {"lgamma", [&] { return weighted_sum(ad::lgamma(p)); }},
      {"log_softmax", [&] { return weighted_sum(ad::log_softmax(a)); }},
      {"softmax", [&] { return weighted_sum(ad::softmax(a)); }},
      {"std", [&] { return weighted_sum(ad::reduce(ad::Reduce::std_population, a, 0)); }},
      {"gather_rows", [&] { return weighted_sum(ad::gather_rows(a, rows)); }},
      {"segment_mean", [&] { return weighted_sum(ad::segment_mean(a, offs, mem, 1)); }},
      {"concat", [&] { return weighted_sum(ad::concat(a, p)); }},
  };
  double op_worst = 0;
  for (const auto& [name, f] : ops) {
    const auto r = testing_support::gradcheck({a, b, p}, f);
    op_worst = std::max(op_worst, r.max_rel);
    c.expect(r.max_rel < 1e-4, "op " + name + " rel " + std::to_string(r.max_rel) + "; ");
  }

  TrainConfig cfg;
  cfg.d = 4;
  cfg.d_a = 4;
  Model m(toy().catalog, toy().attributes, cfg);
  const ing::Example ex{"g", {1, 2, 3}, 6, 0, 4};
  const std::vector<ItemIndex> cands{4, 6, 9, 15};
  std::vector<ad::Tensor> leaves;
  for (const char* n : {"enc.item_table", "enc.tax2", "enc.Wtax", "enc.ggnn.H", "enc.ggnn.Uo", "intent.W1",
                        "intent.W3", "zeroshot.theta.h_w", "model.W_I", "attr.tokens"}) {
    leaves.push_back(m.params().get(n));
  }
  const auto f = [&] {
    auto s = BetaSampler::at({0.35, 0.5, 0.65});
    return m.session_loss(ex, m.infer_all(), s, cands).total;
  };
  const auto r = testing_support::gradcheck(leaves, f, 1e-5, 2, 11);
  c.expect(r.checked == 20, "checked " + std::to_string(r.checked) + " parameters; ");
  c.expect(r.max_rel < 1e-3, "end-to-end rel " + std::to_string(r.max_rel) + "; ");
  const double secs = since(t0);
  c.expect(secs < 30, "took " + std::to_string(secs) + " s; ");
  c.note << "ops max rel " << op_worst << ", end-to-end max rel " << r.max_rel << " over " << r.checked
         << " parameters, " << secs << " s";
}

// ---------------------------------------------------------------- 2

void session_graph(Check& c) {
  const auto g = nirgnn::build_graph(std::vector<ItemIndex>{1, 2, 3, 1, 4});
  c.expect(g.out(0, 1) == 0.5, "revisit example out weight is not 0.5; ");
  std::mt19937_64 rng(77);
  std::size_t mismatches = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t len = 1 + rng() % 10, alphabet = 1 + rng() % 5;
    std::vector<ItemIndex> h(len);
    for (auto& x : h) x = 1 + rng() % alphabet;
    std::map<std::pair<ItemIndex, ItemIndex>, double> cnt;
    std::map<ItemIndex, double> outdeg, indeg;
    for (std::size_t k = 0; k + 1 < h.size(); ++k) {
      cnt[{h[k], h[k + 1]}] += 1;
      outdeg[h[k]] += 1;
      indeg[h[k + 1]] += 1;
    }
    const auto gr = nirgnn::build_graph(h);
    for (std::size_t i = 0; i < gr.size(); ++i) {
      for (std::size_t j = 0; j < gr.size(); ++j) {
        const ItemIndex a = gr.nodes[i], b = gr.nodes[j];
        const double o = cnt.count({a, b}) ? cnt[{a, b}] / outdeg[a] : 0.0;
        const double in = cnt.count({b, a}) ? cnt[{b, a}] / indeg[a] : 0.0;
        if (gr.out(i, j) != o || gr.in(i, j) != in) ++mismatches;
      }
    }
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + " entries differ from the counting oracle; ");
  c.note << "revisit example 0.5, 1000 random histories, " << mismatches << " mismatches";
}

// ---------------------------------------------------------------- 3

void beta_numerics(Check& c) {
  const double lg = ad::log_gamma(5.0);
  c.expect(std::abs(lg - std::log(24.0)) < 1e-10, "log_gamma(5) off; ");
  double worst = 0;
  const std::vector<double> shapes{0.5, 1, 2, 5};
  for (double a : shapes) {
    for (double b : shapes) {
      // x = sin^2(u) removes the endpoint singularities for shapes below 1.
      const int n = 200000;
      const double du = (M_PI / 2) / n;
      double s = 0;
      for (int i = 0; i < n; ++i) {
        const double u = (i + 0.5) * du;
        const double x = std::sin(u) * std::sin(u);
        s += std::exp(ad::beta_log_pdf(x, a, b)) * 2 * std::sin(u) * std::cos(u) * du;
      }
      worst = std::max(worst, std::abs(s - 1));
    }
  }
  c.expect(worst <= 1e-3, "pdf integral off by " + std::to_string(worst) + "; ");
  const double hand = std::exp(ad::beta_log_pdf(0.5, 2, 3));
  c.expect(std::abs(hand - 1.5) < 1e-10, "hand value " + std::to_string(hand) + "; ");
  ad::Rng rng(2024);
  double sum = 0;
  for (int i = 0; i < 100000; ++i) sum += ad::sample_beta(rng, 2, 3);
  const double mean = sum / 100000;
  c.expect(std::abs(mean - 0.4) <= 0.01, "sample mean " + std::to_string(mean) + "; ");
  c.note.precision(12);
  c.note << "log_gamma(5)-ln24 = " << lg - std::log(24.0) << ", max |integral-1| = " << worst << ", pdf(0.5;2,3) = "
         << hand << ", Beta(2,3) mean = " << mean;
}

// ---------------------------------------------------------------- 4

TrainConfig quick_config() {
  TrainConfig cfg;
  cfg.d = 16;
  cfg.d_a = 8;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  return cfg;
}

// Replays the training loop on cross-entropy alone, as an oracle for the
// per-step loss when the cross-entropy weight is 1.
std::vector<double> pure_ce_steps(const TrainConfig& cfg) {
  Model m(toy().catalog, toy().attributes, cfg);
  const auto& data = toy().train;
  ad::Adam adam({cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps});
  ad::Rng order_rng(ad::derive_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> steps;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      m.params().zero_grad();
      ad::Tape tape;
      ad::Recording rec(tape);
      const ad::Tensor c_all = m.infer_all();
      ad::Tensor sum;
      for (std::size_t k = b0; k < b1; ++k) {
        const auto& ex = data[order[k]];
        ad::Rng beta_rng(ad::derive_seed(cfg.beta_seed(), "beta", ex.session_id));
        ad::Rng neg_rng(ad::derive_seed(cfg.seed, "negatives", nirgnn::epoch_key(ex.session_id, epoch)));
        auto s = BetaSampler::sampled(beta_rng);
        const auto l = m.session_loss(ex, c_all, s, m.candidates(ex.history, ex.ground_truth, cfg.candidate_mode, &neg_rng));
        sum = sum.defined() ? sum + l.ce : l.ce;
      }
      const ad::Tensor loss = sum * (1.0 / static_cast<double>(b1 - b0));
      steps.push_back(loss.item());
      tape.backward(loss);
      adam.step(m.params());
    }
  }
  return steps;
}

void ablation_invariants(Check& c) {
  auto steps = [](TrainConfig cfg, const std::function<void(Model&)>& tweak = {}) {
    Model m(toy().catalog, toy().attributes, cfg);
    if (tweak) tweak(m);
    nirgnn::TrainStats st = nirgnn::train(m, toy().train);
    return std::make_pair(st.step_losses, m.params().to_arrays());
  };
  auto cfg = quick_config();
  cfg.lambda = 1.0;
  cfg.sampler_seed = 1;
  const auto l1 = steps(cfg);
  cfg.sampler_seed = 987654321;
  const auto l2 = steps(cfg);
  bool same = l1.first == l2.first && l1.second.size() == l2.second.size();
  for (std::size_t i = 0; same && i < l1.second.size(); ++i) same = l1.second[i].values == l2.second[i].values;
  c.expect(same, "lambda=1 differs across sampler seeds; ");

  cfg = quick_config();
  cfg.lambda = 0.0;
  const auto z1 = steps(cfg);
  const auto z2 = steps(cfg, [](Model& m) {
    for (const char* n : {"intent.W1", "intent.W2"}) {
      auto w = m.params().get(n).mutable_data();
      for (std::size_t i = 0; i < w.size(); ++i) w[i] += 0.5 * std::sin(1.0 + static_cast<double>(i));
    }
  });
  c.expect(z1.first == z2.first, "lambda=0 depends on W1/W2; ");

  cfg = quick_config();
  cfg.gamma = 1.0;
  const auto g1 = steps(cfg).first;
  const auto oracle = pure_ce_steps(cfg);
  double worst = g1.size() == oracle.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(g1.size(), oracle.size()); ++i) worst = std::max(worst, std::abs(g1[i] - oracle[i]));
  c.expect(worst == 0.0, "gamma=1 step loss differs from cross-entropy by " + std::to_string(worst) + "; ");
  c.note << l1.first.size() << " steps per run; lambda=1 seed-invariant, lambda=0 W1/W2-invariant, gamma=1 max |loss-ce| = "
         << worst << " over " << g1.size() << " steps";
}

// ---------------------------------------------------------------- 5

double bc_oracle(const std::vector<double>& v, const std::vector<double>& w) {
  auto probs = [](const std::vector<double>& x) {
    const double mx = *std::max_element(x.begin(), x.end());
    std::vector<double> p(x.size());
    double s = 0;
    for (std::size_t i = 0; i < x.size(); ++i) s += p[i] = std::exp(x[i] - mx);
    for (double& e : p) e /= s;
    return p;
  };
  const auto p = probs(v), q = probs(w);
  double rho = 0;
  for (std::size_t i = 0; i < p.size(); ++i) rho += std::sqrt(p[i] * q[i]);
  return -std::log(rho);
}

double bc_lib(const std::vector<double>& v, const std::vector<double>& w) {
  ad::NoGrad ng;
  const auto a = ad::Tensor::vector(v), b = ad::Tensor::vector(w);
  return nirgnn::bhattacharyya(a, b).item();
}

void bhattacharyya(Check& c) {
  ad::Rng rng(3);
  double worst_sym = 0, worst_self = 0, worst_ref = 0;
  bool in_range = true;
  for (int t = 0; t < 10000; ++t) {
    const std::size_t d = 1 + rng.below(8);
    const double scale = rng.uniform(0.1, 10.0);
    std::vector<double> v(d), w(d);
    for (std::size_t j = 0; j < d; ++j) {
      v[j] = rng.uniform(-scale, scale);
      w[j] = rng.uniform(-scale, scale);
    }
    const double rho = nirgnn::bhattacharyya_coefficient(v, w);
    in_range = in_range && rho > 0 && rho <= 1.0 + 1e-15;
    const double dvw = bc_lib(v, w);
    worst_sym = std::max(worst_sym, std::abs(dvw - bc_lib(w, v)));
    worst_self = std::max(worst_self, std::abs(bc_lib(v, v)));
    worst_ref = std::max(worst_ref, std::abs(dvw - bc_oracle(v, w)));
  }
  c.expect(in_range, "rho outside (0,1]; ");
  c.expect(worst_sym <= 1e-12, "asymmetry " + std::to_string(worst_sym) + "; ");
  c.expect(worst_self <= 1e-12, "BC(v,v) = " + std::to_string(worst_self) + "; ");
  // p = (0.5,0.5), q = (0.9,0.1): -ln(sqrt(.45)+sqrt(.05)).
  const double expected = -std::log(std::sqrt(0.45) + std::sqrt(0.05));
  const double hand = bc_lib({0.0, 0.0}, {std::log(0.9), std::log(0.1)});
  c.expect(std::abs(hand - expected) < 1e-6, "hand value " + std::to_string(hand) + "; ");
  c.note.precision(8);
  c.note << "10^4 pairs: max asymmetry " << worst_sym << ", max |BC(v,v)| " << worst_self << ", max |lib-oracle| "
         << worst_ref << "; hand case " << hand << " (closed form " << expected << ")";
}

// ---------------------------------------------------------------- 6

void toy_training(Check& c) {
  const auto t0 = Clock::now();
  const auto& ds = toy();
  c.expect(ds.stats.items == 20 && ds.train.size() == 50 && ds.test.size() == 10, "toy shape differs; ");
  Model m(ds.catalog, ds.attributes, TrainConfig{});
  const auto st = nirgnn::train(m, ds.train);
  bool mono = st.epochs.size() >= 10;
  for (std::size_t e = 1; mono && e < 10; ++e) mono = st.epochs[e].loss < st.epochs[e - 1].loss;
  c.expect(mono, "loss not monotone over the first 10 epochs; ");
  ev::EvalOptions opt;
  opt.ks = {1, 20};
  const auto r = ev::evaluate(m, ds.test, opt);
  const double p1 = r.report.p.at(1);
  c.expect(p1 >= 95.0, "P@1 = " + std::to_string(p1) + "; ");
  const double secs = since(t0);
  c.expect(secs < 60, "took " + std::to_string(secs) + " s; ");
  c.note << "P@1 = " << p1 << "%, loss " << st.epochs[0].loss << " -> " << st.epochs[9].loss << " over 10 epochs, "
         << secs << " s";
}

// ---------------------------------------------------------------- 7

void metric_oracles(Check& c) {
  std::mt19937_64 rng(11);
  double worst = 0;
  bool mono = true, mrr_le = true;
  for (int t = 0; t < 200; ++t) {
    const std::size_t sessions = 1 + rng() % 25;
    std::vector<ev::RankedResult> rs;
    std::vector<std::size_t> oracle_rank;
    for (std::size_t s = 0; s < sessions; ++s) {
      const std::size_t n = 1 + rng() % 40;
      std::vector<std::pair<ItemIndex, double>> sc;
      for (std::size_t i = 1; i <= n; ++i) sc.push_back({i, static_cast<double>(rng() % 9)});
      const ItemIndex gt = 1 + rng() % n;
      std::size_t ahead = 0;
      for (const auto& [i, v] : sc) ahead += v > sc[gt - 1].second || (v == sc[gt - 1].second && i < gt);
      oracle_rank.push_back(ahead + 1);
      std::shuffle(sc.begin(), sc.end(), rng);
      rs.push_back(ev::rank(sc, gt));
    }
    double pp = -1, pm = -1;
    for (std::size_t k = 1; k <= 45; ++k) {
      double hits = 0, rr = 0;
      for (std::size_t rk : oracle_rank) {
        if (rk <= k) {
          hits += 1;
          rr += 1.0 / static_cast<double>(rk);
        }
      }
      const double p = ev::precision_at_k(rs, k), m = ev::mrr_at_k(rs, k);
      worst = std::max({worst, std::abs(p - 100 * hits / sessions), std::abs(m - 100 * rr / sessions)});
      mono = mono && p >= pp && m >= pm;
      mrr_le = mrr_le && m <= p;
      pp = p;
      pm = m;
    }
  }
  c.expect(worst <= 1e-12, "max error " + std::to_string(worst) + "; ");
  c.expect(mono, "not monotone in k; ");
  c.expect(mrr_le, "MRR exceeds P; ");
  c.note << "200 configurations, k = 1..45, max |lib-oracle| = " << worst;
}

// ---------------------------------------------------------------- 8

void masking_protocol(Check& c) {
  const auto& ds = toy();
  std::size_t leaks = 0, scored = 0;
  for (const auto* split : {&ds.train, &ds.test}) {
    for (const auto& ex : *split) {
      leaks += std::count(ex.history.begin(), ex.history.end(), ex.ground_truth);
      const auto g = nirgnn::build_graph(ex.history);
      leaks += std::count(g.nodes.begin(), g.nodes.end(), ex.ground_truth);
    }
  }
  TrainConfig cfg = quick_config();
  Model m(ds.catalog, ds.attributes, cfg);
  const auto r = ev::evaluate(m, ds.test, {});
  for (std::size_t i = 0; i < r.rankings.size(); ++i) {
    const std::set<ItemIndex> hist(ds.test[i].history.begin(), ds.test[i].history.end());
    for (ItemIndex it : r.rankings[i].ranked) scored += hist.count(it);
  }
  c.expect(leaks == 0, std::to_string(leaks) + " ground truths inside their session; ");
  c.expect(scored == 0, std::to_string(scored) + " history items scored; ");
  c.note << ds.train.size() + ds.test.size() << " sessions checked, " << leaks << " leaks, " << scored
         << " history items scored";
}

// ---------------------------------------------------------------- 9

void determinism(Check& c) {
  TempDir tmp("nirgnn-accept");
  std::vector<std::map<std::string, std::string>> runs;
  for (int k = 0; k < 2; ++k) {
    const fs::path root = tmp / ("run" + std::to_string(k));
    const std::string in = (root / "in").string(), data = (root / "data").string(), out = (root / "model").string();
    int code = run_cli("toy --out " + in);
    code = code ? code
                : run_cli("prepare --sessions " + in + "/sessions.jsonl --catalog " + in + "/catalog.jsonl --out " +
                          data + " --seed 7");
    code = code ? code : run_cli("train --data " + data + " --out " + out + " --seed 7 --epochs 5");
    code = code ? code : run_cli("eval --data " + data + " --checkpoint " + out + " --seed 7");
    c.expect(code == 0, "run " + std::to_string(k) + " exited " + std::to_string(code) + "; ");
    runs.push_back({{"data.bin", slurp(fs::path(data) / "data.bin")},
                    {"index.json", slurp(fs::path(data) / "index.json")},
                    {"checkpoint.bin", slurp(fs::path(out) / "checkpoint.bin")},
                    {"metrics.json", slurp(fs::path(out) / "metrics.json")}});
  }
  std::size_t bytes = 0;
  for (const auto& [name, content] : runs[0]) {
    c.expect(!content.empty(), name + " missing; ");
    c.expect(content == runs[1][name], name + " differs; ");
    bytes += content.size();
  }
  c.note << "data.bin, index.json, checkpoint.bin, metrics.json identical across two runs (" << bytes << " bytes)";
}

// ---------------------------------------------------------------- 10

void sweeps(Check& c) {
  const auto t0 = Clock::now();
  TempDir tmp("nirgnn-sweep");
  app::cmd_toy(tmp.path().string());
  app::PrepareArgs pa;
  pa.sessions = (tmp / "sessions.jsonl").string();
  pa.catalog = (tmp / "catalog.jsonl").string();
  pa.out = (tmp / "data").string();
  app::cmd_prepare(pa);
  for (const std::string param : {"lambda", "gamma"}) {
    app::SweepArgs s;
    s.data = pa.out;
    s.out = (tmp / param).string();
    s.param = param;
    const auto rows = app::cmd_sweep(s);
    std::ifstream in(fs::path(s.out) / app::plotdata_file);
    std::string line;
    std::size_t lines = 0;
    std::getline(in, line);
    while (std::getline(in, line)) ++lines;
    std::size_t failed = 0;
    for (const auto& r : rows) failed += !r.p20.has_value();
    c.expect(lines == 5, param + " plot data has " + std::to_string(lines) + " rows; ");
    c.expect(failed == 0, param + " sweep had " + std::to_string(failed) + " failed values; ");
    c.note << param << " P@20:";
    for (const auto& r : rows) c.note << ' ' << (r.p20 ? *r.p20 : NAN);
    c.note << "; ";
  }
  const double secs = since(t0);
  c.expect(secs < 300, "took " + std::to_string(secs) + " s; ");
  c.note << secs << " s total";
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  const std::vector<std::pair<std::string, void (*)(Check&)>> criteria{
      {"gradient integrity", gradient_integrity},
      {"session graph construction", session_graph},
      {"Beta numerics", beta_numerics},
      {"fusion and loss ablation invariants", ablation_invariants},
      {"Bhattacharyya distance", bhattacharyya},
      {"toy training", toy_training},
      {"metric oracles", metric_oracles},
      {"masking protocol", masking_protocol},
      {"determinism", determinism},
      {"hyperparameter sweeps", sweeps},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.ok = false;
      c.note << "threw: " << e.what();
    }
    failures += !c.ok;
    std::cout << (c.ok ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first
              << "): " << c.note.str() << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
