#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nirgnn/autodiff.hpp"
#include "nirgnn/encoder.hpp"
#include "nirgnn/ingest/dataset.hpp"
#include "nirgnn/intent.hpp"
#include "nirgnn/session_graph.hpp"
#include "nirgnn/zeroshot.hpp"

namespace nirgnn {

enum class CandidateMode { full_vocab, sampled };

inline const char* to_string(CandidateMode m) { return m == CandidateMode::full_vocab ? "full_vocab" : "sampled"; }

struct TrainConfig {
  std::size_t d = 64;
  std::size_t d_a = 32;
  std::size_t h = 0;  // 0 means 2d
  std::size_t steps = 1;
  double lambda = 0.5;
  double gamma = 0.3;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 42;
  std::optional<std::uint64_t> sampler_seed;  // Beta draws; defaults to seed
  CandidateMode candidate_mode = CandidateMode::full_vocab;
  std::size_t negatives = 99;
  std::vector<std::size_t> eval_ks{10, 20};
  bool propagate_taxonomy = false;

  std::size_t hidden() const { return h == 0 ? 2 * d : h; }
  std::uint64_t beta_seed() const { return sampler_seed.value_or(seed); }

  void validate() const {
    check_lambda(lambda);
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("gamma must lie in [0,1], got " + std::to_string(gamma));
    if (d == 0 || d_a == 0 || steps == 0 || batch_size == 0) throw ConfigError("sizes must be positive");
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
    if (candidate_mode == CandidateMode::sampled && negatives == 0) throw ConfigError("sampled mode needs negatives > 0");
    for (auto k : eval_ks) {
      if (k == 0) throw ConfigError("evaluation cut-offs must be >= 1");
    }
  }
};

enum class Ablation { none, no_alpha, no_beta, no_lzero };

inline Ablation parse_ablation(const std::string& s) {
  if (s == "none") return Ablation::none;
  if (s == "no_alpha") return Ablation::no_alpha;
  if (s == "no_beta") return Ablation::no_beta;
  if (s == "no_lzero") return Ablation::no_lzero;
  throw ConfigError("unknown ablation '" + s + "' (expected no_alpha, no_beta or no_lzero)");
}

inline const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::no_alpha: return "no_alpha";
    case Ablation::no_beta: return "no_beta";
    case Ablation::no_lzero: return "no_lzero";
    default: return "none";
  }
}

/// no_alpha sets lambda = 0, no_beta sets lambda = 1, no_lzero sets gamma = 1.
inline TrainConfig ablate(TrainConfig cfg, Ablation which) {
  switch (which) {
    case Ablation::no_alpha: cfg.lambda = 0.0; break;
    case Ablation::no_beta: cfg.lambda = 1.0; break;
    case Ablation::no_lzero: cfg.gamma = 1.0; break;
    case Ablation::none: break;
  }
  return cfg;
}

struct SessionLoss {
  ad::Tensor ce;
  std::optional<ad::Tensor> lzero;  // absent when gamma == 1
  ad::Tensor total;
  ad::Tensor probs;  // softmax over candidates
  std::vector<ItemIndex> candidates;
  std::size_t gt_pos = 0;
};

/// -log(softmax(logits)[gt]), with the probability floored at 1e-300.
inline ad::Tensor cross_entropy(const ad::Tensor& logits, std::size_t gt) {
  static const double log_floor = std::log(1e-300);
  const ad::Tensor lp = ad::pick(ad::log_softmax(logits), gt);
  if (lp.item() < log_floor) {
    ++ad::counters().log_clamp;
    return ad::Tensor::scalar(-log_floor);
  }
  return -lp;
}

/// L = gamma L_ce + (1 - gamma) L_zero. gamma == 1 returns L_ce itself.
inline ad::Tensor joint_loss(const ad::Tensor& ce, const std::optional<ad::Tensor>& lzero, double gamma) {
  if (gamma == 1.0 || !lzero) return ce;
  return gamma * ce + (1.0 - gamma) * *lzero;
}

/// All trainable state plus the fixed catalog layout it reads.
class Model {
 public:
  Model(const ingest::ItemCatalog& catalog, const ingest::AttributeTable& attrs, TrainConfig cfg)
      : cfg_(std::move(cfg)), paths_(catalog.paths), layout_(attrs), item_count_(catalog.size()) {
    cfg_.validate();
    if (layout_.mode == ingest::AttributeMode::pretrained) cfg_.d_a = layout_.dim;
    EncoderSizes sizes;
    sizes.items = catalog.size();
    for (std::size_t l = 0; l < 3; ++l) sizes.levels[l] = catalog.taxonomy[l].size();
    sizes.d = cfg_.d;
    sizes.steps = cfg_.steps;
    enc_ = EncoderParams::create(params_, sizes, cfg_.seed);
    intent_ = IntentParams::create(params_, cfg_.d, cfg_.seed);
    theta_ = ThetaParams::create(params_, cfg_.d_a, cfg_.hidden(), cfg_.d, cfg_.seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(cfg_.d));
    W_I_ = params_.add("model.W_I", ad::init_uniform({2 * cfg_.d, cfg_.d}, bound, cfg_.seed, "model.W_I"));
    attrs_.layout = &layout_;
    if (layout_.mode == ingest::AttributeMode::pretrained) {
      attrs_.tokens = ad::Tensor::matrix(layout_.rows, layout_.dim, layout_.frozen);
    } else {
      attrs_.tokens = params_.add("attr.tokens", ad::init_normal({layout_.rows, cfg_.d_a}, 0.1, cfg_.seed, "attr.tokens"));
    }
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  ad::ParamStore& params() { return params_; }
  const ad::ParamStore& params() const { return params_; }
  const TrainConfig& config() const { return cfg_; }
  TrainConfig& mutable_config() { return cfg_; }
  const EncoderParams& encoder() const { return enc_; }
  const IntentParams& intent() const { return intent_; }
  const ThetaParams& theta_params() const { return theta_; }
  const AttributeEncoder& attributes() const { return attrs_; }
  const ad::Tensor& W_I() const { return W_I_; }
  std::span<const TaxonomyIds> paths() const { return paths_; }
  std::size_t item_count() const { return item_count_; }  // including UNKNOWN

  struct Forward {
    SessionEmbedding emb;
    IntentOutput intent;
  };

  Forward forward(const SessionGraph& g, BetaSampler& sampler) const {
    Forward f;
    f.emb = embed_session(g, enc_, paths_, cfg_.propagate_taxonomy);
    f.intent = compute_intent(f.emb.v, f.emb.t, g.last_node, intent_, cfg_.lambda, sampler);
    return f;
  }

  /// theta(atr) for every real item; row r holds item r + 1.
  ad::Tensor infer_all() const {
    std::vector<ItemIndex> all(item_count_ - 1);
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i + 1;
    return infer_items(attrs_, theta_, all);
  }

  /// logits_i = (I W_I) c_i for rows c_i of `c`.
  ad::Tensor logits(const ad::Tensor& I, const ad::Tensor& c) const {
    return ad::matmul(ad::matmul(I, W_I_), ad::transpose(c));
  }

  /// Item-id-sorted candidates: every real item outside the history, or the
  /// ground truth plus `negatives` uniform non-history items.
  std::vector<ItemIndex> candidates(std::span<const ItemIndex> history, ItemIndex gt, CandidateMode mode,
                                    ad::Rng* rng = nullptr) const {
    std::vector<bool> excluded(item_count_, false);
    excluded[0] = true;
    for (ItemIndex i : history) {
      if (i >= item_count_) throw LookupError("history item " + std::to_string(i) + " outside the catalog");
      excluded[i] = true;
    }
    std::vector<ItemIndex> pool;
    for (ItemIndex i = 1; i < item_count_; ++i) {
      if (!excluded[i]) pool.push_back(i);
    }
    if (mode == CandidateMode::full_vocab) return pool;
    if (!rng) throw ConfigError("sampled candidates need an rng");
    std::vector<ItemIndex> others;
    for (ItemIndex i : pool) {
      if (i != gt) others.push_back(i);
    }
    rng->shuffle(others);
    others.resize(std::min(others.size(), cfg_.negatives));
    others.push_back(gt);
    std::sort(others.begin(), others.end());
    return others;
  }

  /// Forward, candidate scoring and joint loss for one example. `c_all` is
  /// infer_all() computed on the same tape.
  SessionLoss session_loss(const ingest::Example& ex, const ad::Tensor& c_all, BetaSampler& sampler,
                           std::vector<ItemIndex> cands) const {
    const SessionGraph g = build_graph(ex.history, item_count_);
    const Forward f = forward(g, sampler);
    SessionLoss out;
    out.candidates = std::move(cands);
    if (out.candidates.empty()) throw DomainError("session '" + ex.session_id + "' has no candidates");
    auto gt = std::find(out.candidates.begin(), out.candidates.end(), ex.ground_truth);
    if (gt == out.candidates.end()) {
      throw ProtocolError("ground truth of session '" + ex.session_id + "' is not among its candidates");
    }
    out.gt_pos = static_cast<std::size_t>(gt - out.candidates.begin());
    std::vector<std::size_t> rows(out.candidates.size());
    for (std::size_t k = 0; k < rows.size(); ++k) rows[k] = out.candidates[k] - 1;
    const ad::Tensor z = logits(f.intent.I, ad::gather_rows(c_all, rows));
    out.probs = ad::softmax(z);
    out.ce = cross_entropy(z, out.gt_pos);
    if (cfg_.gamma < 1.0) out.lzero = l_zero(f.emb.v, attrs_.embed(g.nodes), theta_);
    out.total = joint_loss(out.ce, out.lzero, cfg_.gamma);
    return out;
  }

  /// Candidate scores (logits) for evaluation, in candidate order.
  std::vector<double> score(const SessionGraph& g, std::span<const ItemIndex> cands, const ad::Tensor& c_all,
                            BetaSampler& sampler) const {
    const Forward f = forward(g, sampler);
    std::vector<std::size_t> rows(cands.size());
    for (std::size_t k = 0; k < rows.size(); ++k) rows[k] = cands[k] - 1;
    const ad::Tensor z = logits(f.intent.I, ad::gather_rows(c_all, rows));
    return {z.data().begin(), z.data().end()};
  }

  void save(const std::string& path) const { ad::save_container(path, params_.to_arrays()); }

  void load(const std::string& path) { params_.load_arrays(ad::load_container(path)); }

 private:
  TrainConfig cfg_;
  std::vector<TaxonomyIds> paths_;
  ingest::AttributeTable layout_;
  std::size_t item_count_;
  ad::ParamStore params_;
  EncoderParams enc_;
  IntentParams intent_;
  ThetaParams theta_;
  ad::Tensor W_I_;
  AttributeEncoder attrs_;
};

struct EpochLog {
  std::size_t epoch = 0;
  double loss_ce = 0.0;
  double loss_zero = 0.0;
  double loss = 0.0;
  double seconds = 0.0;
};

struct TrainStats {
  std::vector<EpochLog> epochs;
  std::vector<double> step_losses;  // mean batch loss per optimizer step
  std::uint64_t beta_draws = 0;
};

using EpochCallback = std::function<void(const EpochLog&)>;

inline std::string epoch_key(const std::string& session_id, std::size_t epoch) {
  return session_id + "#" + std::to_string(epoch);
}

/// Minibatch training: sessions are shuffled each epoch, every batch runs
/// on one tape and takes one Adam step on the mean session loss.
inline TrainStats train(Model& model, const std::vector<ingest::Example>& data, const EpochCallback& on_epoch = {}) {
  if (data.empty()) throw TrainingError("training split is empty");
  const TrainConfig& cfg = model.config();
  ad::Adam adam({cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps});
  ad::Rng order_rng(ad::derive_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  TrainStats stats;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    order_rng.shuffle(order);
    double sum_ce = 0.0, sum_zero = 0.0, sum_loss = 0.0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      model.params().zero_grad();
      ad::Tape tape;
      ad::Recording rec(tape);
      const ad::Tensor c_all = model.infer_all();
      ad::Tensor batch_sum;
      for (std::size_t k = b0; k < b1; ++k) {
        const auto& ex = data[order[k]];
        ad::Rng beta_rng(ad::derive_seed(cfg.beta_seed(), "beta", ex.session_id));
        ad::Rng neg_rng(ad::derive_seed(cfg.seed, "negatives", epoch_key(ex.session_id, epoch)));
        BetaSampler sampler = BetaSampler::sampled(beta_rng);
        SessionLoss l;
        try {
          auto cands = model.candidates(ex.history, ex.ground_truth, cfg.candidate_mode, &neg_rng);
          l = model.session_loss(ex, c_all, sampler, std::move(cands));
        } catch (const DomainError& e) {
          throw TrainingError("training diverged at session '" + ex.session_id + "' (epoch " +
                              std::to_string(epoch) + "): " + e.what());
        }
        if (!std::isfinite(l.total.item())) {
          throw TrainingError("non-finite loss at session '" + ex.session_id + "'");
        }
        stats.beta_draws += sampler.draws;
        sum_ce += l.ce.item();
        if (l.lzero) sum_zero += l.lzero->item();
        sum_loss += l.total.item();
        batch_sum = batch_sum.defined() ? batch_sum + l.total : l.total;
      }
      const ad::Tensor batch_loss = batch_sum * (1.0 / static_cast<double>(b1 - b0));
      stats.step_losses.push_back(batch_loss.item());
      tape.backward(batch_loss);
      for (const auto& e : model.params().entries()) {
        for (double g : e.tensor.grad()) {
          if (!std::isfinite(g)) throw TrainingError("non-finite gradient in '" + e.name + "' at epoch " + std::to_string(epoch));
        }
      }
      adam.step(model.params());
    }
    const double n = static_cast<double>(data.size());
    EpochLog log{epoch, sum_ce / n, sum_zero / n, sum_loss / n,
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()};
    stats.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  return stats;
}

}  // namespace nirgnn
