#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nirgnn/autodiff.hpp"

namespace nirgnn {

struct IntentParams {
  ad::Tensor W1, W2, W3;  // 2d x 1 each

  static IntentParams create(ad::ParamStore& store, std::size_t d, std::uint64_t seed) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(d));
    auto uniform = [&](const std::string& name) {
      return store.add(name, ad::init_uniform({2 * d, 1}, bound, seed, name));
    };
    IntentParams p;
    p.W1 = uniform("intent.W1");
    p.W2 = uniform("intent.W2");
    p.W3 = uniform("intent.W3");
    return p;
  }
};

inline constexpr double beta_std_eps = 1e-8;
inline constexpr double beta_pdf_floor = 1e-300;

inline void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) {
    throw ConfigError("lambda must lie in [0,1], got " + std::to_string(lambda));
  }
}

struct AlphaResult {
  ad::Tensor intent;  // 1 x 2d
  ad::Tensor gates;   // n x 1
};

/// g_i = sigmoid(x_i W1 + x_last W2); I_alpha = sum_i g_i x_i, with x_i = v_i ⊕ t_i.
inline AlphaResult alpha_intent(const ad::Tensor& x, std::size_t last, const ad::Tensor& W1, const ad::Tensor& W2) {
  if (x.rank() != 2 || W1.rows() != x.cols() || W2.rows() != x.cols()) {
    throw DimensionError("alpha_intent: nodes " + ad::shape_str(x.shape()) + " vs W1 " + ad::shape_str(W1.shape()) +
                         ", W2 " + ad::shape_str(W2.shape()));
  }
  if (last >= x.rows()) throw LookupError("alpha_intent: last node index out of range");
  AlphaResult r;
  r.gates = ad::sigmoid(ad::matmul(x, W1) + ad::matmul(ad::gather_row(x, last), W2));
  r.intent = ad::matmul(ad::transpose(r.gates), x);
  return r;
}

/// How the Beta draw x_i is chosen.
struct BetaSampler {
  enum class Mode { sampled, mean, fixed };
  Mode mode = Mode::mean;
  ad::Rng* rng = nullptr;        // sampled mode
  std::vector<double> fixed;     // fixed mode, one per node
  std::uint64_t draws = 0;       // sample_beta calls made

  static BetaSampler sampled(ad::Rng& r) { return {Mode::sampled, &r, {}, 0}; }
  static BetaSampler mean_mode() { return {Mode::mean, nullptr, {}, 0}; }
  static BetaSampler at(std::vector<double> xs) { return {Mode::fixed, nullptr, std::move(xs), 0}; }
};

struct BetaWeights {
  ad::Tensor b;            // n x 1, Beta(a_i, c_i) density at x_i
  ad::Tensor a, c;         // n x 1 shape parameters
  std::vector<double> x;   // the points used
};

/// a_i = softplus(mean(softplus(v_i))), c_i likewise from t_i; b_i is the
/// Beta(a_i, c_i) pdf at x_i. x_i is treated as a constant.
inline BetaWeights beta_weights(const ad::Tensor& v, const ad::Tensor& t, BetaSampler& sampler) {
  if (v.rank() != 2 || v.shape() != t.shape()) {
    throw DimensionError("beta_weights: v " + ad::shape_str(v.shape()) + " vs t " + ad::shape_str(t.shape()));
  }
  const std::size_t n = v.rows();
  BetaWeights w;
  w.a = ad::softplus(ad::mean(ad::softplus(v), 1));
  w.c = ad::softplus(ad::mean(ad::softplus(t), 1));
  w.x.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = w.a[i], c = w.c[i];
    switch (sampler.mode) {
      case BetaSampler::Mode::sampled:
        if (!sampler.rng) throw ConfigError("sampled Beta mode needs an rng");
        w.x[i] = ad::sample_beta(*sampler.rng, a, c);
        ++sampler.draws;
        break;
      case BetaSampler::Mode::mean:
        w.x[i] = a / (a + c);
        break;
      case BetaSampler::Mode::fixed:
        if (sampler.fixed.size() != n) throw DimensionError("beta_weights: fixed points do not match node count");
        w.x[i] = sampler.fixed[i];
        break;
    }
    if (!(w.x[i] > 0.0 && w.x[i] < 1.0)) throw DomainError("beta_weights: x outside (0,1)");
  }
  std::vector<double> lx(n), l1x(n);
  for (std::size_t i = 0; i < n; ++i) {
    lx[i] = std::log(w.x[i]);
    l1x[i] = std::log1p(-w.x[i]);
  }
  const ad::Tensor log_x = ad::Tensor::matrix(n, 1, lx);
  const ad::Tensor log_1mx = ad::Tensor::matrix(n, 1, l1x);
  const ad::Tensor log_pdf = ad::lgamma(w.a + w.c) - ad::lgamma(w.a) - ad::lgamma(w.c) + (w.a - 1.0) * log_x +
                             (w.c - 1.0) * log_1mx;
  w.b = ad::clamp_min(ad::exp(log_pdf), beta_pdf_floor, &ad::counters().pdf_underflow);
  return w;
}

struct BetaIntentResult {
  ad::Tensor intent;  // 1 x 2d
  ad::Tensor beta;    // n x 1
};

/// v'_i = b_i x_i + b_last x_last; m = mean_j b_j x_j; s = std of b;
/// beta_i = ((v'_i - m) / (s + eps)) W3; I_beta = sum_i beta_i x_i.
inline BetaIntentResult beta_intent(const ad::Tensor& x, const ad::Tensor& b, std::size_t last, const ad::Tensor& W3) {
  if (x.rank() != 2 || b.rows() != x.rows() || b.cols() != 1 || W3.rows() != x.cols()) {
    throw DimensionError("beta_intent: nodes " + ad::shape_str(x.shape()) + ", b " + ad::shape_str(b.shape()) +
                         ", W3 " + ad::shape_str(W3.shape()));
  }
  if (last >= x.rows()) throw LookupError("beta_intent: last node index out of range");
  const ad::Tensor xb = b * x;
  const ad::Tensor shifted = xb + ad::gather_row(xb, last);
  const ad::Tensor m = ad::mean(xb, 0);
  const ad::Tensor s = ad::std_population(b) + beta_std_eps;
  BetaIntentResult r;
  r.beta = ad::matmul((shifted - m) / s, W3);
  r.intent = ad::matmul(ad::transpose(r.beta), x);
  return r;
}

/// I = lambda I_alpha + (1 - lambda) I_beta.
inline ad::Tensor fuse(const ad::Tensor& i_alpha, const ad::Tensor& i_beta, double lambda) {
  check_lambda(lambda);
  return lambda * i_alpha + (1.0 - lambda) * i_beta;
}

struct IntentOutput {
  ad::Tensor I;
  std::optional<AlphaResult> alpha;  // absent when lambda == 0
  std::optional<BetaWeights> weights;
  std::optional<BetaIntentResult> beta;  // absent when lambda == 1
};

/// Full intent block over node embeddings v, t (n x d each). A path whose
/// weight is zero is not evaluated, so it neither reads its parameters nor
/// draws from the sampler.
inline IntentOutput compute_intent(const ad::Tensor& v, const ad::Tensor& t, std::size_t last, const IntentParams& p,
                                   double lambda, BetaSampler& sampler) {
  check_lambda(lambda);
  const ad::Tensor x = ad::concat(v, t);
  IntentOutput out;
  if (lambda > 0.0) out.alpha = alpha_intent(x, last, p.W1, p.W2);
  if (lambda < 1.0) {
    out.weights = beta_weights(v, t, sampler);
    out.beta = beta_intent(x, out.weights->b, last, p.W3);
  }
  if (lambda == 1.0) {
    out.I = out.alpha->intent;
  } else if (lambda == 0.0) {
    out.I = out.beta->intent;
  } else {
    out.I = fuse(out.alpha->intent, out.beta->intent, lambda);
  }
  return out;
}

}  // namespace nirgnn
