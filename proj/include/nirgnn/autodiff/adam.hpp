#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "nirgnn/autodiff/params.hpp"

namespace nirgnn::ad {

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers are keyed by parameter name
/// and persist across steps.
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  const AdamOptions& options() const { return opts_; }
  std::size_t steps() const { return t_; }

  void step(ParamStore& params) {
    for (const auto& e : params.entries()) {
      if (e.trainable && !e.tensor.has_grad()) {
        throw ConfigError("no gradient for parameter '" + e.name + "'");
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    for (auto& e : params.entries()) {
      if (!e.trainable) continue;
      auto& mom = moments_[e.name];
      auto w = e.tensor.mutable_data();
      auto g = e.tensor.grad();
      if (mom.m.empty()) {
        mom.m.assign(w.size(), 0.0);
        mom.v.assign(w.size(), 0.0);
      }
      for (std::size_t i = 0; i < w.size(); ++i) {
        mom.m[i] = opts_.beta1 * mom.m[i] + (1.0 - opts_.beta1) * g[i];
        mom.v[i] = opts_.beta2 * mom.v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
        const double mhat = mom.m[i] / c1;
        const double vhat = mom.v[i] / c2;
        w[i] -= opts_.lr * mhat / (std::sqrt(vhat) + opts_.eps);
      }
    }
  }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamOptions opts_;
  std::size_t t_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace nirgnn::ad
