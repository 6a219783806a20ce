#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "nirgnn/autodiff.hpp"

namespace testing_support {

namespace ad = nirgnn::ad;

struct GradCheck {
  double max_rel = 0.0;
  std::size_t checked = 0;
  std::string worst;
};

inline double rel_error(double a, double n) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6});
}

/// Compares tape gradients of the scalar `f()` against central differences
/// for every element of every leaf (or `per_leaf` random elements when set).
inline GradCheck gradcheck(std::vector<ad::Tensor> leaves, const std::function<ad::Tensor()>& f, double h = 1e-5,
                           std::size_t per_leaf = std::numeric_limits<std::size_t>::max(), std::uint64_t seed = 1) {
  for (auto& l : leaves) {
    l.node()->requires_grad = true;
    l.zero_grad();
  }
  {
    ad::Tape tape;
    ad::Recording rec(tape);
    const ad::Tensor loss = f();
    tape.backward(loss);
  }
  std::vector<std::vector<double>> analytic;
  for (auto& l : leaves) analytic.emplace_back(l.grad().begin(), l.grad().end());

  GradCheck r;
  ad::Rng rng(seed);
  ad::NoGrad ng;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto w = leaves[li].mutable_data();
    std::vector<std::size_t> idx(w.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    if (per_leaf < idx.size()) {
      rng.shuffle(idx);
      idx.resize(per_leaf);
    }
    for (std::size_t i : idx) {
      const double keep = w[i];
      w[i] = keep + h;
      const double up = f().item();
      w[i] = keep - h;
      const double down = f().item();
      w[i] = keep;
      const double num = (up - down) / (2 * h);
      const double e = rel_error(analytic[li][i], num);
      ++r.checked;
      if (e > r.max_rel) {
        r.max_rel = e;
        r.worst = "leaf " + std::to_string(li) + "[" + std::to_string(i) + "] analytic " +
                  std::to_string(analytic[li][i]) + " numeric " + std::to_string(num);
      }
    }
  }
  return r;
}

inline ad::Tensor random_tensor(ad::Rng& rng, ad::Shape shape, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(ad::shape_numel(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return ad::Tensor::from(std::move(shape), std::move(v), true);
}

/// sum(t * R) for a fixed random R, so every output element matters.
inline ad::Tensor weighted_sum(const ad::Tensor& t, std::uint64_t seed = 99) {
  ad::Rng rng(seed);
  std::vector<double> w(t.numel());
  for (double& x : w) x = rng.uniform(-1.0, 1.0);
  return ad::sum(t * ad::Tensor::from(t.shape(), w));
}

}  // namespace testing_support
