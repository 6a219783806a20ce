#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nirgnn/autodiff/special.hpp"
#include "nirgnn/autodiff/tensor.hpp"

// Differentiable operations over Tensor. Everything is rank <= 2; a rank-1
// tensor behaves as a single row. Binary elementwise ops broadcast any
// dimension of extent 1.

namespace nirgnn::ad {

namespace detail {

struct Dims {
  std::size_t r, c;
};

inline Dims dims2(const Tensor& t) {
  if (t.rank() > 2) return {1, t.numel()};
  return {t.rows(), t.cols()};
}

struct Broadcast {
  std::size_t rows, cols;
  Dims a, b;
  Shape out;

  std::size_t ia(std::size_t i, std::size_t j) const {
    return (a.r == 1 ? 0 : i) * a.c + (a.c == 1 ? 0 : j);
  }
  std::size_t ib(std::size_t i, std::size_t j) const {
    return (b.r == 1 ? 0 : i) * b.c + (b.c == 1 ? 0 : j);
  }
};

inline Broadcast broadcast(const Tensor& a, const Tensor& b, std::string_view op) {
  Broadcast bc{};
  if (a.shape() == b.shape()) {
    bc.a = bc.b = dims2(a);
    bc.rows = bc.a.r;
    bc.cols = bc.a.c;
    bc.out = a.shape();
    return bc;
  }
  bc.a = a.numel() == 1 ? Dims{1, 1} : dims2(a);
  bc.b = b.numel() == 1 ? Dims{1, 1} : dims2(b);
  auto join = [&](std::size_t x, std::size_t y) -> std::size_t {
    if (x == y || y == 1) return x;
    if (x == 1) return y;
    throw DimensionError(std::string(op) + ": cannot broadcast " + shape_str(a.shape()) + " with " +
                         shape_str(b.shape()));
  };
  bc.rows = join(bc.a.r, bc.b.r);
  bc.cols = join(bc.a.c, bc.b.c);
  if (bc.a.r == bc.rows && bc.a.c == bc.cols) {
    bc.out = a.shape();
  } else if (bc.b.r == bc.rows && bc.b.c == bc.cols) {
    bc.out = b.shape();
  } else {
    bc.out = {bc.rows, bc.cols};
  }
  return bc;
}

template <class F, class DA, class DB>
Tensor binary(std::string_view op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  const Broadcast bc = broadcast(a, b, op);
  std::vector<double> out(bc.rows * bc.cols);
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < bc.rows; ++i) {
    for (std::size_t j = 0; j < bc.cols; ++j) {
      out[i * bc.cols + j] = f(av[bc.ia(i, j)], bv[bc.ib(i, j)]);
    }
  }
  return make_result(op, bc.out, std::move(out), {a, b}, [bc, da, db](Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    auto ga = sink(self, 0);
    auto gb = sink(self, 1);
    for (std::size_t i = 0; i < bc.rows; ++i) {
      for (std::size_t j = 0; j < bc.cols; ++j) {
        const std::size_t k = i * bc.cols + j;
        const double xv = x[bc.ia(i, j)];
        const double yv = y[bc.ib(i, j)];
        const double g = self.grad[k];
        if (!ga.empty()) ga[bc.ia(i, j)] += g * da(xv, yv, self.value[k]);
        if (!gb.empty()) gb[bc.ib(i, j)] += g * db(xv, yv, self.value[k]);
      }
    }
  });
}

template <class F, class D>
Tensor unary(std::string_view op, const Tensor& a, F f, D d) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  return make_result(op, a.shape(), std::move(out), {a}, [d](Node& self) {
    auto ga = sink(self, 0);
    const auto& x = self.parents[0]->value;
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += self.grad[i] * d(x[i], self.value[i]);
  });
}

inline void require_rank2(const Tensor& t, std::string_view op) {
  if (t.rank() > 2) {
    throw DimensionError(std::string(op) + " expects rank <= 2, got " + shape_str(t.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------- elementwise

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
      [](double, double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
      [](double x, double, double) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  for (double v : b.data()) {
    if (v == 0.0) throw DomainError("div: division by zero");
  }
  return detail::binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; }, [](double x, double y, double) { return -x / (y * y); });
}

inline Tensor neg(const Tensor& a) {
  return detail::unary(
      "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

inline Tensor scale(const Tensor& a, double s) {
  return detail::unary(
      "scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Tensor add_scalar(const Tensor& a, double s) {
  return detail::unary(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Tensor sigmoid(const Tensor& a) {
  return detail::unary(
      "sigmoid", a,
      [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor tanh(const Tensor& a) {
  return detail::unary(
      "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

/// log(1 + e^x), evaluated without overflow.
inline double softplus_value(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline Tensor softplus(const Tensor& a) {
  return detail::unary(
      "softplus", a, softplus_value, [](double x, double) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
  }
  return detail::unary(
      "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor sqrt(const Tensor& a) {
  for (double v : a.data()) {
    if (!(v > 0.0)) throw DomainError("sqrt of non-positive value " + std::to_string(v));
  }
  return detail::unary(
      "sqrt", a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

inline Tensor square(const Tensor& a) {
  return detail::unary(
      "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// ln Gamma(x) elementwise; the derivative is the digamma function.
inline Tensor lgamma(const Tensor& a) {
  return detail::unary("lgamma", a, log_gamma, [](double x, double) { return digamma(x); });
}

/// max(x, floor); clamped entries pass no gradient and are tallied.
inline Tensor clamp_min(const Tensor& a, double floor, std::atomic<std::uint64_t>* tally = nullptr) {
  std::uint64_t clamped = 0;
  for (double v : a.data()) clamped += v < floor ? 1 : 0;
  if (tally && clamped) *tally += clamped;
  return detail::unary(
      "clamp_min", a, [floor](double x) { return x < floor ? floor : x; },
      [floor](double x, double) { return x < floor ? 0.0 : 1.0; });
}

/// -log(min(x, 1)) where x > eps, else 0. Gradient vanishes on both clamps.
inline Tensor neg_log_clamped(const Tensor& a, double eps) {
  return detail::unary(
      "neg_log_clamped", a,
      [eps](double x) {
        if (!(x > eps) || x >= 1.0) return 0.0;
        return -std::log(x);
      },
      [eps](double x, double) {
        if (!(x > eps) || x >= 1.0) return 0.0;
        return -1.0 / x;
      });
}

/// Stops gradient flow; the result is a constant copy.
inline Tensor detach(const Tensor& a) {
  return Tensor::from(a.shape(), std::vector<double>(a.data().begin(), a.data().end()));
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return add_scalar(neg(a), s); }

// ---------------------------------------------------------------- linear algebra

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank2(a, "matmul");
  detail::require_rank2(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = &bv[p * n];
      double* orow = &out[i * n];
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  }
  return detail::make_result("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    const auto& x = self.parents[0]->value;
    const auto& y = self.parents[1]->value;
    const auto& g = self.grad;
    auto ga = detail::sink(self, 0);
    auto gb = detail::sink(self, 1);
    if (!ga.empty()) {
      // dA = G * B^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * y[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (!gb.empty()) {
      // dB = A^T * G
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double xv = x[i * k + p];
          if (xv == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += xv * g[i * n + j];
        }
      }
    }
  });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank2(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  const auto av = a.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
  return detail::make_result("transpose", {c, r}, std::move(out), {a}, [r, c](Node& self) {
    auto ga = detail::sink(self, 0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j * r + i];
  });
}

// ---------------------------------------------------------------- reductions

enum class Reduce { sum, mean, std_population, max };

namespace detail {

inline double reduce_values(Reduce op, std::span<const double> v, std::size_t stride, std::size_t count) {
  double acc = 0.0;
  switch (op) {
    case Reduce::sum:
    case Reduce::mean:
      for (std::size_t i = 0; i < count; ++i) acc += v[i * stride];
      return op == Reduce::mean ? acc / static_cast<double>(count) : acc;
    case Reduce::std_population: {
      double mean = 0.0;
      for (std::size_t i = 0; i < count; ++i) mean += v[i * stride];
      mean /= static_cast<double>(count);
      for (std::size_t i = 0; i < count; ++i) {
        const double d = v[i * stride] - mean;
        acc += d * d;
      }
      return std::sqrt(acc / static_cast<double>(count));
    }
    case Reduce::max: {
      acc = v[0];
      for (std::size_t i = 1; i < count; ++i) acc = std::max(acc, v[i * stride]);
      return acc;
    }
  }
  return acc;
}

// Adds g * d(out)/d(v_i) into grads for one reduced lane.
inline void reduce_backward(Reduce op, std::span<const double> v, std::span<double> gv, std::size_t stride,
                            std::size_t count, double out, double g) {
  const double n = static_cast<double>(count);
  switch (op) {
    case Reduce::sum:
      for (std::size_t i = 0; i < count; ++i) gv[i * stride] += g;
      return;
    case Reduce::mean:
      for (std::size_t i = 0; i < count; ++i) gv[i * stride] += g / n;
      return;
    case Reduce::std_population: {
      // Zero-spread inputs take the zero subgradient.
      if (out == 0.0) return;
      double mean = 0.0;
      for (std::size_t i = 0; i < count; ++i) mean += v[i * stride];
      mean /= n;
      for (std::size_t i = 0; i < count; ++i) gv[i * stride] += g * (v[i * stride] - mean) / (n * out);
      return;
    }
    case Reduce::max:
      for (std::size_t i = 0; i < count; ++i) {
        if (v[i * stride] == out) {
          gv[i * stride] += g;
          return;
        }
      }
      return;
  }
}

inline const char* reduce_name(Reduce op) {
  switch (op) {
    case Reduce::sum: return "sum";
    case Reduce::mean: return "mean";
    case Reduce::std_population: return "std_population";
    case Reduce::max: return "max";
  }
  return "reduce";
}

}  // namespace detail

/// Reduces over every element (no axis) or along axis 0 / 1 of a rank <= 2
/// tensor. Axis 0 yields shape [1, cols]; axis 1 yields [rows, 1].
inline Tensor reduce(Reduce op, const Tensor& t, std::optional<int> axis = std::nullopt) {
  detail::require_rank2(t, detail::reduce_name(op));
  if (t.numel() == 0) throw DomainError(std::string(detail::reduce_name(op)) + ": empty reduction");
  if (!axis) {
    const double out = detail::reduce_values(op, t.data(), 1, t.numel());
    return detail::make_result(detail::reduce_name(op), {1}, {out}, {t}, [op](Node& self) {
      auto gv = detail::sink(self, 0);
      detail::reduce_backward(op, self.parents[0]->value, gv, 1, gv.size(), self.value[0], self.grad[0]);
    });
  }
  const std::size_t r = t.rows(), c = t.cols();
  if (*axis != 0 && *axis != 1) throw DimensionError("reduce: axis must be 0 or 1");
  const bool over_rows = *axis == 0;
  const std::size_t lanes = over_rows ? c : r;
  const std::size_t count = over_rows ? r : c;
  const std::size_t stride = over_rows ? c : 1;
  const auto v = t.data();
  std::vector<double> out(lanes);
  for (std::size_t l = 0; l < lanes; ++l) {
    const std::size_t base = over_rows ? l : l * c;
    out[l] = detail::reduce_values(op, v.subspan(base), stride, count);
  }
  Shape shape = over_rows ? Shape{1, c} : Shape{r, 1};
  return detail::make_result(detail::reduce_name(op), shape, std::move(out), {t},
                             [op, over_rows, lanes, count, stride, c](Node& self) {
                               auto gv = detail::sink(self, 0);
                               std::span<const double> x = self.parents[0]->value;
                               for (std::size_t l = 0; l < lanes; ++l) {
                                 const std::size_t base = over_rows ? l : l * c;
                                 detail::reduce_backward(op, x.subspan(base), gv.subspan(base), stride, count,
                                                         self.value[l], self.grad[l]);
                               }
                             });
}

inline Tensor sum(const Tensor& t, std::optional<int> axis = std::nullopt) { return reduce(Reduce::sum, t, axis); }
inline Tensor mean(const Tensor& t, std::optional<int> axis = std::nullopt) {
  return reduce(Reduce::mean, t, axis);
}
inline Tensor std_population(const Tensor& t, std::optional<int> axis = std::nullopt) {
  return reduce(Reduce::std_population, t, axis);
}
inline Tensor max(const Tensor& t, std::optional<int> axis = std::nullopt) { return reduce(Reduce::max, t, axis); }

// ---------------------------------------------------------------- structure

/// Concatenation along the last axis.
inline Tensor concat(const Tensor& a, const Tensor& b) {
  detail::require_rank2(a, "concat");
  detail::require_rank2(b, "concat");
  if (a.rank() != b.rank() || a.rows() != b.rows()) {
    throw DimensionError("concat: leading dimensions differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const std::size_t r = a.rows(), p = a.cols(), q = b.cols();
  std::vector<double> out(r * (p + q));
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(&a.data()[i * p], p, &out[i * (p + q)]);
    std::copy_n(&b.data()[i * q], q, &out[i * (p + q) + p]);
  }
  Shape shape = a.rank() == 1 ? Shape{p + q} : Shape{r, p + q};
  return detail::make_result("concat", shape, std::move(out), {a, b}, [r, p, q](Node& self) {
    auto ga = detail::sink(self, 0);
    auto gb = detail::sink(self, 1);
    for (std::size_t i = 0; i < r; ++i) {
      if (!ga.empty())
        for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += self.grad[i * (p + q) + j];
      if (!gb.empty())
        for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += self.grad[i * (p + q) + p + j];
    }
  });
}

/// Columns [begin, end) of a rank-2 tensor.
inline Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
  detail::require_rank2(a, "slice_cols");
  const std::size_t r = a.rows(), c = a.cols();
  if (begin >= end || end > c) throw DimensionError("slice_cols: bad range for " + shape_str(a.shape()));
  const std::size_t w = end - begin;
  std::vector<double> out(r * w);
  for (std::size_t i = 0; i < r; ++i) std::copy_n(&a.data()[i * c + begin], w, &out[i * w]);
  return detail::make_result("slice_cols", {r, w}, std::move(out), {a}, [r, c, w, begin](Node& self) {
    auto ga = detail::sink(self, 0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) ga[i * c + begin + j] += self.grad[i * w + j];
  });
}

/// Rows of `table` selected by `indices` (embedding lookup); scatter-add backward.
inline Tensor gather_rows(const Tensor& table, std::span<const std::size_t> indices) {
  detail::require_rank2(table, "gather_rows");
  if (indices.empty()) throw DimensionError("gather_rows: no indices");
  const std::size_t r = table.rows(), c = table.cols();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  std::vector<double> out(idx.size() * c);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= r) {
      throw LookupError("row " + std::to_string(idx[i]) + " outside table of " + std::to_string(r) + " rows");
    }
    std::copy_n(&table.data()[idx[i] * c], c, &out[i * c]);
  }
  const std::size_t n = idx.size();
  return detail::make_result("gather_rows", {n, c}, std::move(out), {table},
                             [idx = std::move(idx), c](Node& self) {
                               auto g = detail::sink(self, 0);
                               for (std::size_t i = 0; i < idx.size(); ++i)
                                 for (std::size_t j = 0; j < c; ++j) g[idx[i] * c + j] += self.grad[i * c + j];
                             });
}

inline Tensor gather_row(const Tensor& table, std::size_t index) {
  const std::size_t one[1] = {index};
  return gather_rows(table, one);
}

/// Output row s is the mean of table rows members[offsets[s] .. offsets[s+1]).
/// Empty groups fall back to row `fallback`.
inline Tensor segment_mean(const Tensor& table, std::span<const std::size_t> offsets,
                           std::span<const std::size_t> members, std::size_t fallback = 0) {
  detail::require_rank2(table, "segment_mean");
  if (offsets.size() < 2) throw DimensionError("segment_mean: need at least one segment");
  const std::size_t segments = offsets.size() - 1, c = table.cols(), r = table.rows();
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  std::vector<std::size_t> mem(members.begin(), members.end());
  if (off.back() != mem.size()) throw DimensionError("segment_mean: offsets do not cover members");
  for (auto m : mem) {
    if (m >= r) throw LookupError("segment_mean: row " + std::to_string(m) + " out of range");
  }
  if (fallback >= r) throw LookupError("segment_mean: fallback row out of range");
  std::vector<double> out(segments * c, 0.0);
  const auto tv = table.data();
  for (std::size_t s = 0; s < segments; ++s) {
    const std::size_t n = off[s + 1] - off[s];
    if (n == 0) {
      std::copy_n(&tv[fallback * c], c, &out[s * c]);
      continue;
    }
    for (std::size_t k = off[s]; k < off[s + 1]; ++k)
      for (std::size_t j = 0; j < c; ++j) out[s * c + j] += tv[mem[k] * c + j];
    for (std::size_t j = 0; j < c; ++j) out[s * c + j] /= static_cast<double>(n);
  }
  return detail::make_result(
      "segment_mean", {segments, c}, std::move(out), {table},
      [off = std::move(off), mem = std::move(mem), c, segments, fallback](Node& self) {
        auto g = detail::sink(self, 0);
        for (std::size_t s = 0; s < segments; ++s) {
          const std::size_t n = off[s + 1] - off[s];
          if (n == 0) {
            for (std::size_t j = 0; j < c; ++j) g[fallback * c + j] += self.grad[s * c + j];
            continue;
          }
          const double w = 1.0 / static_cast<double>(n);
          for (std::size_t k = off[s]; k < off[s + 1]; ++k)
            for (std::size_t j = 0; j < c; ++j) g[mem[k] * c + j] += w * self.grad[s * c + j];
        }
      });
}

/// Single element as a scalar tensor.
inline Tensor pick(const Tensor& t, std::size_t index) {
  if (index >= t.numel()) throw LookupError("pick: index " + std::to_string(index) + " out of range");
  return detail::make_result("pick", {1}, {t.data()[index]}, {t}, [index](Node& self) {
    auto g = detail::sink(self, 0);
    g[index] += self.grad[0];
  });
}

// ---------------------------------------------------------------- softmax

namespace detail {

inline void check_finite_input(const Tensor& t, std::string_view op) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) throw DomainError(std::string(op) + ": non-finite input");
  }
}

}  // namespace detail

/// Row-wise softmax over the last axis, max-shifted.
inline Tensor softmax(const Tensor& t) {
  detail::require_rank2(t, "softmax");
  detail::check_finite_input(t, "softmax");
  const std::size_t r = t.rows(), c = t.cols();
  const auto v = t.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = &v[i * c];
    const double m = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += (out[i * c + j] = std::exp(row[j] - m));
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= z;
  }
  return detail::make_result("softmax", t.shape(), std::move(out), {t}, [r, c](Node& self) {
    auto g = detail::sink(self, 0);
    const auto& y = self.value;
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += y[i * c + j] * (self.grad[i * c + j] - dot);
    }
  });
}

/// Row-wise log-softmax over the last axis.
inline Tensor log_softmax(const Tensor& t) {
  detail::require_rank2(t, "log_softmax");
  detail::check_finite_input(t, "log_softmax");
  const std::size_t r = t.rows(), c = t.cols();
  const auto v = t.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = &v[i * c];
    const double m = *std::max_element(row, row + c);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - m);
    const double lz = m + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lz;
  }
  return detail::make_result("log_softmax", t.shape(), std::move(out), {t}, [r, c](Node& self) {
    auto g = detail::sink(self, 0);
    for (std::size_t i = 0; i < r; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < c; ++j) gs += self.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        g[i * c + j] += self.grad[i * c + j] - std::exp(self.value[i * c + j]) * gs;
    }
  });
}

}  // namespace nirgnn::ad
