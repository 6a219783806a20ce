#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "nirgnn/autodiff/random.hpp"
#include "nirgnn/error.hpp"

namespace nirgnn::ingest {

using Point = std::vector<double>;

struct KMeansResult {
  std::vector<std::size_t> assignment;
  std::vector<Point> centroids;
  double inertia = 0.0;
  std::vector<double> inertia_history;  // after each Lloyd update
  std::size_t iterations = 0;
};

inline double squared_distance(const Point& a, const Point& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

namespace detail {

inline double assign_nearest(const std::vector<Point>& points, const std::vector<Point>& centroids,
                             std::vector<std::size_t>& assignment) {
  double inertia = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      const double d = squared_distance(points[i], centroids[c]);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    assignment[i] = best;
    inertia += best_d;
  }
  return inertia;
}

inline double inertia_of(const std::vector<Point>& points, const std::vector<Point>& centroids,
                         const std::vector<std::size_t>& assignment) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) s += squared_distance(points[i], centroids[assignment[i]]);
  return s;
}

}  // namespace detail

/// k-means++ seeding (D^2 sampling) followed by Lloyd iterations until the
/// assignment stops changing or `max_iters` updates have run. A cluster
/// that empties keeps its previous centroid.
inline KMeansResult kmeanspp(const std::vector<Point>& points, std::size_t k, ad::Rng& rng,
                             std::size_t max_iters = 100) {
  if (k == 0) throw DomainError("k-means needs k >= 1");
  if (points.size() < k) {
    throw DomainError("k-means with k=" + std::to_string(k) + " on " + std::to_string(points.size()) + " points");
  }
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw DimensionError("k-means points have unequal dimensions");
  }

  KMeansResult r;
  r.centroids.push_back(points[rng.below(points.size())]);
  std::vector<double> d2(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d2[i] = squared_distance(points[i], r.centroids[0]);
  while (r.centroids.size() < k) {
    double total = 0.0;
    for (double d : d2) total += d;
    std::size_t pick = 0;
    if (total > 0.0) {
      double u = rng.uniform() * total;
      pick = points.size() - 1;
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (d2[i] <= 0.0) continue;
        if (u < d2[i]) {
          pick = i;
          break;
        }
        u -= d2[i];
      }
      while (d2[pick] <= 0.0) --pick;  // rounding fell past the last candidate
    } else {
      pick = rng.below(points.size());
    }
    r.centroids.push_back(points[pick]);
    for (std::size_t i = 0; i < points.size(); ++i) {
      d2[i] = std::min(d2[i], squared_distance(points[i], r.centroids.back()));
    }
  }

  r.assignment.assign(points.size(), 0);
  detail::assign_nearest(points, r.centroids, r.assignment);
  std::vector<std::size_t> previous;
  for (r.iterations = 0; r.iterations < max_iters; ++r.iterations) {
    std::vector<Point> sums(k, Point(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      ++counts[r.assignment[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[r.assignment[i]][j] += points[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j) r.centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
    r.inertia_history.push_back(detail::inertia_of(points, r.centroids, r.assignment));
    previous = r.assignment;
    detail::assign_nearest(points, r.centroids, r.assignment);
    if (previous == r.assignment) {
      ++r.iterations;
      break;
    }
  }
  r.inertia = detail::inertia_of(points, r.centroids, r.assignment);
  return r;
}

}  // namespace nirgnn::ingest
