#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "nirgnn/autodiff/random.hpp"
#include "nirgnn/ingest/catalog.hpp"
#include "nirgnn/ingest/kmeans.hpp"

namespace nirgnn::ingest {

struct TaxonomyTree {
  std::map<std::string, TaxonomyPath> paths;  // item -> [coarse, middle, fine]
  std::array<std::size_t, 3> level_sizes{};   // sizes actually used, fine to coarse
  std::vector<std::string> warnings;
};

/// Mean of the per-item vectors of every item carrying each label.
inline std::map<std::string, Point> label_vectors_from_items(
    const std::map<std::string, std::vector<std::string>>& flat_labels,
    const std::map<std::string, Point>& item_vectors) {
  std::map<std::string, Point> sums;
  std::map<std::string, std::size_t> counts;
  for (const auto& [item, labels] : flat_labels) {
    auto it = item_vectors.find(item);
    if (it == item_vectors.end()) continue;
    for (const auto& l : labels) {
      auto& s = sums[l];
      if (s.empty()) s.assign(it->second.size(), 0.0);
      for (std::size_t j = 0; j < s.size(); ++j) s[j] += it->second[j];
      ++counts[l];
    }
  }
  for (auto& [l, s] : sums) {
    for (double& v : s) v /= static_cast<double>(counts[l]);
  }
  return sums;
}

/// Synthesizes a three-level tree over flat labels by staged k-means++:
/// labels into level_sizes[0] fine clusters, those centroids into
/// level_sizes[1], and those into level_sizes[2] coarse clusters. An item's
/// path follows its first label up the cluster chain.
inline TaxonomyTree build_taxonomy_tree(const std::map<std::string, std::vector<std::string>>& flat_labels,
                                        const std::map<std::string, Point>& vectors,
                                        std::array<std::size_t, 3> level_sizes, std::uint64_t seed) {
  if (!(level_sizes[0] > level_sizes[1] && level_sizes[1] > level_sizes[2] && level_sizes[2] >= 1)) {
    throw ConfigError("taxonomy level sizes must satisfy k1 > k2 > k3 >= 1");
  }
  std::vector<std::string> labels;
  for (const auto& [item, ls] : flat_labels) {
    for (const auto& l : ls) {
      if (!vectors.contains(l)) throw IngestError("no vector for taxonomy label '" + l + "'");
      labels.push_back(l);
    }
  }
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  if (labels.empty()) throw IngestError("no labels to cluster");

  TaxonomyTree tree;
  if (labels.size() < level_sizes[0]) {
    tree.warnings.push_back("only " + std::to_string(labels.size()) + " distinct labels; clamping k1 from " +
                            std::to_string(level_sizes[0]));
    level_sizes[0] = labels.size();
  }
  for (std::size_t l = 1; l < 3; ++l) {
    if (level_sizes[l] > level_sizes[l - 1]) {
      tree.warnings.push_back("clamping level " + std::to_string(l + 1) + " size to " +
                              std::to_string(level_sizes[l - 1]));
      level_sizes[l] = level_sizes[l - 1];
    }
  }
  tree.level_sizes = level_sizes;

  std::vector<Point> points;
  points.reserve(labels.size());
  for (const auto& l : labels) points.push_back(vectors.at(l));

  ad::Rng rng1(ad::derive_seed(seed, "taxonomy", "stage1"));
  const KMeansResult fine = kmeanspp(points, level_sizes[0], rng1);
  ad::Rng rng2(ad::derive_seed(seed, "taxonomy", "stage2"));
  const KMeansResult mid = kmeanspp(fine.centroids, level_sizes[1], rng2);
  ad::Rng rng3(ad::derive_seed(seed, "taxonomy", "stage3"));
  const KMeansResult coarse = kmeanspp(mid.centroids, level_sizes[2], rng3);

  std::map<std::string, std::size_t> label_index;
  for (std::size_t i = 0; i < labels.size(); ++i) label_index[labels[i]] = i;
  for (const auto& [item, ls] : flat_labels) {
    if (ls.empty()) continue;
    const std::size_t c1 = fine.assignment[label_index.at(ls.front())];
    const std::size_t c2 = mid.assignment[c1];
    const std::size_t c3 = coarse.assignment[c2];
    tree.paths[item] = {"k" + std::to_string(c3), "k" + std::to_string(c2), "k" + std::to_string(c1)};
  }
  return tree;
}

}  // namespace nirgnn::ingest
