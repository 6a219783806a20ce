#pragma once

#include <map>
#include <string>
#include <vector>

#include "nirgnn/autodiff/container.hpp"
#include "nirgnn/autodiff/random.hpp"
#include "nirgnn/autodiff/tensor.hpp"

namespace nirgnn::ad {

/// Named registry of leaf tensors. Registration order is the checkpoint
/// order; every name appears once.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable = true;
  };

  Tensor& add(const std::string& name, Tensor t, bool trainable = true) {
    if (index_.contains(name)) throw ConfigError("parameter '" + name + "' registered twice");
    if (!t.defined()) throw ConfigError("parameter '" + name + "' is undefined");
    t.node()->requires_grad = trainable;
    index_.emplace(name, entries_.size());
    entries_.push_back({name, std::move(t), trainable});
    return entries_.back().tensor;
  }

  bool contains(const std::string& name) const { return index_.contains(name); }

  const Tensor& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw LookupError("no parameter named '" + name + "'");
    return entries_[it->second].tensor;
  }
  Tensor& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw LookupError("no parameter named '" + name + "'");
    return entries_[it->second].tensor;
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  /// Allocates a zeroed gradient buffer on every trainable tensor.
  void zero_grad() {
    for (auto& e : entries_) {
      if (e.trainable) e.tensor.zero_grad();
    }
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.tensor.numel();
    return n;
  }

  std::vector<NamedArray> to_arrays() const {
    std::vector<NamedArray> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) {
      NamedArray a;
      a.name = e.name;
      for (auto d : e.tensor.shape()) a.dims.push_back(d);
      a.values.assign(e.tensor.data().begin(), e.tensor.data().end());
      out.push_back(std::move(a));
    }
    return out;
  }

  /// Overwrites values from a container; names and shapes must match exactly.
  void load_arrays(const std::vector<NamedArray>& arrays) {
    if (arrays.size() != entries_.size()) {
      throw DimensionError("checkpoint holds " + std::to_string(arrays.size()) + " tensors, model expects " +
                           std::to_string(entries_.size()));
    }
    for (const auto& a : arrays) {
      Tensor& t = get(a.name);
      std::vector<std::uint64_t> dims(t.shape().begin(), t.shape().end());
      if (dims != a.dims) {
        throw DimensionError("checkpoint tensor '" + a.name + "' has a different shape than the model");
      }
      std::copy(a.values.begin(), a.values.end(), t.mutable_data().begin());
    }
  }

 private:
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

/// Uniform(-bound, bound) initialization from a stream keyed by `name`.
inline Tensor init_uniform(Shape shape, double bound, std::uint64_t seed, const std::string& name) {
  Rng rng(derive_seed(seed, "init", name));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from(std::move(shape), std::move(v));
}

inline Tensor init_normal(Shape shape, double sd, std::uint64_t seed, const std::string& name) {
  Rng rng(derive_seed(seed, "init", name));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = rng.normal(0.0, sd);
  return Tensor::from(std::move(shape), std::move(v));
}

}  // namespace nirgnn::ad
