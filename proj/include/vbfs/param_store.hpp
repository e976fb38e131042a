#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vbfs/common.hpp"

namespace vbfs {

struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;

  std::size_t size() const { return value.size(); }
};

inline std::size_t shape_size(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

/// Flat, ordered collection of trainable arrays with a gradient buffer of the
/// same shape for every entry. Insertion order is the canonical order used by
/// the optimizer and the checkpoint writer.
class ParamStore {
 public:
  ParamStore() = default;
  explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

  std::size_t add(const std::string& name, std::vector<std::size_t> shape) {
    if (index_.count(name)) throw usage_error("ParamStore: duplicate parameter '" + name + "'");
    Param p;
    p.name = name;
    p.shape = std::move(shape);
    p.value.assign(shape_size(p.shape), 0.0);
    p.grad.assign(p.value.size(), 0.0);
    index_[name] = params_.size();
    params_.push_back(std::move(p));
    return params_.size() - 1;
  }

  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }

  Param& at(const std::string& name) { return params_[index_of(name)]; }
  const Param& at(const std::string& name) const { return params_[index_of(name)]; }

  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw data_error("ParamStore: no parameter named '" + name + "'");
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t count() const { return params_.size(); }
  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
  }
  void zero_values() {
    for (auto& p : params_) std::fill(p.value.begin(), p.value.end(), 0.0);
  }

  bool grads_mirror_values() const {
    for (const auto& p : params_)
      if (p.grad.size() != p.value.size() || p.value.size() != shape_size(p.shape)) return false;
    return true;
  }

  std::uint64_t seed() const { return seed_; }
  void set_seed(std::uint64_t s) { seed_ = s; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t> index_;
  std::uint64_t seed_ = 0;
};

/// Uniform in +-sqrt(6 / (fan_in + fan_out)).
inline void glorot_uniform(Param& p, std::size_t fan_in, std::size_t fan_out, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (double& v : p.value) v = dist(rng);
}

}  // namespace vbfs
