#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "rmen/error.hpp"
#include "rmen/rng.hpp"
#include "rmen/tensor.hpp"

namespace rmen::model {

/// Ordered collection of named tensors. Insertion order is the canonical
/// order used for serialization and optimizer state.
class ParameterSet {
 public:
  struct Entry {
    std::string name;
    Tensor value;
  };

  void add(std::string name, Tensor value) {
    if (find(name) != nullptr) throw ConfigError("duplicate parameter name '" + name + "'");
    entries_.push_back({std::move(name), std::move(value)});
  }

  const Tensor* find(const std::string& name) const {
    auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
    return it == entries_.end() ? nullptr : &it->value;
  }

  const Tensor& at(const std::string& name) const {
    const Tensor* t = find(name);
    if (t == nullptr) throw ShapeError("missing parameter '" + name + "'");
    return *t;
  }
  Tensor& at(const std::string& name) { return const_cast<Tensor&>(std::as_const(*this).at(name)); }

  std::size_t size() const { return entries_.size(); }
  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
  }

  /// Same names and shapes, all zeros.
  ParameterSet zeros_like() const {
    ParameterSet z;
    for (const auto& e : entries_) z.add(e.name, Tensor(e.value.dims()));
    return z;
  }

  void set_zero() {
    for (auto& e : entries_) e.value.fill(0.0);
  }

  ParameterSet& operator+=(const ParameterSet& other) {
    require_same_layout(other);
    for (std::size_t i = 0; i < entries_.size(); ++i) entries_[i].value += other.entries_[i].value;
    return *this;
  }

  void require_same_layout(const ParameterSet& other) const {
    if (other.entries_.size() != entries_.size()) throw ShapeError("parameter sets differ in size");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].name != other.entries_[i].name) {
        throw ShapeError("parameter order mismatch: '" + entries_[i].name + "' vs '" + other.entries_[i].name + "'");
      }
      if (entries_[i].value.dims() != other.entries_[i].value.dims()) {
        throw ShapeError("shape mismatch for tensor '" + entries_[i].name + "': " +
                         dims_to_string(entries_[i].value.dims()) + " vs " +
                         dims_to_string(other.entries_[i].value.dims()));
      }
    }
  }

  bool all_finite() const {
    return std::all_of(entries_.begin(), entries_.end(), [](const Entry& e) { return e.value.all_finite(); });
  }

  friend bool operator==(const ParameterSet& a, const ParameterSet& b) {
    if (a.entries_.size() != b.entries_.size()) return false;
    for (std::size_t i = 0; i < a.entries_.size(); ++i) {
      if (a.entries_[i].name != b.entries_[i].name || !(a.entries_[i].value == b.entries_[i].value)) return false;
    }
    return true;
  }

 private:
  std::vector<Entry> entries_;
};

/// Glorot/Xavier uniform: U(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
inline Tensor glorot_uniform(Dims dims, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  Tensor t(std::move(dims));
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-a, a);
  return t;
}

}  // namespace rmen::model
