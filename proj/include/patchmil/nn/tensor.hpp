#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace patchmil::nn {

/// Raised for shape or architecture mismatches between parameters and expectations.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when training produces a non-finite value.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> values;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims)
      : shape(std::move(dims)), values(count(shape), T{0}) {}

  static std::size_t count(const std::vector<std::size_t>& dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
  }
  std::size_t numel() const { return values.size(); }
  T* data() { return values.data(); }
  const T* data() const { return values.data(); }
  bool operator==(const Tensor&) const = default;
};

/// Ordered collection of named tensors. Order is insertion order and is stable.
template <typename T>
class ParamSet {
 public:
  Tensor<T>& add(std::string name, std::vector<std::size_t> shape) {
    if (contains(name)) throw ConfigError("duplicate tensor name '" + name + "'");
    names_.push_back(std::move(name));
    tensors_.emplace_back(std::move(shape));
    return tensors_.back();
  }

  void add(std::string name, Tensor<T> tensor) {
    if (contains(name)) throw ConfigError("duplicate tensor name '" + name + "'");
    names_.push_back(std::move(name));
    tensors_.push_back(std::move(tensor));
  }

  bool contains(std::string_view name) const {
    for (const auto& n : names_)
      if (n == name) return true;
    return false;
  }

  std::size_t index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
      if (names_[i] == name) return i;
    throw ConfigError("no tensor named '" + std::string(name) + "'");
  }

  Tensor<T>& operator[](std::string_view name) { return tensors_[index_of(name)]; }
  const Tensor<T>& operator[](std::string_view name) const { return tensors_[index_of(name)]; }
  Tensor<T>& at(std::size_t i) { return tensors_[i]; }
  const Tensor<T>& at(std::size_t i) const { return tensors_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  std::size_t size() const { return tensors_.size(); }

  std::size_t total_values() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) n += t.numel();
    return n;
  }

  ParamSet zeros_like() const {
    ParamSet out;
    for (std::size_t i = 0; i < size(); ++i) out.add(names_[i], tensors_[i].shape);
    return out;
  }

  void set_zero() {
    for (auto& t : tensors_) std::fill(t.values.begin(), t.values.end(), T{0});
  }

  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (std::size_t i = 0; i < size(); ++i) {
      Tensor<U> t(tensors_[i].shape);
      for (std::size_t j = 0; j < t.numel(); ++j) t.values[j] = static_cast<U>(tensors_[i].values[j]);
      out.add(names_[i], std::move(t));
    }
    return out;
  }

  /// Throws ConfigError unless names and shapes agree position by position.
  void check_same_layout(const ParamSet& other, std::string_view what) const {
    if (other.size() != size()) throw ConfigError(std::string(what) + ": tensor count mismatch");
    for (std::size_t i = 0; i < size(); ++i)
      if (other.names_[i] != names_[i] || other.tensors_[i].shape != tensors_[i].shape)
        throw ConfigError(std::string(what) + ": layout mismatch at '" + names_[i] + "'");
  }

  void accumulate(const ParamSet& other) {
    check_same_layout(other, "accumulate");
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = 0; j < tensors_[i].numel(); ++j) tensors_[i].values[j] += other.tensors_[i].values[j];
  }

  bool operator==(const ParamSet&) const = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor<T>> tensors_;
};

/// Flat view helpers used by optimizers and gradient checks.
template <typename T>
T& flat_at(ParamSet<T>& p, std::size_t flat) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (flat < p.at(i).numel()) return p.at(i).values[flat];
    flat -= p.at(i).numel();
  }
  throw std::out_of_range("flat_at");
}

/// Bias tensors (".b" suffix or exact name "b") are excluded from weight decay.
inline bool is_bias_name(std::string_view name) {
  return name == "b" || (name.size() >= 2 && name.substr(name.size() - 2) == ".b") ||
         name.ends_with(".c") || name == "c";
}

}  // namespace patchmil::nn
