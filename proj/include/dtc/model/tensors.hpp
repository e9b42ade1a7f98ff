#pragma once

#include <cstring>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "dtc/common.hpp"

namespace dtc::model {

template <typename T>
using MatR = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Tensor {
  std::string name;
  MatR<T> value;
  /// Weight decay applies (false for biases and normalization parameters).
  bool decay = true;
};

/// Ordered collection of named tensors. Order is creation order and is what
/// checkpoints, optimizers and gradient collections iterate over.
template <typename T>
class TensorList {
 public:
  void add(std::string name, MatR<T> value, bool decay) {
    require(!contains(name), "duplicate tensor '" + name + "'");
    index_.emplace(name, items_.size());
    items_.push_back({std::move(name), std::move(value), decay});
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  MatR<T>& operator[](const std::string& name) { return items_[at(name)].value; }
  const MatR<T>& operator[](const std::string& name) const { return items_[at(name)].value; }
  const Tensor<T>* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &items_[it->second];
  }
  std::size_t size() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  Tensor<T>& item(std::size_t i) { return items_[i]; }
  const Tensor<T>& item(std::size_t i) const { return items_[i]; }
  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  std::size_t n_values() const {
    std::size_t n = 0;
    for (const auto& t : items_) n += static_cast<std::size_t>(t.value.size());
    return n;
  }
  /// Same names and shapes, all values zero.
  TensorList zeros_like() const {
    TensorList out;
    for (const auto& t : items_) out.add(t.name, MatR<T>::Zero(t.value.rows(), t.value.cols()), t.decay);
    return out;
  }
  template <typename U>
  TensorList<U> cast() const {
    TensorList<U> out;
    for (const auto& t : items_) out.add(t.name, t.value.template cast<U>(), t.decay);
    return out;
  }
  bool bitwise_equal(const TensorList& o) const {
    if (o.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& a = items_[i];
      const auto& b = o.items_[i];
      if (a.name != b.name || a.value.rows() != b.value.rows() || a.value.cols() != b.value.cols()) return false;
      if (std::memcmp(a.value.data(), b.value.data(), sizeof(T) * a.value.size()) != 0) return false;
    }
    return true;
  }

 private:
  std::size_t at(const std::string& name) const {
    auto it = index_.find(name);
    require(it != index_.end(), "no tensor named '" + name + "'");
    return it->second;
  }
  std::vector<Tensor<T>> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace dtc::model
