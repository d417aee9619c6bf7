#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace madis {

/// Dense row-major tensor over a runtime shape. Rank 1..5 is what the
/// pipeline uses: [N,C,H,W] activations, [Cout,Cin,k,k] conv weights and
/// [N,12,Gd,Gh,Gw] bilateral grids. Storage is a flat Eigen array so
/// elementwise math stays vectorized.
template <typename T>
class Tensor {
 public:
  using Storage = Eigen::Array<T, Eigen::Dynamic, 1>;

  Tensor() = default;

  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_ = Storage::Zero(numel_of(shape_));
  }

  Tensor(std::vector<int> shape, Storage data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != numel_of(shape_))
      throw std::invalid_argument("tensor: shape/data size mismatch");
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int> shape, T v) {
    Tensor t(std::move(shape));
    t.data_.setConstant(v);
    return t;
  }

  static Tensor scalar(T v) { return full({1}, v); }

  static Tensor from_values(std::vector<int> shape, std::initializer_list<T> vals) {
    Tensor t(std::move(shape));
    if (static_cast<Eigen::Index>(vals.size()) != t.numel())
      throw std::invalid_argument("tensor: initializer size mismatch");
    Eigen::Index i = 0;
    for (T v : vals) t.data_[i++] = v;
    return t;
  }

  static Tensor uniform(std::vector<int> shape, std::mt19937& rng, T lo = T(0), T hi = T(1)) {
    Tensor t(std::move(shape));
    std::uniform_real_distribution<double> d{double(lo), double(hi)};
    for (Eigen::Index i = 0; i < t.data_.size(); ++i) t.data_[i] = T(d(rng));
    return t;
  }

  static Tensor normal(std::vector<int> shape, std::mt19937& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    std::normal_distribution<double> d(0.0, stddev);
    for (Eigen::Index i = 0; i < t.data_.size(); ++i) t.data_[i] = T(d(rng));
    return t;
  }

  const std::vector<int>& shape() const { return shape_; }
  int dim(int i) const { return shape_.at(size_t(i)); }
  int rank() const { return int(shape_.size()); }
  Eigen::Index numel() const { return data_.size(); }

  Storage& array() { return data_; }
  const Storage& array() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](Eigen::Index i) { return data_[i]; }
  T operator[](Eigen::Index i) const { return data_[i]; }

  /// Rank-4 NCHW access.
  T& at4(int n, int c, int y, int x) {
    return data_[((Eigen::Index(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  T at4(int n, int c, int y, int x) const {
    return data_[((Eigen::Index(n) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  bool all_finite() const {
    return data_.isFinite().all();
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    out.array() = data_.template cast<U>();
    return out;
  }

  static Eigen::Index numel_of(const std::vector<int>& shape) {
    Eigen::Index n = 1;
    for (int d : shape) {
      if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension");
      n *= d;
    }
    return n;
  }

 private:
  std::vector<int> shape_;
  Storage data_;
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string r = "[";
  for (size_t i = 0; i < s.size(); ++i) r += (i ? "," : "") + std::to_string(s[i]);
  return r + "]";
}

}  // namespace madis
