#pragma once

#include "madis/tensor.hpp"

#include <Eigen/QR>

namespace madis {

/// He-normal initialization for conv weights [Cout,Cin,k,k] (fan-in based).
template <typename T>
Tensor<T> he_init(std::vector<int> shape, std::mt19937& rng) {
  Eigen::Index fan_in = 1;
  for (size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  return Tensor<T>::normal(std::move(shape), rng, std::sqrt(2.0 / double(fan_in)));
}

/// Orthogonal initialization (sign-fixed QR of a Gaussian matrix) flattened
/// over everything but the leading dimension; rows are orthonormal when
/// Cout <= fan_in, columns otherwise. Gain sqrt(2) keeps ReLU activations
/// from decaying through the frozen extractor.
template <typename T>
Tensor<T> orthogonal_init(std::vector<int> shape, std::mt19937& rng, double gain = std::sqrt(2.0)) {
  Eigen::Index rows = shape[0], cols = 1;
  for (size_t i = 1; i < shape.size(); ++i) cols *= shape[i];
  bool tall = rows >= cols;
  Eigen::Index m = std::max(rows, cols), n = std::min(rows, cols);
  Eigen::MatrixXd a(m, n);
  std::normal_distribution<double> d(0.0, 1.0);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) a(i, j) = d(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, n);
  Eigen::MatrixXd rdiag = qr.matrixQR().topRows(n).template triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < n; ++j)
    if (rdiag(j, j) < 0) q.col(j) = -q.col(j);
  Eigen::MatrixXd w = tall ? q : Eigen::MatrixXd(q.transpose());
  Tensor<T> out(std::move(shape));
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) out[r * cols + c] = T(gain * w(r, c));
  return out;
}

}  // namespace madis
