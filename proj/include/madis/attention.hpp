#pragma once

#include "madis/conv.hpp"

namespace madis {

/// Scaled dot-product self-attention over the flattened spatial axis.
/// q,k: [N,C',H,W], v: [N,C,H,W] -> [N,C,H,W]; softmax runs over the key
/// positions of each query row.
template <typename T>
Var<T> attention_core(Var<T> q, Var<T> k, Var<T> v) {
  using Mat = detail::Mat<T>;
  const auto& sq = q->value.shape();
  const auto& sv = v->value.shape();
  detail::require(q->value.same_shape(k->value), "attention_core: q/k shape mismatch");
  detail::require(sq[0] == sv[0] && sq[2] == sv[2] && sq[3] == sv[3],
                  "attention_core: v shape mismatch");
  const int N = sq[0], Cr = sq[1], C = sv[1];
  const Eigen::Index L = Eigen::Index(sq[2]) * sq[3];
  const T inv_sqrt = T(1) / std::sqrt(T(Cr));

  auto gather = [L](const Tensor<T>& t, int n, int C) {
    Mat m(L, C);
    for (int c = 0; c < C; ++c)
      m.col(c) = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(
          t.data() + (Eigen::Index(n) * C + c) * L, L);
    return m;
  };

  auto attn = std::make_shared<std::vector<Mat>>();
  attn->reserve(size_t(N));
  Tensor<T> out(v->value.shape());
  for (int n = 0; n < N; ++n) {
    Mat Q = gather(q->value, n, Cr), K = gather(k->value, n, Cr), V = gather(v->value, n, C);
    Mat S = (Q * K.transpose()) * inv_sqrt;
    // Row softmax, max-shifted.
    for (Eigen::Index i = 0; i < L; ++i) {
      auto row = S.row(i);
      row = (row.array() - row.maxCoeff()).exp();
      row /= row.sum();
    }
    Mat O = S * V;
    for (int c = 0; c < C; ++c)
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(
          out.data() + (Eigen::Index(n) * C + c) * L, L) = O.col(c);
    attn->push_back(std::move(S));
  }
  auto r = make_result(std::move(out), {q, k, v});
  r->backprop = [r = r.get(), q, k, v, attn, gather, N, Cr, C, L, inv_sqrt]() {
    for (int n = 0; n < N; ++n) {
      const Mat& A = (*attn)[size_t(n)];
      Mat dO = gather(r->grad, n, C);
      Mat V = gather(v->value, n, C);
      if (v->requires_grad) {
        Mat dV = A.transpose() * dO;
        for (int c = 0; c < C; ++c)
          Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(
              v->grad_buf().data() + (Eigen::Index(n) * C + c) * L, L) += dV.col(c);
      }
      if (q->requires_grad || k->requires_grad) {
        Mat dA = dO * V.transpose();
        Mat dS(L, L);
        for (Eigen::Index i = 0; i < L; ++i) {
          T dot = dA.row(i).dot(A.row(i));
          dS.row(i) = (A.row(i).array() * (dA.row(i).array() - dot)).matrix();
        }
        dS *= inv_sqrt;
        Mat Q = gather(q->value, n, Cr), K = gather(k->value, n, Cr);
        if (q->requires_grad) {
          Mat dQ = dS * K;
          for (int c = 0; c < Cr; ++c)
            Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(
                q->grad_buf().data() + (Eigen::Index(n) * Cr + c) * L, L) += dQ.col(c);
        }
        if (k->requires_grad) {
          Mat dK = dS.transpose() * Q;
          for (int c = 0; c < Cr; ++c)
            Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(
                k->grad_buf().data() + (Eigen::Index(n) * Cr + c) * L, L) += dK.col(c);
        }
      }
    }
  };
  return r;
}

/// Residual self-attention block: Y = X + gamma * Attn(WqX, WkX, WvX) with
/// 1x1 projections.
template <typename T>
Var<T> attention_block(Var<T> x, Var<T> wq, Var<T> bq, Var<T> wk, Var<T> bk,
                       Var<T> wv, Var<T> bv, Var<T> gamma) {
  Var<T> q = conv2d(x, wq, bq, 1, 0);
  Var<T> k = conv2d(x, wk, bk, 1, 0);
  Var<T> v = conv2d(x, wv, bv, 1, 0);
  return add_scaled(x, gamma, attention_core(q, k, v));
}

}  // namespace madis
