#pragma once

#include "madis/autograd.hpp"

#include <cmath>
#include <stdexcept>

namespace madis {

namespace detail {
inline void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}
}  // namespace detail

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  detail::require(a->value.same_shape(b->value), "add: shape mismatch");
  Tensor<T> out(a->value.shape());
  out.array() = a->value.array() + b->value.array();
  auto r = make_result(std::move(out), {a, b});
  r->backprop = [r = r.get(), a, b]() {
    if (a->requires_grad) a->grad_buf().array() += r->grad.array();
    if (b->requires_grad) b->grad_buf().array() += r->grad.array();
  };
  return r;
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  detail::require(a->value.same_shape(b->value), "sub: shape mismatch");
  Tensor<T> out(a->value.shape());
  out.array() = a->value.array() - b->value.array();
  auto r = make_result(std::move(out), {a, b});
  r->backprop = [r = r.get(), a, b]() {
    if (a->requires_grad) a->grad_buf().array() += r->grad.array();
    if (b->requires_grad) b->grad_buf().array() -= r->grad.array();
  };
  return r;
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  detail::require(a->value.same_shape(b->value), "mul: shape mismatch");
  Tensor<T> out(a->value.shape());
  out.array() = a->value.array() * b->value.array();
  auto r = make_result(std::move(out), {a, b});
  r->backprop = [r = r.get(), a, b]() {
    if (a->requires_grad) a->grad_buf().array() += r->grad.array() * b->value.array();
    if (b->requires_grad) b->grad_buf().array() += r->grad.array() * a->value.array();
  };
  return r;
}

template <typename T>
Var<T> scale(Var<T> a, T c) {
  Tensor<T> out(a->value.shape());
  out.array() = a->value.array() * c;
  auto r = make_result(std::move(out), {a});
  r->backprop = [r = r.get(), a, c]() {
    if (a->requires_grad) a->grad_buf().array() += r->grad.array() * c;
  };
  return r;
}

/// out = x * s with a learnable scalar s (shape [1]).
template <typename T>
Var<T> scale_by(Var<T> x, Var<T> s) {
  detail::require(s->value.numel() == 1, "scale_by: scalar expected");
  Tensor<T> out(x->value.shape());
  out.array() = x->value.array() * s->value[0];
  auto r = make_result(std::move(out), {x, s});
  r->backprop = [r = r.get(), x, s]() {
    if (x->requires_grad) x->grad_buf().array() += r->grad.array() * s->value[0];
    if (s->requires_grad) s->grad_buf()[0] += (r->grad.array() * x->value.array()).sum();
  };
  return r;
}

/// out = x + s * y, the residual form used by the self-attention block.
template <typename T>
Var<T> add_scaled(Var<T> x, Var<T> s, Var<T> y) {
  detail::require(x->value.same_shape(y->value), "add_scaled: shape mismatch");
  detail::require(s->value.numel() == 1, "add_scaled: scalar expected");
  Tensor<T> out(x->value.shape());
  out.array() = x->value.array() + s->value[0] * y->value.array();
  auto r = make_result(std::move(out), {x, s, y});
  r->backprop = [r = r.get(), x, s, y]() {
    if (x->requires_grad) x->grad_buf().array() += r->grad.array();
    if (s->requires_grad) s->grad_buf()[0] += (r->grad.array() * y->value.array()).sum();
    if (y->requires_grad) y->grad_buf().array() += r->grad.array() * s->value[0];
  };
  return r;
}

template <typename T>
Var<T> relu(Var<T> a) {
  Tensor<T> out(a->value.shape());
  out.array() = a->value.array().max(T(0));
  auto r = make_result(std::move(out), {a});
  r->backprop = [r = r.get(), a]() {
    if (!a->requires_grad) return;
    a->grad_buf().array() +=
        r->grad.array() * (a->value.array() > T(0)).template cast<T>();
  };
  return r;
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Tensor<T> out(a->value.shape());
  out.array() = T(1) / (T(1) + (-a->value.array()).exp());
  auto r = make_result(std::move(out), {a});
  r->backprop = [r = r.get(), a]() {
    if (!a->requires_grad) return;
    a->grad_buf().array() +=
        r->grad.array() * r->value.array() * (T(1) - r->value.array());
  };
  return r;
}

template <typename T>
Var<T> sum(Var<T> a) {
  Tensor<T> out = Tensor<T>::scalar(a->value.array().sum());
  auto r = make_result(std::move(out), {a});
  r->backprop = [r = r.get(), a]() {
    if (a->requires_grad) a->grad_buf().array() += r->grad[0];
  };
  return r;
}

template <typename T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T(1) / T(a->value.numel()));
}

/// Plain data reinterpretation; element order is unchanged.
template <typename T>
Var<T> reshape(Var<T> a, std::vector<int> shape) {
  detail::require(Tensor<T>::numel_of(shape) == a->value.numel(), "reshape: size mismatch");
  Tensor<T> out(std::move(shape), a->value.array());
  auto r = make_result(std::move(out), {a});
  r->backprop = [r = r.get(), a]() {
    if (a->requires_grad) a->grad_buf().array() += r->grad.array();
  };
  return r;
}

/// Channel-axis concatenation of two NCHW tensors.
template <typename T>
Var<T> concat_channels(Var<T> a, Var<T> b) {
  const auto& sa = a->value.shape();
  const auto& sb = b->value.shape();
  detail::require(sa.size() == 4 && sb.size() == 4 && sa[0] == sb[0] &&
                      sa[2] == sb[2] && sa[3] == sb[3],
                  "concat_channels: incompatible shapes");
  const int N = sa[0], Ca = sa[1], Cb = sb[1], H = sa[2], W = sa[3];
  const Eigen::Index plane = Eigen::Index(H) * W;
  Tensor<T> out({N, Ca + Cb, H, W});
  for (int n = 0; n < N; ++n) {
    out.array().segment(Eigen::Index(n) * (Ca + Cb) * plane, Ca * plane) =
        a->value.array().segment(Eigen::Index(n) * Ca * plane, Ca * plane);
    out.array().segment(Eigen::Index(n) * (Ca + Cb) * plane + Ca * plane, Cb * plane) =
        b->value.array().segment(Eigen::Index(n) * Cb * plane, Cb * plane);
  }
  auto r = make_result(std::move(out), {a, b});
  r->backprop = [r = r.get(), a, b, N, Ca, Cb, plane]() {
    for (int n = 0; n < N; ++n) {
      if (a->requires_grad)
        a->grad_buf().array().segment(Eigen::Index(n) * Ca * plane, Ca * plane) +=
            r->grad.array().segment(Eigen::Index(n) * (Ca + Cb) * plane, Ca * plane);
      if (b->requires_grad)
        b->grad_buf().array().segment(Eigen::Index(n) * Cb * plane, Cb * plane) +=
            r->grad.array().segment(Eigen::Index(n) * (Ca + Cb) * plane + Ca * plane,
                                    Cb * plane);
    }
  };
  return r;
}

/// Gathers a subset of batch items (leading axis) in the given order.
template <typename T>
Var<T> select_batch(Var<T> x, std::vector<int> indices) {
  detail::require(x->value.rank() >= 1, "select_batch: rank >= 1 expected");
  const int N = x->value.dim(0);
  const Eigen::Index item = x->value.numel() / N;
  for (int i : indices) detail::require(i >= 0 && i < N, "select_batch: index out of range");
  std::vector<int> shape = x->value.shape();
  shape[0] = int(indices.size());
  Tensor<T> out(shape);
  for (size_t j = 0; j < indices.size(); ++j)
    out.array().segment(Eigen::Index(j) * item, item) =
        x->value.array().segment(Eigen::Index(indices[j]) * item, item);
  auto r = make_result(std::move(out), {x});
  r->backprop = [r = r.get(), x, indices = std::move(indices), item]() {
    if (!x->requires_grad) return;
    for (size_t j = 0; j < indices.size(); ++j)
      x->grad_buf().array().segment(Eigen::Index(indices[j]) * item, item) +=
          r->grad.array().segment(Eigen::Index(j) * item, item);
  };
  return r;
}

/// Fully connected layer: x [N,Cin], w [Cout,Cin], b [Cout] -> [N,Cout].
template <typename T>
Var<T> fully_connected(Var<T> x, Var<T> w, Var<T> b) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Map = Eigen::Map<const Mat>;
  const int N = x->value.dim(0), Cin = x->value.dim(1), Cout = w->value.dim(0);
  detail::require(w->value.dim(1) == Cin && b->value.dim(0) == Cout,
                  "fully_connected: shape mismatch");
  Map X(x->value.data(), N, Cin), W(w->value.data(), Cout, Cin);
  Tensor<T> out({N, Cout});
  Eigen::Map<Mat> O(out.data(), N, Cout);
  O.noalias() = X * W.transpose();
  O.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b->value.data(), Cout);
  auto r = make_result(std::move(out), {x, w, b});
  r->backprop = [r = r.get(), x, w, b, N, Cin, Cout]() {
    Map G(r->grad.data(), N, Cout);
    Map X(x->value.data(), N, Cin), W(w->value.data(), Cout, Cin);
    if (x->requires_grad)
      Eigen::Map<Mat>(x->grad_buf().data(), N, Cin).noalias() += G * W;
    if (w->requires_grad)
      Eigen::Map<Mat>(w->grad_buf().data(), Cout, Cin).noalias() += G.transpose() * X;
    if (b->requires_grad)
      Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(b->grad_buf().data(), Cout) +=
          G.colwise().sum();
  };
  return r;
}

/// Per-row Euclidean distance between [N,D] code batches -> [N].
template <typename T>
Var<T> rows_l2_distance(Var<T> a, Var<T> b) {
  detail::require(a->value.same_shape(b->value) && a->value.rank() == 2,
                  "rows_l2_distance: [N,D] pair expected");
  const int N = a->value.dim(0), D = a->value.dim(1);
  Tensor<T> out({N});
  for (int n = 0; n < N; ++n) {
    T s = 0;
    for (int d = 0; d < D; ++d) {
      T diff = a->value[Eigen::Index(n) * D + d] - b->value[Eigen::Index(n) * D + d];
      s += diff * diff;
    }
    out[n] = std::sqrt(s + T(1e-12));
  }
  auto r = make_result(std::move(out), {a, b});
  r->backprop = [r = r.get(), a, b, N, D]() {
    for (int n = 0; n < N; ++n) {
      T inv = r->grad[n] / r->value[n];
      for (int d = 0; d < D; ++d) {
        Eigen::Index i = Eigen::Index(n) * D + d;
        T diff = (a->value[i] - b->value[i]) * inv;
        if (a->requires_grad) a->grad_buf()[i] += diff;
        if (b->requires_grad) b->grad_buf()[i] -= diff;
      }
    }
  };
  return r;
}

/// Per-row cosine similarity between [N,D] batches -> [N]. Norms are floored
/// at eps so zero vectors are defined (similarity 0 direction-free).
template <typename T>
Var<T> rows_cosine(Var<T> a, Var<T> b, T eps = T(1e-8)) {
  detail::require(a->value.same_shape(b->value) && a->value.rank() == 2,
                  "rows_cosine: [N,D] pair expected");
  const int N = a->value.dim(0), D = a->value.dim(1);
  Tensor<T> out({N});
  for (int n = 0; n < N; ++n) {
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> va(a->value.data() + n * D, D),
        vb(b->value.data() + n * D, D);
    out[n] = va.dot(vb) / (std::max(va.norm(), eps) * std::max(vb.norm(), eps));
  }
  auto r = make_result(std::move(out), {a, b});
  r->backprop = [r = r.get(), a, b, N, D, eps]() {
    using Vec = Eigen::Matrix<T, Eigen::Dynamic, 1>;
    for (int n = 0; n < N; ++n) {
      Eigen::Map<const Vec> va(a->value.data() + n * D, D), vb(b->value.data() + n * D, D);
      T na = std::max(va.norm(), eps), nb = std::max(vb.norm(), eps);
      T dot = va.dot(vb), g = r->grad[n];
      if (a->requires_grad) {
        Vec da = vb / (na * nb);
        if (va.norm() > eps) da -= va * (dot / (na * na * na * nb));
        Eigen::Map<Vec>(a->grad_buf().data() + n * D, D) += g * da;
      }
      if (b->requires_grad) {
        Vec db = va / (na * nb);
        if (vb.norm() > eps) db -= vb * (dot / (na * nb * nb * nb));
        Eigen::Map<Vec>(b->grad_buf().data() + n * D, D) += g * db;
      }
    }
  };
  return r;
}

/// Numerically stable mean binary cross-entropy on logits against a fixed
/// binary target.
template <typename T>
Var<T> bce_with_logits(Var<T> logits, const Tensor<T>& target) {
  detail::require(logits->value.same_shape(target), "bce_with_logits: shape mismatch");
  const auto& x = logits->value.array();
  const auto& g = target.array();
  T loss = (x.max(T(0)) - x * g + (T(1) + (-x.abs()).exp()).log()).mean();
  auto r = make_result(Tensor<T>::scalar(loss), {logits});
  r->backprop = [r = r.get(), logits, target]() {
    if (!logits->requires_grad) return;
    const auto& x = logits->value.array();
    T inv = r->grad[0] / T(logits->value.numel());
    logits->grad_buf().array() +=
        inv * (T(1) / (T(1) + (-x).exp()) - target.array());
  };
  return r;
}

/// Smoothed soft-IoU loss on probabilities: 1 - (sum(p*g)+1)/(sum(p)+sum(g)-sum(p*g)+1).
template <typename T>
Var<T> soft_iou_loss(Var<T> probs, const Tensor<T>& target) {
  detail::require(probs->value.same_shape(target), "soft_iou_loss: shape mismatch");
  T inter = (probs->value.array() * target.array()).sum();
  T uni = probs->value.array().sum() + target.array().sum() - inter;
  T A = inter + T(1), B = uni + T(1);
  auto r = make_result(Tensor<T>::scalar(T(1) - A / B), {probs});
  r->backprop = [r = r.get(), probs, target, A, B]() {
    if (!probs->requires_grad) return;
    T g = r->grad[0];
    // d(-A/B)/dp_i = -(g_i*B - A*(1-g_i)) / B^2
    probs->grad_buf().array() +=
        g * (-(target.array() * B - A * (T(1) - target.array())) / (B * B));
  };
  return r;
}

}  // namespace madis
