#pragma once

#include "madis/ops.hpp"

#include <memory>

namespace madis {

namespace detail {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

struct ConvDims {
  int N, Cin, H, W, Cout, k, stride, pad, Ho, Wo;
};

template <typename T>
ConvDims conv_dims(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b,
                   int stride, int pad) {
  require(x.rank() == 4 && w.rank() == 4 && b.rank() == 1, "conv2d: rank mismatch");
  ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3),
             w.dim(0), w.dim(2), stride,   pad,      0, 0};
  require(w.dim(1) == d.Cin, "conv2d: in-channel mismatch");
  require(w.dim(3) == d.k && d.k % 2 == 1, "conv2d: square odd kernel expected");
  require(b.dim(0) == d.Cout, "conv2d: bias size mismatch");
  require(stride >= 1 && pad >= 0, "conv2d: bad stride/padding");
  d.Ho = (d.H + 2 * pad - d.k) / stride + 1;
  d.Wo = (d.W + 2 * pad - d.k) / stride + 1;
  require(d.Ho >= 1 && d.Wo >= 1, "conv2d: kernel larger than padded input");
  return d;
}

/// Unfolds x into (Cin*k*k) x (N*Ho*Wo); row (ci*k+ky)*k+kx, column
/// (n*Ho+y)*Wo+x. Out-of-bounds taps are zero. Column order fixes the
/// accumulation order of the whole convolution.
template <typename T>
Mat<T> im2col(const Tensor<T>& x, const ConvDims& d) {
  Mat<T> col = Mat<T>::Zero(Eigen::Index(d.Cin) * d.k * d.k,
                            Eigen::Index(d.N) * d.Ho * d.Wo);
  for (int n = 0; n < d.N; ++n)
    for (int y = 0; y < d.Ho; ++y)
      for (int xo = 0; xo < d.Wo; ++xo) {
        Eigen::Index c = (Eigen::Index(n) * d.Ho + y) * d.Wo + xo;
        T* dst = col.data() + c * col.rows();
        for (int ci = 0; ci < d.Cin; ++ci)
          for (int ky = 0; ky < d.k; ++ky) {
            int iy = y * d.stride + ky - d.pad;
            if (iy < 0 || iy >= d.H) { dst += d.k; continue; }
            const T* src = x.data() + ((Eigen::Index(n) * d.Cin + ci) * d.H + iy) * d.W;
            for (int kx = 0; kx < d.k; ++kx) {
              int ix = xo * d.stride + kx - d.pad;
              *dst++ = (ix < 0 || ix >= d.W) ? T(0) : src[ix];
            }
          }
      }
  return col;
}

/// Scatter-add of a column matrix back onto the input layout.
template <typename T>
void col2im_add(const Mat<T>& col, const ConvDims& d, Tensor<T>& x) {
  for (int n = 0; n < d.N; ++n)
    for (int y = 0; y < d.Ho; ++y)
      for (int xo = 0; xo < d.Wo; ++xo) {
        Eigen::Index c = (Eigen::Index(n) * d.Ho + y) * d.Wo + xo;
        const T* src = col.data() + c * col.rows();
        for (int ci = 0; ci < d.Cin; ++ci)
          for (int ky = 0; ky < d.k; ++ky) {
            int iy = y * d.stride + ky - d.pad;
            if (iy < 0 || iy >= d.H) { src += d.k; continue; }
            T* dst = x.data() + ((Eigen::Index(n) * d.Cin + ci) * d.H + iy) * d.W;
            for (int kx = 0; kx < d.k; ++kx) {
              int ix = xo * d.stride + kx - d.pad;
              T v = *src++;
              if (ix >= 0 && ix < d.W) dst[ix] += v;
            }
          }
      }
}

/// Gathers a NCHW gradient tensor into (Cout) x (N*Ho*Wo) matrix form.
template <typename T>
Mat<T> gather_out(const Tensor<T>& g, const ConvDims& d) {
  Mat<T> G(d.Cout, Eigen::Index(d.N) * d.Ho * d.Wo);
  for (int n = 0; n < d.N; ++n)
    for (int co = 0; co < d.Cout; ++co) {
      const T* src = g.data() + (Eigen::Index(n) * d.Cout + co) * d.Ho * d.Wo;
      for (Eigen::Index p = 0; p < Eigen::Index(d.Ho) * d.Wo; ++p)
        G(co, Eigen::Index(n) * d.Ho * d.Wo + p) = src[p];
    }
  return G;
}

template <typename T>
void scatter_out(const Mat<T>& O, const ConvDims& d, Tensor<T>& out) {
  for (int n = 0; n < d.N; ++n)
    for (int co = 0; co < d.Cout; ++co) {
      T* dst = out.data() + (Eigen::Index(n) * d.Cout + co) * d.Ho * d.Wo;
      for (Eigen::Index p = 0; p < Eigen::Index(d.Ho) * d.Wo; ++p)
        dst[p] = O(co, Eigen::Index(n) * d.Ho * d.Wo + p);
    }
}

}  // namespace detail

/// Standard zero-padded cross-correlation.
template <typename T>
Var<T> conv2d(Var<T> x, Var<T> w, Var<T> b, int stride = 1, int pad = 0) {
  using detail::Mat;
  auto d = detail::conv_dims(x->value, w->value, b->value, stride, pad);
  detail::require(x->value.all_finite(), "conv2d: non-finite input");
  auto col = std::make_shared<Mat<T>>(detail::im2col(x->value, d));
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      W(w->value.data(), d.Cout, Eigen::Index(d.Cin) * d.k * d.k);
  Mat<T> O(d.Cout, col->cols());
  O.noalias() = W * (*col);
  O.colwise() += Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(b->value.data(), d.Cout);
  Tensor<T> out({d.N, d.Cout, d.Ho, d.Wo});
  detail::scatter_out(O, d, out);
  // The unfolded input is only needed for the weight gradient.
  if (!w->requires_grad) col.reset();
  auto r = make_result(std::move(out), {x, w, b});
  r->backprop = [r = r.get(), x, w, b, d, col]() {
    Mat<T> G = detail::gather_out(r->grad, d);
    if (b->requires_grad)
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(b->grad_buf().data(), d.Cout) +=
          G.rowwise().sum();
    if (w->requires_grad) {
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
          dW(w->grad_buf().data(), d.Cout, Eigen::Index(d.Cin) * d.k * d.k);
      dW.noalias() += G * col->transpose();
    }
    if (x->requires_grad) {
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
          W(w->value.data(), d.Cout, Eigen::Index(d.Cin) * d.k * d.k);
      Mat<T> dcol(W.cols(), G.cols());
      dcol.noalias() = W.transpose() * G;
      detail::col2im_add(dcol, d, x->grad_buf());
    }
  };
  return r;
}

/// Central difference convolution: blends the vanilla response with a
/// central-difference response, y = conv(x,w) - theta * x(center) * sum_k(w).
template <typename T>
Var<T> cdc_conv2d(Var<T> x, Var<T> w, Var<T> b, int stride, int pad, T theta) {
  using detail::Mat;
  detail::require(theta >= T(0) && theta <= T(1), "cdc_conv2d: theta outside [0,1]");
  auto d = detail::conv_dims(x->value, w->value, b->value, stride, pad);
  Var<T> vanilla = conv2d(x, w, b, stride, pad);
  if (theta == T(0)) return vanilla;

  // Per (co,ci) kernel sums and the window-center samples.
  const int kk = d.k * d.k, half = d.k / 2;
  auto centers = std::make_shared<Mat<T>>(Mat<T>::Zero(d.Cin, Eigen::Index(d.N) * d.Ho * d.Wo));
  for (int n = 0; n < d.N; ++n)
    for (int y = 0; y < d.Ho; ++y)
      for (int xo = 0; xo < d.Wo; ++xo) {
        int iy = y * stride + half - pad, ix = xo * stride + half - pad;
        if (iy < 0 || iy >= d.H || ix < 0 || ix >= d.W) continue;
        Eigen::Index c = (Eigen::Index(n) * d.Ho + y) * d.Wo + xo;
        for (int ci = 0; ci < d.Cin; ++ci)
          (*centers)(ci, c) = x->value.at4(n, ci, iy, ix);
      }
  Mat<T> S(d.Cout, d.Cin);
  for (int co = 0; co < d.Cout; ++co)
    for (int ci = 0; ci < d.Cin; ++ci)
      S(co, ci) = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(
                      w->value.data() + (Eigen::Index(co) * d.Cin + ci) * kk, kk)
                      .sum();
  Mat<T> Sub(d.Cout, centers->cols());
  Sub.noalias() = S * (*centers);
  Tensor<T> cdiff({d.N, d.Cout, d.Ho, d.Wo});
  detail::scatter_out(Sub, d, cdiff);

  Tensor<T> out(vanilla->value.shape());
  out.array() = vanilla->value.array() - theta * cdiff.array();
  auto r = make_result(std::move(out), {vanilla, x, w});
  r->backprop = [r = r.get(), vanilla, x, w, d, theta, centers, half, kk]() {
    // Vanilla branch takes the upstream gradient unchanged.
    vanilla->grad_buf().array() += r->grad.array();
    Mat<T> G = detail::gather_out(r->grad, d);
    if (w->requires_grad) {
      Mat<T> dS(d.Cout, d.Cin);
      dS.noalias() = G * centers->transpose();
      for (int co = 0; co < d.Cout; ++co)
        for (int ci = 0; ci < d.Cin; ++ci)
          Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>>(
              w->grad_buf().data() + (Eigen::Index(co) * d.Cin + ci) * kk, kk)
              .array() -= theta * dS(co, ci);
    }
    if (x->requires_grad) {
      Mat<T> S(d.Cout, d.Cin);
      for (int co = 0; co < d.Cout; ++co)
        for (int ci = 0; ci < d.Cin; ++ci)
          S(co, ci) = Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>>(
                          w->value.data() + (Eigen::Index(co) * d.Cin + ci) * kk, kk)
                          .sum();
      Mat<T> dc(d.Cin, G.cols());
      dc.noalias() = S.transpose() * G;
      for (int n = 0; n < d.N; ++n)
        for (int y = 0; y < d.Ho; ++y)
          for (int xo = 0; xo < d.Wo; ++xo) {
            int iy = y * d.stride + half - d.pad, ix = xo * d.stride + half - d.pad;
            if (iy < 0 || iy >= d.H || ix < 0 || ix >= d.W) continue;
            Eigen::Index c = (Eigen::Index(n) * d.Ho + y) * d.Wo + xo;
            for (int ci = 0; ci < d.Cin; ++ci)
              x->grad_buf().at4(n, ci, iy, ix) -= theta * dc(ci, c);
          }
    }
  };
  return r;
}

template <typename T>
struct PartialConvResult {
  Var<T> output;
  Tensor<T> mask;  ///< updated visibility mask [N,1,Ho,Wo]
};

/// Partial convolution with the renormalizing mask-update rule. The mask is
/// data, not a differentiable input; padded mask cells count as invisible.
template <typename T>
PartialConvResult<T> partial_conv2d(Var<T> x, const Tensor<T>& mask, Var<T> w,
                                    Var<T> b, int stride = 1, int pad = 0) {
  using detail::Mat;
  auto d = detail::conv_dims(x->value, w->value, b->value, stride, pad);
  detail::require(mask.rank() == 4 && mask.dim(0) == d.N && mask.dim(1) == 1 &&
                      mask.dim(2) == d.H && mask.dim(3) == d.W,
                  "partial_conv2d: mask shape mismatch");
  detail::require(((mask.array() == T(0)) || (mask.array() == T(1))).all(),
                  "partial_conv2d: non-binary mask");

  // Masked input, unfolded once; the per-window ratio k*k / sum(mask_window).
  Tensor<T> xm(x->value.shape());
  const Eigen::Index plane = Eigen::Index(d.H) * d.W;
  for (int n = 0; n < d.N; ++n)
    for (int ci = 0; ci < d.Cin; ++ci)
      xm.array().segment((Eigen::Index(n) * d.Cin + ci) * plane, plane) =
          x->value.array().segment((Eigen::Index(n) * d.Cin + ci) * plane, plane) *
          mask.array().segment(Eigen::Index(n) * plane, plane);
  auto col = std::make_shared<Mat<T>>(detail::im2col(xm, d));

  Tensor<T> mask_out({d.N, 1, d.Ho, d.Wo});
  auto ratio = std::make_shared<Tensor<T>>(std::vector<int>{d.N, 1, d.Ho, d.Wo});
  const T window = T(d.k) * T(d.k);
  for (int n = 0; n < d.N; ++n)
    for (int y = 0; y < d.Ho; ++y)
      for (int xo = 0; xo < d.Wo; ++xo) {
        T msum = 0;
        for (int ky = 0; ky < d.k; ++ky) {
          int iy = y * stride + ky - pad;
          if (iy < 0 || iy >= d.H) continue;
          for (int kx = 0; kx < d.k; ++kx) {
            int ix = xo * stride + kx - pad;
            if (ix >= 0 && ix < d.W) msum += mask.at4(n, 0, iy, ix);
          }
        }
        mask_out.at4(n, 0, y, xo) = msum > T(0) ? T(1) : T(0);
        ratio->at4(n, 0, y, xo) = msum > T(0) ? window / msum : T(0);
      }

  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
      W(w->value.data(), d.Cout, Eigen::Index(d.Cin) * d.k * d.k);
  Mat<T> O(d.Cout, col->cols());
  O.noalias() = W * (*col);
  Tensor<T> out({d.N, d.Cout, d.Ho, d.Wo});
  for (int n = 0; n < d.N; ++n)
    for (int co = 0; co < d.Cout; ++co)
      for (int y = 0; y < d.Ho; ++y)
        for (int xo = 0; xo < d.Wo; ++xo) {
          T rat = ratio->at4(n, 0, y, xo);
          Eigen::Index c = (Eigen::Index(n) * d.Ho + y) * d.Wo + xo;
          out.at4(n, co, y, xo) = rat > T(0) ? O(co, c) * rat + b->value[co] : T(0);
        }
  bool need_cols = w->requires_grad;
  if (!need_cols) col.reset();
  auto maskv = std::make_shared<Tensor<T>>(mask);
  auto r = make_result(std::move(out), {x, w, b});
  r->backprop = [r = r.get(), x, w, b, d, col, ratio, maskv]() {
    // Fold the ratio (and hole zeroing) into the upstream gradient.
    Tensor<T> gr(r->grad.shape());
    for (int n = 0; n < d.N; ++n)
      for (int co = 0; co < d.Cout; ++co)
        for (int y = 0; y < d.Ho; ++y)
          for (int xo = 0; xo < d.Wo; ++xo)
            gr.at4(n, co, y, xo) = r->grad.at4(n, co, y, xo) * ratio->at4(n, 0, y, xo);
    Mat<T> G = detail::gather_out(gr, d);
    if (b->requires_grad) {
      // Bias participates only where the window sees any mask.
      for (int n = 0; n < d.N; ++n)
        for (int co = 0; co < d.Cout; ++co)
          for (int y = 0; y < d.Ho; ++y)
            for (int xo = 0; xo < d.Wo; ++xo)
              if (ratio->at4(n, 0, y, xo) > T(0))
                b->grad_buf()[co] += r->grad.at4(n, co, y, xo);
    }
    if (w->requires_grad) {
      Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
          dW(w->grad_buf().data(), d.Cout, Eigen::Index(d.Cin) * d.k * d.k);
      dW.noalias() += G * col->transpose();
    }
    if (x->requires_grad) {
      Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
          W(w->value.data(), d.Cout, Eigen::Index(d.Cin) * d.k * d.k);
      Mat<T> dcol(W.cols(), G.cols());
      dcol.noalias() = W.transpose() * G;
      Tensor<T> dxm(x->value.shape());
      detail::col2im_add(dcol, d, dxm);
      const Eigen::Index plane = Eigen::Index(d.H) * d.W;
      for (int n = 0; n < d.N; ++n)
        for (int ci = 0; ci < d.Cin; ++ci)
          x->grad_buf().array().segment((Eigen::Index(n) * d.Cin + ci) * plane, plane) +=
              dxm.array().segment((Eigen::Index(n) * d.Cin + ci) * plane, plane) *
              maskv->array().segment(Eigen::Index(n) * plane, plane);
    }
  };
  return {r, std::move(mask_out)};
}

/// 2x2 max pooling, stride 2. Ties break on the first element in scan order.
template <typename T>
Var<T> max_pool2x2(Var<T> x) {
  const auto& s = x->value.shape();
  detail::require(x->value.rank() == 4 && s[2] % 2 == 0 && s[3] % 2 == 0,
                  "max_pool2x2: even spatial size required");
  const int N = s[0], C = s[1], H = s[2], W = s[3], Ho = H / 2, Wo = W / 2;
  Tensor<T> out({N, C, Ho, Wo});
  auto arg = std::make_shared<std::vector<Eigen::Index>>(out.numel());
  Eigen::Index o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < Ho; ++y)
        for (int xo = 0; xo < Wo; ++xo, ++o) {
          T best{};
          Eigen::Index bi = -1;
          for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) {
              Eigen::Index i =
                  ((Eigen::Index(n) * C + c) * H + 2 * y + dy) * W + 2 * xo + dx;
              if (bi < 0 || x->value[i] > best) { best = x->value[i]; bi = i; }
            }
          out[o] = best;
          (*arg)[size_t(o)] = bi;
        }
  auto r = make_result(std::move(out), {x});
  r->backprop = [r = r.get(), x, arg]() {
    if (!x->requires_grad) return;
    for (Eigen::Index i = 0; i < r->grad.numel(); ++i)
      x->grad_buf()[(*arg)[size_t(i)]] += r->grad[i];
  };
  return r;
}

/// Mask downsampling companion of max_pool2x2: a pooled cell is visible if
/// any contributing pixel is.
template <typename T>
Tensor<T> mask_max_pool2x2(const Tensor<T>& m) {
  const auto& s = m.shape();
  Tensor<T> out({s[0], s[1], s[2] / 2, s[3] / 2});
  for (int n = 0; n < s[0]; ++n)
    for (int c = 0; c < s[1]; ++c)
      for (int y = 0; y < s[2] / 2; ++y)
        for (int x = 0; x < s[3] / 2; ++x) {
          T v = std::max(std::max(m.at4(n, c, 2 * y, 2 * x), m.at4(n, c, 2 * y, 2 * x + 1)),
                         std::max(m.at4(n, c, 2 * y + 1, 2 * x), m.at4(n, c, 2 * y + 1, 2 * x + 1)));
          out.at4(n, c, y, x) = v;
        }
  return out;
}

/// Global average pool [N,C,H,W] -> [N,C].
template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  const auto& s = x->value.shape();
  detail::require(x->value.rank() == 4, "global_avg_pool: rank-4 expected");
  const int N = s[0], C = s[1];
  const Eigen::Index plane = Eigen::Index(s[2]) * s[3];
  Tensor<T> out({N, C});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      out[Eigen::Index(n) * C + c] =
          x->value.array().segment((Eigen::Index(n) * C + c) * plane, plane).mean();
  auto r = make_result(std::move(out), {x});
  r->backprop = [r = r.get(), x, N, C, plane]() {
    if (!x->requires_grad) return;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        x->grad_buf().array().segment((Eigen::Index(n) * C + c) * plane, plane) +=
            r->grad[Eigen::Index(n) * C + c] / T(plane);
  };
  return r;
}

/// Masked global average pool: per-channel mean over the visible area, zero
/// vector when the mask is empty. The mask carries no gradient.
template <typename T>
Var<T> masked_gap(Var<T> x, const Tensor<T>& mask) {
  const auto& s = x->value.shape();
  detail::require(x->value.rank() == 4 && mask.rank() == 4 && mask.dim(0) == s[0] &&
                      mask.dim(1) == 1 && mask.dim(2) == s[2] && mask.dim(3) == s[3],
                  "masked_gap: mask shape mismatch");
  const int N = s[0], C = s[1];
  const Eigen::Index plane = Eigen::Index(s[2]) * s[3];
  auto denom = std::make_shared<std::vector<T>>(size_t(N));
  Tensor<T> out({N, C});
  for (int n = 0; n < N; ++n) {
    T msum = mask.array().segment(Eigen::Index(n) * plane, plane).sum();
    (*denom)[size_t(n)] = std::max(msum, T(1));
    for (int c = 0; c < C; ++c)
      out[Eigen::Index(n) * C + c] =
          (x->value.array().segment((Eigen::Index(n) * C + c) * plane, plane) *
           mask.array().segment(Eigen::Index(n) * plane, plane))
              .sum() /
          (*denom)[size_t(n)];
  }
  auto maskv = std::make_shared<Tensor<T>>(mask);
  auto r = make_result(std::move(out), {x});
  r->backprop = [r = r.get(), x, maskv, denom, N, C, plane]() {
    if (!x->requires_grad) return;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        x->grad_buf().array().segment((Eigen::Index(n) * C + c) * plane, plane) +=
            maskv->array().segment(Eigen::Index(n) * plane, plane) *
            (r->grad[Eigen::Index(n) * C + c] / (*denom)[size_t(n)]);
  };
  return r;
}

namespace detail {
struct LinearTap {
  int i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

inline std::vector<LinearTap> resize_taps(int in, int out) {
  std::vector<LinearTap> taps(static_cast<size_t>(out));
  for (int o = 0; o < out; ++o) {
    double src = (o + 0.5) * double(in) / double(out) - 0.5;
    src = std::min(std::max(src, 0.0), double(in - 1));
    int i0 = int(std::floor(src));
    int i1 = std::min(i0 + 1, in - 1);
    taps[size_t(o)] = {i0, i1, src - i0};
  }
  return taps;
}
}  // namespace detail

/// Bilinear down/up-sampling to an arbitrary spatial size (half-pixel
/// centers, clamp-to-edge).
template <typename T>
Var<T> bilinear_resize(Var<T> x, int Ho, int Wo) {
  const auto& s = x->value.shape();
  detail::require(x->value.rank() == 4 && Ho >= 1 && Wo >= 1, "bilinear_resize: bad args");
  const int N = s[0], C = s[1], H = s[2], W = s[3];
  auto ty = std::make_shared<std::vector<detail::LinearTap>>(detail::resize_taps(H, Ho));
  auto tx = std::make_shared<std::vector<detail::LinearTap>>(detail::resize_taps(W, Wo));
  Tensor<T> out({N, C, Ho, Wo});
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < Ho; ++y) {
        auto& a = (*ty)[size_t(y)];
        for (int xo = 0; xo < Wo; ++xo) {
          auto& bb = (*tx)[size_t(xo)];
          T v00 = x->value.at4(n, c, a.i0, bb.i0), v01 = x->value.at4(n, c, a.i0, bb.i1);
          T v10 = x->value.at4(n, c, a.i1, bb.i0), v11 = x->value.at4(n, c, a.i1, bb.i1);
          out.at4(n, c, y, xo) = T((1 - a.w1) * ((1 - bb.w1) * v00 + bb.w1 * v01) +
                                   a.w1 * ((1 - bb.w1) * v10 + bb.w1 * v11));
        }
      }
  auto r = make_result(std::move(out), {x});
  r->backprop = [r = r.get(), x, ty, tx, N, C, Ho, Wo]() {
    if (!x->requires_grad) return;
    for (int n = 0; n < N; ++n)
      for (int c = 0; c < C; ++c)
        for (int y = 0; y < Ho; ++y) {
          auto& a = (*ty)[size_t(y)];
          for (int xo = 0; xo < Wo; ++xo) {
            auto& bb = (*tx)[size_t(xo)];
            T g = r->grad.at4(n, c, y, xo);
            x->grad_buf().at4(n, c, a.i0, bb.i0) += T((1 - a.w1) * (1 - bb.w1)) * g;
            x->grad_buf().at4(n, c, a.i0, bb.i1) += T((1 - a.w1) * bb.w1) * g;
            x->grad_buf().at4(n, c, a.i1, bb.i0) += T(a.w1 * (1 - bb.w1)) * g;
            x->grad_buf().at4(n, c, a.i1, bb.i1) += T(a.w1 * bb.w1) * g;
          }
        }
  };
  return r;
}

}  // namespace madis
