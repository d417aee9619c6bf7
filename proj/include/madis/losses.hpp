#pragma once

#include "madis/ops.hpp"

namespace madis {

template <typename T>
struct LossWeights {
  T lambda_ddm = T(0.001);
  T lambda_di = T(0.001);
  T margin = T(0.01);
};

template <typename T>
struct LossReport {
  Var<T> total, ddm, di, loc;
};

/// Domain discrepancy magnification hinge: mean over the batch of
/// max(d(z_f,z_b) - d(z'_f,z'_b) + m, 0).
template <typename T>
Var<T> ddm_loss(Var<T> zf, Var<T> zb, Var<T> zpf, Var<T> zpb, T margin) {
  Var<T> d = rows_l2_distance(zf, zb);
  Var<T> dp = rows_l2_distance(zpf, zpb);
  Var<T> gap = sub(d, dp);
  Tensor<T> m = Tensor<T>::full(gap->value.shape(), margin);
  return mean(relu(add(gap, make_var(std::move(m)))));
}

/// Direction invariance: mean of 1 - cos(z_f - z_b, z'_f - z'_b).
template <typename T>
Var<T> di_loss(Var<T> zf, Var<T> zb, Var<T> zpf, Var<T> zpb) {
  Var<T> c = rows_cosine(sub(zf, zb), sub(zpf, zpb));
  Tensor<T> ones = Tensor<T>::full(c->value.shape(), T(1));
  return mean(sub(make_var(std::move(ones)), c));
}

/// Wrapped localizer loss: mean BCE on logits plus the smoothed soft-IoU term.
template <typename T>
Var<T> localization_loss(Var<T> logits, const Tensor<T>& gt) {
  return add(bce_with_logits(logits, gt), soft_iou_loss(sigmoid(logits), gt));
}

/// total = lambda_ddm * ddm + lambda_di * di + loc.
template <typename T>
LossReport<T> total_loss(Var<T> ddm, Var<T> di, Var<T> loc, const LossWeights<T>& w) {
  detail::require(w.lambda_ddm >= T(0) && w.lambda_di >= T(0) && w.margin >= T(0),
                  "total_loss: negative weight");
  LossReport<T> r;
  r.ddm = ddm;
  r.di = di;
  r.loc = loc;
  r.total = add(add(scale(ddm, w.lambda_ddm), scale(di, w.lambda_di)), loc);
  return r;
}

}  // namespace madis
