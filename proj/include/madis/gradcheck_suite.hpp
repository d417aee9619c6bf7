#pragma once

#include "madis/attention.hpp"
#include "madis/colormap.hpp"
#include "madis/domenc.hpp"
#include "madis/gradcheck.hpp"
#include "madis/losses.hpp"
#include "madis/unet.hpp"

#include <string>
#include <vector>

namespace madis {

struct GradCheckCase {
  std::string name;
  double max_rel_err = 0;
  bool pass = false;
};

namespace gcs_detail {

using D = double;
using F = std::function<Var<D>(std::vector<Var<D>>&)>;

/// Uniform tensor biased away from the kinks of relu/clamp/hinge ops.
inline Tensor<D> smooth_uniform(std::vector<int> shape, std::mt19937& rng, D lo = D(0.2),
                                D hi = D(0.8)) {
  return Tensor<D>::uniform(std::move(shape), rng, lo, hi);
}

inline Tensor<D> signed_uniform(std::vector<int> shape, std::mt19937& rng) {
  Tensor<D> t = Tensor<D>::uniform(std::move(shape), rng, D(-1), D(1));
  // Nudge magnitudes off zero so relu/maxpool taps are unambiguous.
  t.array() = t.array().sign() * (t.array().abs() + D(0.05));
  return t;
}

inline Tensor<D> binary_mask(std::vector<int> shape, std::mt19937& rng) {
  Tensor<D> t = Tensor<D>::uniform(std::move(shape), rng);
  t.array() = (t.array() > D(0.5)).cast<D>();
  if (t.array().sum() == D(0)) t[0] = D(1);  // keep at least one visible pixel
  return t;
}

}  // namespace gcs_detail

/// Finite-difference checks over every differentiable op at small shapes,
/// `n_seeds` random draws each. Inputs are drawn away from the kinks of the
/// piecewise ops so central differences see a smooth function.
inline std::vector<GradCheckCase> run_gradcheck_suite(double tol = 1e-4, int n_seeds = 3) {
  using namespace gcs_detail;
  std::vector<GradCheckCase> cases;

  auto run = [&](const std::string& name,
                 const std::function<std::pair<F, std::vector<Tensor<D>>>(std::mt19937&)>&
                     build) {
    GradCheckCase c;
    c.name = name;
    c.pass = true;
    for (int s = 0; s < n_seeds; ++s) {
      std::mt19937 rng(uint32_t(1000 + 31 * s));
      auto [f, inputs] = build(rng);
      GradCheckReport rep = grad_check(f, std::move(inputs));
      c.max_rel_err = std::max(c.max_rel_err, rep.max_rel_err);
      c.pass = c.pass && rep.finite && rep.max_rel_err <= tol;
    }
    cases.push_back(std::move(c));
  };

  run("add_mul_chain", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) { return mean(mul(add(v[0], v[1]), v[1])); };
    return std::make_pair(f, std::vector<Tensor<D>>{signed_uniform({2, 3}, rng),
                                                    signed_uniform({2, 3}, rng)});
  });
  run("relu_sigmoid", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) { return mean(sigmoid(relu(v[0]))); };
    return std::make_pair(f, std::vector<Tensor<D>>{signed_uniform({3, 4}, rng)});
  });
  run("scale_by_residual", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) { return mean(add_scaled(v[0], v[1], v[2])); };
    return std::make_pair(f, std::vector<Tensor<D>>{signed_uniform({2, 5}, rng),
                                                    signed_uniform({1}, rng),
                                                    signed_uniform({2, 5}, rng)});
  });
  run("reshape_concat", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) {
      return mean(concat_channels(v[0], reshape(v[1], {2, 1, 3, 3})));
    };
    return std::make_pair(f, std::vector<Tensor<D>>{signed_uniform({2, 2, 3, 3}, rng),
                                                    signed_uniform({2, 9}, rng)});
  });
  run("select_batch", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) { return mean(select_batch(v[0], {2, 0, 2})); };
    return std::make_pair(f, std::vector<Tensor<D>>{signed_uniform({3, 2, 2}, rng)});
  });
  run("fully_connected", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) { return mean(fully_connected(v[0], v[1], v[2])); };
    return std::make_pair(f, std::vector<Tensor<D>>{signed_uniform({3, 4}, rng),
                                                    signed_uniform({2, 4}, rng),
                                                    signed_uniform({2}, rng)});
  });
  run("conv2d_s1p1", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) { return mean(conv2d(v[0], v[1], v[2], 1, 1)); };
    return std::make_pair(f, std::vector<Tensor<D>>{smooth_uniform({2, 2, 5, 5}, rng),
                                                    signed_uniform({3, 2, 3, 3}, rng),
                                                    signed_uniform({3}, rng)});
  });
  run("conv2d_s2p1", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) { return mean(conv2d(v[0], v[1], v[2], 2, 1)); };
    return std::make_pair(f, std::vector<Tensor<D>>{smooth_uniform({1, 3, 6, 6}, rng),
                                                    signed_uniform({2, 3, 3, 3}, rng),
                                                    signed_uniform({2}, rng)});
  });
  run("cdc_conv2d", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) {
      return mean(cdc_conv2d(v[0], v[1], v[2], 1, 1, D(0.7)));
    };
    return std::make_pair(f, std::vector<Tensor<D>>{smooth_uniform({2, 2, 5, 5}, rng),
                                                    signed_uniform({3, 2, 3, 3}, rng),
                                                    signed_uniform({3}, rng)});
  });
  run("cdc_conv2d_s2", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) {
      return mean(cdc_conv2d(v[0], v[1], v[2], 2, 1, D(0.3)));
    };
    return std::make_pair(f, std::vector<Tensor<D>>{smooth_uniform({1, 3, 6, 6}, rng),
                                                    signed_uniform({2, 3, 3, 3}, rng),
                                                    signed_uniform({2}, rng)});
  });
  run("partial_conv2d", [&](std::mt19937& rng) {
    Tensor<D> mask = binary_mask({2, 1, 5, 5}, rng);
    F f = [mask](std::vector<Var<D>>& v) {
      return mean(partial_conv2d(v[0], mask, v[1], v[2], 1, 1).output);
    };
    return std::make_pair(f, std::vector<Tensor<D>>{smooth_uniform({2, 2, 5, 5}, rng),
                                                    signed_uniform({3, 2, 3, 3}, rng),
                                                    signed_uniform({3}, rng)});
  });
  run("attention_core", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) { return mean(attention_core(v[0], v[1], v[2])); };
    return std::make_pair(f, std::vector<Tensor<D>>{signed_uniform({2, 2, 3, 3}, rng),
                                                    signed_uniform({2, 2, 3, 3}, rng),
                                                    signed_uniform({2, 3, 3, 3}, rng)});
  });
  run("attention_block", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) {
      return mean(attention_block(v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]));
    };
    return std::make_pair(
        f, std::vector<Tensor<D>>{signed_uniform({1, 3, 3, 3}, rng),
                                  signed_uniform({2, 3, 1, 1}, rng), signed_uniform({2}, rng),
                                  signed_uniform({2, 3, 1, 1}, rng), signed_uniform({2}, rng),
                                  signed_uniform({3, 3, 1, 1}, rng), signed_uniform({3}, rng),
                                  signed_uniform({1}, rng)});
  });
  run("slice_grid", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) {
      return mean(slice_grid(reshape(v[0], {1, 12, 2, 2, 2}), v[1]));
    };
    return std::make_pair(f,
                          std::vector<Tensor<D>>{signed_uniform({1, 96}, rng),
                                                 smooth_uniform({1, 1, 4, 4}, rng, 0.3, 0.7)});
  });
  run("apply_affine", [&](std::mt19937& rng) {
    // Near-identity field keeps the pre-clamp output inside (0,1).
    F f = [](std::vector<Var<D>>& v) { return mean(apply_affine(v[0], v[1])); };
    Tensor<D> field = Tensor<D>::uniform({1, 12, 3, 3}, rng, D(-0.05), D(0.05));
    for (int row = 0; row < 3; ++row)
      for (Eigen::Index p = 0; p < 9; ++p)
        field[(4 * row + row) * 9 + p] += D(1);
    return std::make_pair(
        f, std::vector<Tensor<D>>{smooth_uniform({1, 3, 3, 3}, rng, 0.3, 0.7), field});
  });
  run("masked_gap", [&](std::mt19937& rng) {
    Tensor<D> mask = binary_mask({2, 1, 4, 4}, rng);
    F f = [mask](std::vector<Var<D>>& v) { return mean(masked_gap(v[0], mask)); };
    return std::make_pair(f, std::vector<Tensor<D>>{signed_uniform({2, 3, 4, 4}, rng)});
  });
  run("max_pool2x2", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) { return mean(max_pool2x2(v[0])); };
    return std::make_pair(f, std::vector<Tensor<D>>{signed_uniform({2, 2, 4, 4}, rng)});
  });
  run("global_avg_pool", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) { return mean(global_avg_pool(v[0])); };
    return std::make_pair(f, std::vector<Tensor<D>>{signed_uniform({2, 3, 4, 4}, rng)});
  });
  run("bilinear_resize", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) {
      return mean(bilinear_resize(bilinear_resize(v[0], 3, 3), 6, 6));
    };
    return std::make_pair(f, std::vector<Tensor<D>>{signed_uniform({1, 2, 5, 5}, rng)});
  });
  run("rows_l2_distance", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) { return mean(rows_l2_distance(v[0], v[1])); };
    return std::make_pair(f, std::vector<Tensor<D>>{signed_uniform({3, 5}, rng),
                                                    signed_uniform({3, 5}, rng)});
  });
  run("rows_cosine", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) { return mean(rows_cosine(v[0], v[1])); };
    return std::make_pair(f, std::vector<Tensor<D>>{signed_uniform({3, 5}, rng),
                                                    signed_uniform({3, 5}, rng)});
  });
  run("bce_with_logits", [&](std::mt19937& rng) {
    Tensor<D> gt = binary_mask({2, 1, 3, 3}, rng);
    F f = [gt](std::vector<Var<D>>& v) { return bce_with_logits(v[0], gt); };
    return std::make_pair(f, std::vector<Tensor<D>>{signed_uniform({2, 1, 3, 3}, rng)});
  });
  run("soft_iou_loss", [&](std::mt19937& rng) {
    Tensor<D> gt = binary_mask({2, 1, 3, 3}, rng);
    F f = [gt](std::vector<Var<D>>& v) { return soft_iou_loss(sigmoid(v[0]), gt); };
    return std::make_pair(f, std::vector<Tensor<D>>{signed_uniform({2, 1, 3, 3}, rng)});
  });
  run("localization_loss", [&](std::mt19937& rng) {
    Tensor<D> gt = binary_mask({1, 1, 4, 4}, rng);
    F f = [gt](std::vector<Var<D>>& v) { return localization_loss(v[0], gt); };
    return std::make_pair(f, std::vector<Tensor<D>>{signed_uniform({1, 1, 4, 4}, rng)});
  });
  run("ddm_loss", [&](std::mt19937& rng) {
    // Codes spaced so the hinge is active and away from its kink.
    F f = [](std::vector<Var<D>>& v) {
      return ddm_loss(v[0], v[1], v[2], v[3], D(0.01));
    };
    Tensor<D> zf = signed_uniform({2, 4}, rng), zb = signed_uniform({2, 4}, rng);
    Tensor<D> zpf = zf, zpb = zb;
    zpf.array() *= D(0.5);  // shrink d' so the hinge stays positive
    return std::make_pair(f, std::vector<Tensor<D>>{zf, zb, zpf, zpb});
  });
  run("di_loss", [&](std::mt19937& rng) {
    F f = [](std::vector<Var<D>>& v) { return di_loss(v[0], v[1], v[2], v[3]); };
    return std::make_pair(f, std::vector<Tensor<D>>{
                                 signed_uniform({2, 4}, rng), signed_uniform({2, 4}, rng),
                                 signed_uniform({2, 4}, rng), signed_uniform({2, 4}, rng)});
  });
  run("unet_block", [&](std::mt19937& rng) {
    // One encoder block + pool + upsample + skip concat + decoder conv.
    F f = [](std::vector<Var<D>>& v) {
      Var<D> e = relu(conv2d(v[0], v[1], v[2], 1, 1));
      Var<D> h = bilinear_resize(max_pool2x2(e), 4, 4);
      return mean(conv2d(concat_channels(h, e), v[3], v[4], 1, 1));
    };
    return std::make_pair(f, std::vector<Tensor<D>>{smooth_uniform({1, 2, 4, 4}, rng),
                                                    signed_uniform({3, 2, 3, 3}, rng),
                                                    signed_uniform({3}, rng),
                                                    signed_uniform({2, 6, 3, 3}, rng),
                                                    signed_uniform({2}, rng)});
  });
  run("color_map_stage", [&](std::mt19937& rng) {
    // Guidance + grid + slice + affine end to end over a tiny grid.
    F f = [](std::vector<Var<D>>& v) {
      Var<D> guidance = sigmoid(conv2d(v[0], v[1], v[2], 1, 0));
      Var<D> field = slice_grid(reshape(v[3], {1, 12, 2, 2, 2}), guidance);
      return mean(apply_affine(v[0], field));
    };
    // Keep the affine output interior: small coefficients, diagonal ~0.8.
    Tensor<D> grid = Tensor<D>::uniform({1, 96}, rng, D(-0.05), D(0.05));
    for (int j : {0, 5, 10})
      for (Eigen::Index p = 0; p < 8; ++p) grid[Eigen::Index(j) * 8 + p] += D(0.8);
    return std::make_pair(f, std::vector<Tensor<D>>{smooth_uniform({1, 3, 4, 4}, rng, 0.3, 0.7),
                                                    signed_uniform({1, 3, 1, 1}, rng),
                                                    signed_uniform({1}, rng), grid});
  });

  return cases;
}

/// Sensitivity control: a deliberately corrupted backward must be flagged.
/// Returns true when grad_check reports the planted fault.
inline bool gradcheck_detects_planted_fault(double tol = 1e-4) {
  using namespace gcs_detail;
  F f = [](std::vector<Var<D>>& v) {
    Tensor<D> out(v[0]->value.shape());
    out.array() = v[0]->value.array() * v[0]->value.array();
    auto r = make_result(std::move(out), {v[0]});
    Var<D> a = v[0];
    r->backprop = [r = r.get(), a]() {
      // Planted fault: gradient of x^2 reported as 3x instead of 2x.
      a->grad_buf().array() += r->grad.array() * D(3) * a->value.array();
    };
    return mean(r);
  };
  std::mt19937 rng(99);
  GradCheckReport rep = grad_check(f, {smooth_uniform({2, 3}, rng)});
  return rep.max_rel_err > tol;
}

}  // namespace madis
