#pragma once

#include "madis/attention.hpp"
#include "madis/init.hpp"
#include "madis/param_store.hpp"

namespace madis {

/// Color-mapping stage configuration. Defaults are desk scale: 64x64 inputs,
/// a 32x32 low-res coefficient stream and an 8x8x4 bilateral grid.
struct ColorMapConfig {
  int lowres_size = 32;
  int grid_depth = 4;  // Gd
  int grid_h = 8;      // Gh
  int grid_w = 8;      // Gw
  double theta = 0.7;  // CDC vanilla/central-difference tradeoff
};

/// Registers all color-mapping parameters under "colormap.". The grid head
/// starts as the identity affine (zero weights, identity bias) so the stage
/// begins as a no-op color map.
template <typename T>
void init_colormap_params(ParamStore<T>& ps, const ColorMapConfig& cfg, std::mt19937& rng) {
  // Guidance stream: two pointwise convs, 3 -> 16 -> 1.
  ps.add("colormap.guide.conv1.w", he_init<T>({16, 3, 1, 1}, rng));
  ps.add("colormap.guide.conv1.b", Tensor<T>::zeros({16}));
  ps.add("colormap.guide.conv2.w", he_init<T>({1, 16, 1, 1}, rng));
  ps.add("colormap.guide.conv2.b", Tensor<T>::zeros({1}));
  // Low-res stream: CDC stack 3 -> 16 -> 32 -> 64 (strides 2,2,1), then
  // self-attention and the 1x1 grid head.
  ps.add("colormap.lowres.conv1.w", he_init<T>({16, 3, 3, 3}, rng));
  ps.add("colormap.lowres.conv1.b", Tensor<T>::zeros({16}));
  ps.add("colormap.lowres.conv2.w", he_init<T>({32, 16, 3, 3}, rng));
  ps.add("colormap.lowres.conv2.b", Tensor<T>::zeros({32}));
  ps.add("colormap.lowres.conv3.w", he_init<T>({64, 32, 3, 3}, rng));
  ps.add("colormap.lowres.conv3.b", Tensor<T>::zeros({64}));
  const int cr = std::max(1, 64 / 8);
  ps.add("colormap.attn.wq", he_init<T>({cr, 64, 1, 1}, rng));
  ps.add("colormap.attn.bq", Tensor<T>::zeros({cr}));
  ps.add("colormap.attn.wk", he_init<T>({cr, 64, 1, 1}, rng));
  ps.add("colormap.attn.bk", Tensor<T>::zeros({cr}));
  ps.add("colormap.attn.wv", he_init<T>({64, 64, 1, 1}, rng));
  ps.add("colormap.attn.bv", Tensor<T>::zeros({64}));
  ps.add("colormap.attn.gamma", Tensor<T>::zeros({1}));
  const int head_c = 12 * cfg.grid_depth;
  ps.add("colormap.head.w", Tensor<T>::zeros({head_c, 64, 1, 1}));
  Tensor<T> head_b({head_c});
  for (int d = 0; d < cfg.grid_depth; ++d)
    for (int j : {0, 5, 10})  // diagonal of K
      head_b[Eigen::Index(j) * cfg.grid_depth + d] = T(1);
  ps.add("colormap.head.b", std::move(head_b));
}

/// Learned per-pixel intensity used as the grid depth coordinate. Pointwise
/// 3 -> 16 (ReLU) -> 1 (sigmoid); input must already be in [0,1].
template <typename T>
Var<T> compute_guidance(Var<T> image, ParamStore<T>& ps) {
  detail::require(image->value.array().minCoeff() >= T(0) &&
                      image->value.array().maxCoeff() <= T(1),
                  "compute_guidance: image outside [0,1]");
  Var<T> h = relu(conv2d(image, ps.get("colormap.guide.conv1.w"),
                         ps.get("colormap.guide.conv1.b")));
  return sigmoid(conv2d(h, ps.get("colormap.guide.conv2.w"),
                        ps.get("colormap.guide.conv2.b")));
}

/// Low-res stream producing the bilateral grid [N,12,Gd,Gh,Gw].
template <typename T>
Var<T> predict_grid(Var<T> image, ParamStore<T>& ps, const ColorMapConfig& cfg) {
  const int S = cfg.lowres_size;
  detail::require(image->value.dim(2) >= S && image->value.dim(3) >= S,
                  "predict_grid: image smaller than the low-res stream");
  detail::require(S / 4 == cfg.grid_h && S / 4 == cfg.grid_w,
                  "predict_grid: grid size must be lowres_size/4");
  const T theta = T(cfg.theta);
  Var<T> h = bilinear_resize(image, S, S);
  h = relu(cdc_conv2d(h, ps.get("colormap.lowres.conv1.w"),
                      ps.get("colormap.lowres.conv1.b"), 2, 1, theta));
  h = relu(cdc_conv2d(h, ps.get("colormap.lowres.conv2.w"),
                      ps.get("colormap.lowres.conv2.b"), 2, 1, theta));
  h = relu(cdc_conv2d(h, ps.get("colormap.lowres.conv3.w"),
                      ps.get("colormap.lowres.conv3.b"), 1, 1, theta));
  h = attention_block(h, ps.get("colormap.attn.wq"), ps.get("colormap.attn.bq"),
                      ps.get("colormap.attn.wk"), ps.get("colormap.attn.bk"),
                      ps.get("colormap.attn.wv"), ps.get("colormap.attn.bv"),
                      ps.get("colormap.attn.gamma"));
  h = conv2d(h, ps.get("colormap.head.w"), ps.get("colormap.head.b"));
  return reshape(h, {image->value.dim(0), 12, cfg.grid_depth, cfg.grid_h, cfg.grid_w});
}

/// Trilinear grid lookup: per pixel (x,y) with guidance g, sample the grid at
/// ((x+0.5)Gw/W-0.5, (y+0.5)Gh/H-0.5, g*Gd-0.5), clamp-to-edge.
/// Differentiable in both the grid and the guidance.
template <typename T>
Var<T> slice_grid(Var<T> grid, Var<T> guidance) {
  const auto& gs = grid->value.shape();
  const auto& us = guidance->value.shape();
  detail::require(gs.size() == 5 && gs[1] == 12, "slice_grid: grid [N,12,Gd,Gh,Gw] expected");
  detail::require(us.size() == 4 && us[1] == 1 && us[0] == gs[0],
                  "slice_grid: guidance [N,1,H,W] expected");
  detail::require(gs[2] >= 2 && gs[3] >= 2 && gs[4] >= 2, "slice_grid: grid too small");
  const int N = gs[0], Gd = gs[2], Gh = gs[3], Gw = gs[4], H = us[2], W = us[3];

  auto cell = [Gd, Gh, Gw](const Tensor<T>& g, int n, int j, int z, int y, int x) -> T {
    return g[(((Eigen::Index(n) * 12 + j) * Gd + z) * Gh + y) * Gw + x];
  };
  struct Taps {
    int x0, x1, y0, y1;
    T wx, wy;
  };
  auto xy_taps = [Gh, Gw, H, W](int y, int x) {
    T gx = (T(x) + T(0.5)) * T(Gw) / T(W) - T(0.5);
    T gy = (T(y) + T(0.5)) * T(Gh) / T(H) - T(0.5);
    gx = std::min(std::max(gx, T(0)), T(Gw - 1));
    gy = std::min(std::max(gy, T(0)), T(Gh - 1));
    Taps t;
    t.x0 = int(std::floor(gx));
    t.x1 = std::min(t.x0 + 1, Gw - 1);
    t.wx = gx - T(t.x0);
    t.y0 = int(std::floor(gy));
    t.y1 = std::min(t.y0 + 1, Gh - 1);
    t.wy = gy - T(t.y0);
    return t;
  };

  Tensor<T> out({N, 12, H, W});
  for (int n = 0; n < N; ++n)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x) {
        Taps t = xy_taps(y, x);
        T gz = guidance->value.at4(n, 0, y, x) * T(Gd) - T(0.5);
        gz = std::min(std::max(gz, T(0)), T(Gd - 1));
        int z0 = int(std::floor(gz)), z1 = std::min(z0 + 1, Gd - 1);
        T wz = gz - T(z0);
        for (int j = 0; j < 12; ++j) {
          T c00 = (T(1) - t.wx) * cell(grid->value, n, j, z0, t.y0, t.x0) +
                  t.wx * cell(grid->value, n, j, z0, t.y0, t.x1);
          T c01 = (T(1) - t.wx) * cell(grid->value, n, j, z0, t.y1, t.x0) +
                  t.wx * cell(grid->value, n, j, z0, t.y1, t.x1);
          T c10 = (T(1) - t.wx) * cell(grid->value, n, j, z1, t.y0, t.x0) +
                  t.wx * cell(grid->value, n, j, z1, t.y0, t.x1);
          T c11 = (T(1) - t.wx) * cell(grid->value, n, j, z1, t.y1, t.x0) +
                  t.wx * cell(grid->value, n, j, z1, t.y1, t.x1);
          T lo = (T(1) - t.wy) * c00 + t.wy * c01;
          T hi = (T(1) - t.wy) * c10 + t.wy * c11;
          out.at4(n, j, y, x) = (T(1) - wz) * lo + wz * hi;
        }
      }
  auto r = make_result(std::move(out), {grid, guidance});
  r->backprop = [r = r.get(), grid, guidance, xy_taps, cell, N, Gd, Gh, Gw, H, W]() {
    auto gcell = [&](Tensor<T>& g, int n, int j, int z, int y, int x) -> T& {
      return g[(((Eigen::Index(n) * 12 + j) * Gd + z) * Gh + y) * Gw + x];
    };
    for (int n = 0; n < N; ++n)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          Taps t = xy_taps(y, x);
          T gval = guidance->value.at4(n, 0, y, x);
          T gz = gval * T(Gd) - T(0.5);
          // Clamped depth: zero guidance gradient outside the lattice.
          bool interior = gz > T(0) && gz < T(Gd - 1);
          gz = std::min(std::max(gz, T(0)), T(Gd - 1));
          int z0 = int(std::floor(gz)), z1 = std::min(z0 + 1, Gd - 1);
          T wz = gz - T(z0);
          T dz_accum = 0;
          for (int j = 0; j < 12; ++j) {
            T g = r->grad.at4(n, j, y, x);
            T w00 = (T(1) - t.wx) * (T(1) - t.wy), w01 = t.wx * (T(1) - t.wy);
            T w10 = (T(1) - t.wx) * t.wy, w11 = t.wx * t.wy;
            if (grid->requires_grad) {
              gcell(grid->grad_buf(), n, j, z0, t.y0, t.x0) += g * (T(1) - wz) * w00;
              gcell(grid->grad_buf(), n, j, z0, t.y0, t.x1) += g * (T(1) - wz) * w01;
              gcell(grid->grad_buf(), n, j, z0, t.y1, t.x0) += g * (T(1) - wz) * w10;
              gcell(grid->grad_buf(), n, j, z0, t.y1, t.x1) += g * (T(1) - wz) * w11;
              gcell(grid->grad_buf(), n, j, z1, t.y0, t.x0) += g * wz * w00;
              gcell(grid->grad_buf(), n, j, z1, t.y0, t.x1) += g * wz * w01;
              gcell(grid->grad_buf(), n, j, z1, t.y1, t.x0) += g * wz * w10;
              gcell(grid->grad_buf(), n, j, z1, t.y1, t.x1) += g * wz * w11;
            }
            if (guidance->requires_grad && interior) {
              T lo = w00 * cell(grid->value, n, j, z0, t.y0, t.x0) +
                     w01 * cell(grid->value, n, j, z0, t.y0, t.x1) +
                     w10 * cell(grid->value, n, j, z0, t.y1, t.x0) +
                     w11 * cell(grid->value, n, j, z0, t.y1, t.x1);
              T hi = w00 * cell(grid->value, n, j, z1, t.y0, t.x0) +
                     w01 * cell(grid->value, n, j, z1, t.y0, t.x1) +
                     w10 * cell(grid->value, n, j, z1, t.y1, t.x0) +
                     w11 * cell(grid->value, n, j, z1, t.y1, t.x1);
              dz_accum += g * (hi - lo);
            }
          }
          if (guidance->requires_grad && interior)
            guidance->grad_buf().at4(n, 0, y, x) += dz_accum * T(Gd);
        }
  };
  return r;
}

/// Per-pixel affine color transform I'(p) = clamp01(K(p) I(p) + b(p)). The
/// field layout interleaves rows of K with the offset: [K00,K01,K02,b0,...].
template <typename T>
Var<T> apply_affine(Var<T> image, Var<T> field) {
  const auto& is = image->value.shape();
  const auto& fs = field->value.shape();
  detail::require(is.size() == 4 && is[1] == 3, "apply_affine: [N,3,H,W] image expected");
  detail::require(fs.size() == 4 && fs[1] == 12 && fs[0] == is[0] && fs[2] == is[2] &&
                      fs[3] == is[3],
                  "apply_affine: field shape mismatch");
  const int N = is[0], H = is[2], W = is[3];
  Tensor<T> out({N, 3, H, W});
  for (int n = 0; n < N; ++n)
    for (int y = 0; y < H; ++y)
      for (int x = 0; x < W; ++x)
        for (int row = 0; row < 3; ++row) {
          T v = field->value.at4(n, 4 * row + 3, y, x);
          for (int col = 0; col < 3; ++col)
            v += field->value.at4(n, 4 * row + col, y, x) * image->value.at4(n, col, y, x);
          out.at4(n, row, y, x) = std::min(std::max(v, T(0)), T(1));
        }
  auto r = make_result(std::move(out), {image, field});
  r->backprop = [r = r.get(), image, field, N, H, W]() {
    for (int n = 0; n < N; ++n)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
          for (int row = 0; row < 3; ++row) {
            T pre = field->value.at4(n, 4 * row + 3, y, x);
            for (int col = 0; col < 3; ++col)
              pre += field->value.at4(n, 4 * row + col, y, x) * image->value.at4(n, col, y, x);
            if (pre <= T(0) || pre >= T(1)) continue;  // hard clamp: zero gradient
            T g = r->grad.at4(n, row, y, x);
            if (field->requires_grad) {
              field->grad_buf().at4(n, 4 * row + 3, y, x) += g;
              for (int col = 0; col < 3; ++col)
                field->grad_buf().at4(n, 4 * row + col, y, x) +=
                    g * image->value.at4(n, col, y, x);
            }
            if (image->requires_grad)
              for (int col = 0; col < 3; ++col)
                image->grad_buf().at4(n, col, y, x) +=
                    g * field->value.at4(n, 4 * row + col, y, x);
          }
  };
  return r;
}

/// Full color-mapping stage: I -> (I', per-pixel affine field).
template <typename T>
std::pair<Var<T>, Var<T>> color_map(Var<T> image, ParamStore<T>& ps,
                                    const ColorMapConfig& cfg) {
  Var<T> grid = predict_grid(image, ps, cfg);
  Var<T> guidance = compute_guidance(image, ps);
  Var<T> field = slice_grid(grid, guidance);
  return {apply_affine(image, field), field};
}

}  // namespace madis
