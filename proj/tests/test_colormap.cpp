#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "madis/colormap.hpp"

using namespace madis;

namespace {

// Independent trilinear lookup for one pixel and channel.
double naive_slice(const Tensor<double>& grid, int n, int j, double g, int y, int x, int H,
                   int W) {
  const int Gd = grid.dim(2), Gh = grid.dim(3), Gw = grid.dim(4);
  auto cell = [&](int z, int yy, int xx) {
    z = std::clamp(z, 0, Gd - 1);
    yy = std::clamp(yy, 0, Gh - 1);
    xx = std::clamp(xx, 0, Gw - 1);
    return grid[(((Eigen::Index(n) * 12 + j) * Gd + z) * Gh + yy) * Gw + xx];
  };
  double gx = std::clamp((x + 0.5) * Gw / W - 0.5, 0.0, double(Gw - 1));
  double gy = std::clamp((y + 0.5) * Gh / H - 0.5, 0.0, double(Gh - 1));
  double gz = std::clamp(g * Gd - 0.5, 0.0, double(Gd - 1));
  int x0 = int(std::floor(gx)), y0 = int(std::floor(gy)), z0 = int(std::floor(gz));
  double wx = gx - x0, wy = gy - y0, wz = gz - z0;
  double acc = 0;
  for (int dz = 0; dz < 2; ++dz)
    for (int dy = 0; dy < 2; ++dy)
      for (int dx = 0; dx < 2; ++dx)
        acc += (dz ? wz : 1 - wz) * (dy ? wy : 1 - wy) * (dx ? wx : 1 - wx) *
               cell(z0 + dz, y0 + dy, x0 + dx);
  return acc;
}

}  // namespace

TEST_CASE("slice_grid matches the eight-corner trilinear oracle") {
  std::mt19937 rng(53);
  Tensor<double> grid = Tensor<double>::normal({2, 12, 4, 3, 3}, rng);
  Tensor<double> guidance = Tensor<double>::uniform({2, 1, 6, 6}, rng);
  auto out = slice_grid(make_var(grid), make_var(guidance));
  REQUIRE(out->value.shape() == std::vector<int>{2, 12, 6, 6});
  double worst = 0;
  for (int n = 0; n < 2; ++n)
    for (int j = 0; j < 12; ++j)
      for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x)
          worst = std::max(worst,
                           std::abs(out->value.at4(n, j, y, x) -
                                    naive_slice(grid, n, j, guidance.at4(n, 0, y, x), y, x, 6, 6)));
  CHECK(worst <= 1e-12);
}

TEST_CASE("slice_grid with a constant grid is constant") {
  std::mt19937 rng(59);
  Tensor<double> grid = Tensor<double>::full({1, 12, 2, 2, 2}, 1.25);
  Tensor<double> guidance = Tensor<double>::uniform({1, 1, 8, 8}, rng);
  auto out = slice_grid(make_var(grid), make_var(guidance));
  CHECK((out->value.array() - 1.25).abs().maxCoeff() <= 1e-12);
}

TEST_CASE("apply_affine identity field and clamping") {
  std::mt19937 rng(61);
  Tensor<double> img = Tensor<double>::uniform({1, 3, 4, 4}, rng);
  Tensor<double> field({1, 12, 4, 4});
  for (int row = 0; row < 3; ++row)
    for (Eigen::Index p = 0; p < 16; ++p)
      field[Eigen::Index(4 * row + row) * 16 + p] = 1.0;  // K = I, b = 0
  auto out = apply_affine(make_var(img), make_var(field));
  CHECK((out->value.array() - img.array()).abs().maxCoeff() <= 1e-12);

  // Large offset clamps to 1 and its gradient dies.
  Tensor<double> field2 = field;
  for (Eigen::Index p = 0; p < 16; ++p) field2[3 * 16 + p] = 5.0;  // b0 = 5
  auto fv = make_var(field2, true);
  auto clamped = apply_affine(make_var(img), fv);
  for (Eigen::Index p = 0; p < 16; ++p) CHECK(clamped->value[p] == 1.0);
  backward(sum(clamped));
  for (Eigen::Index p = 0; p < 16; ++p) CHECK(fv->grad[3 * 16 + p] == 0.0);
}

TEST_CASE("apply_affine hand oracle on one pixel") {
  Tensor<double> img({1, 3, 1, 1});
  img[0] = 0.1; img[1] = 0.2; img[2] = 0.3;
  Tensor<double> field({1, 12, 1, 1});
  double K[3][4] = {{1.0, 0.5, 0.0, 0.05}, {0.0, 1.0, 0.25, 0.0}, {0.2, 0.0, 1.0, 0.1}};
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 4; ++col) field[4 * row + col] = K[row][col];
  auto out = apply_affine(make_var(img), make_var(field));
  CHECK(out->value[0] == doctest::Approx(0.1 + 0.5 * 0.2 + 0.05).epsilon(1e-12));
  CHECK(out->value[1] == doctest::Approx(0.2 + 0.25 * 0.3).epsilon(1e-12));
  CHECK(out->value[2] == doctest::Approx(0.2 * 0.1 + 0.3 + 0.1).epsilon(1e-12));
}

TEST_CASE("guidance stream matches a hand two-layer computation") {
  std::mt19937 rng(67);
  ParamStore<double> ps;
  init_colormap_params(ps, ColorMapConfig{}, rng);
  Tensor<double> img = Tensor<double>::uniform({1, 3, 2, 2}, rng);
  auto g = compute_guidance(make_var(img), ps);
  REQUIRE(g->value.shape() == std::vector<int>{1, 1, 2, 2});
  const Tensor<double>& w1 = ps.get("colormap.guide.conv1.w")->value;
  const Tensor<double>& w2 = ps.get("colormap.guide.conv2.w")->value;
  for (int p = 0; p < 4; ++p) {
    double acc2 = 0;
    for (int h = 0; h < 16; ++h) {
      double acc1 = 0;
      for (int c = 0; c < 3; ++c) acc1 += w1[Eigen::Index(h) * 3 + c] * img[Eigen::Index(c) * 4 + p];
      acc2 += w2[h] * std::max(acc1, 0.0);
    }
    CHECK(g->value[p] == doctest::Approx(1.0 / (1.0 + std::exp(-acc2))).epsilon(1e-9));
  }
  CHECK(g->value.array().minCoeff() >= 0.0);
  CHECK(g->value.array().maxCoeff() <= 1.0);
  Tensor<double> bad = Tensor<double>::full({1, 3, 2, 2}, 1.5);
  CHECK_THROWS(compute_guidance(make_var(bad), ps));
}

TEST_CASE("predict_grid shape and grid-size contract") {
  std::mt19937 rng(71);
  ColorMapConfig cfg;
  ParamStore<float> ps;
  init_colormap_params(ps, cfg, rng);
  Tensor<float> img = Tensor<float>::uniform({2, 3, 64, 64}, rng);
  auto grid = predict_grid(make_var(img), ps, cfg);
  CHECK(grid->value.shape() == std::vector<int>{2, 12, 4, 8, 8});
  ColorMapConfig bad = cfg;
  bad.grid_h = 4;
  CHECK_THROWS(predict_grid(make_var(img), ps, bad));
}

TEST_CASE("identity-initialized color_map is the identity image map") {
  std::mt19937 rng(73);
  ColorMapConfig cfg;
  ParamStore<float> ps;
  init_colormap_params(ps, cfg, rng);
  Tensor<float> img = Tensor<float>::uniform({1, 3, 64, 64}, rng);
  auto [retouched, field] = color_map(make_var(img), ps, cfg);
  CHECK((retouched->value.array() - img.array()).abs().maxCoeff() <= 1e-6f);
  CHECK(field->value.shape() == std::vector<int>{1, 12, 64, 64});
}
