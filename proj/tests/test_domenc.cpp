#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "madis/domenc.hpp"
#include "madis/init.hpp"

using namespace madis;

namespace {

std::pair<ParamStore<float>, DomainEncoderConfig> make_encoder(uint32_t seed) {
  std::mt19937 rng(seed);
  DomainEncoderConfig cfg;
  ParamStore<float> ps;
  init_domenc_params(ps, cfg, rng);
  return {std::move(ps), cfg};
}

Tensor<float> half_mask(int H, int W) {
  Tensor<float> m({1, 1, H, W});
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W / 2; ++x) m.at4(0, 0, y, x) = 1.0f;
  return m;
}

}  // namespace

TEST_CASE("orthogonal init yields orthonormal rows up to gain") {
  std::mt19937 rng(79);
  Tensor<double> w = orthogonal_init<double>({8, 4, 3, 3}, rng);  // 8 x 36, wide
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> W(
      w.data(), 8, 36);
  Eigen::MatrixXd G = W * W.transpose();
  const double gain2 = 2.0;  // gain sqrt(2)
  CHECK((G - gain2 * Eigen::MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("he init variance is near 2/fan_in") {
  std::mt19937 rng(83);
  Tensor<double> w = he_init<double>({64, 32, 3, 3}, rng);
  double var = (w.array() - w.array().mean()).square().mean();
  CHECK(var == doctest::Approx(2.0 / (32 * 9)).epsilon(0.1));
}

TEST_CASE("encoder registration: frozen extractor, trainable projectors") {
  auto [ps, cfg] = make_encoder(1);
  CHECK(!ps.trainable("domenc.frozen.block1.conv1.w"));
  CHECK(!ps.trainable("domenc.frozen.block3.conv3.b"));
  CHECK(ps.trainable("domenc.proj.tap1.w"));
  CHECK(ps.trainable("domenc.proj.weight2"));
  CHECK(ps.get("domenc.proj.weight1")->value[0] == doctest::Approx(1.0f / 3.0f));
  CHECK(ps.get("domenc.proj.tap3.w")->value.shape() == std::vector<int>{16, 64});
}

TEST_CASE("extract_code shape and finiteness, including empty masks") {
  auto [ps, cfg] = make_encoder(2);
  std::mt19937 rng(5);
  Tensor<float> img = Tensor<float>::uniform({2, 3, 16, 16}, rng);
  Tensor<float> m({2, 1, 16, 16});
  for (int y = 4; y < 10; ++y)
    for (int x = 4; x < 10; ++x) m.at4(0, 0, y, x) = 1.0f;  // second item stays empty
  auto z = extract_code(make_var(img), m, ps, cfg);
  REQUIRE(z->value.shape() == std::vector<int>{2, 16});
  CHECK(z->value.all_finite());
}

TEST_CASE("code is invariant to arbitrary background perturbation") {
  auto [ps, cfg] = make_encoder(3);
  std::mt19937 rng(7);
  Tensor<float> img = Tensor<float>::uniform({1, 3, 16, 16}, rng);
  Tensor<float> m = half_mask(16, 16);
  auto z1 = extract_code(make_var(img), m, ps, cfg);

  Tensor<float> img2 = img;
  Tensor<float> noise = Tensor<float>::uniform({1, 3, 16, 16}, rng, -3.0f, 3.0f);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        if (m.at4(0, 0, y, x) == 0.0f) img2.at4(0, c, y, x) += noise.at4(0, c, y, x);
  auto z2 = extract_code(make_var(img2), m, ps, cfg);
  CHECK((z1->value.array() - z2->value.array()).abs().maxCoeff() <= 1e-6f);
}

TEST_CASE("foreground perturbation does change the code") {
  auto [ps, cfg] = make_encoder(4);
  std::mt19937 rng(9);
  Tensor<float> img = Tensor<float>::uniform({1, 3, 16, 16}, rng);
  Tensor<float> m = half_mask(16, 16);
  auto z1 = extract_code(make_var(img), m, ps, cfg);
  Tensor<float> img2 = img;
  img2.at4(0, 0, 5, 2) += 0.5f;  // inside the mask
  auto z2 = extract_code(make_var(img2), m, ps, cfg);
  CHECK((z1->value.array() - z2->value.array()).abs().maxCoeff() > 1e-5f);
}

TEST_CASE("gradients flow into the image but never into frozen weights") {
  auto [ps, cfg] = make_encoder(5);
  std::mt19937 rng(11);
  Tensor<float> img = Tensor<float>::uniform({1, 3, 16, 16}, rng);
  auto iv = make_var(img, true);
  auto z = extract_code(iv, half_mask(16, 16), ps, cfg);
  backward(mean(z));
  CHECK(iv->grad_ready);
  CHECK(iv->grad.array().abs().sum() > 0.0f);
  CHECK(!ps.get("domenc.frozen.block1.conv1.w")->grad_ready);
  CHECK(ps.get("domenc.proj.tap1.w")->grad_ready);
  CHECK(ps.get("domenc.proj.weight1")->grad_ready);
}

TEST_CASE("same seed rebuilds identical encoder parameters") {
  auto [ps1, c1] = make_encoder(6);
  auto [ps2, c2] = make_encoder(6);
  ps1.for_each([&ps2](const std::string& name, Var<float>& var, bool) {
    CHECK((var->value.array() == ps2.get(name)->value.array()).all());
  });
}
