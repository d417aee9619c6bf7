#pragma once

#include "madis/conv.hpp"
#include "madis/init.hpp"
#include "madis/param_store.hpp"

namespace madis {

/// Domain encoder configuration. The frozen extractor mirrors the tap
/// topology of VGG-19's conv1_2 / conv2_2 / conv3_3 at desk-scale widths.
struct DomainEncoderConfig {
  int code_dim = 16;  // d_dom
  int width1 = 16;
  int width2 = 32;
  int width3 = 64;
  // Projector init gain. A random orthogonal extractor produces much smaller
  // features than pretrained ones, so without this the hinge's gradient into
  // the color mapper is orders of magnitude weaker than the localization
  // gradient and the margin cannot be held at the default loss weights.
  double proj_gain = 64.0;
};

/// Registers the encoder under "domenc.". Extractor weights live under
/// "domenc.frozen." (orthogonal, seeded, never updated; external weights can
/// be imported through the checkpoint container under the same names). The
/// per-tap projectors and tap-combination weights are trainable.
template <typename T>
void init_domenc_params(ParamStore<T>& ps, const DomainEncoderConfig& cfg, std::mt19937& rng) {
  auto pconv = [&](const std::string& name, int cout, int cin) {
    ps.add("domenc.frozen." + name + ".w", orthogonal_init<T>({cout, cin, 3, 3}, rng), false);
    ps.add("domenc.frozen." + name + ".b", Tensor<T>::zeros({cout}), false);
  };
  pconv("block1.conv1", cfg.width1, 3);
  pconv("block1.conv2", cfg.width1, cfg.width1);
  pconv("block2.conv1", cfg.width2, cfg.width1);
  pconv("block2.conv2", cfg.width2, cfg.width2);
  pconv("block3.conv1", cfg.width3, cfg.width2);
  pconv("block3.conv2", cfg.width3, cfg.width3);
  pconv("block3.conv3", cfg.width3, cfg.width3);
  const int widths[3] = {cfg.width1, cfg.width2, cfg.width3};
  for (int i = 0; i < 3; ++i) {
    std::string tap = "domenc.proj.tap" + std::to_string(i + 1);
    Tensor<T> w = he_init<T>({cfg.code_dim, widths[i]}, rng);
    w.array() *= T(cfg.proj_gain);
    ps.add(tap + ".w", w);
    ps.add(tap + ".b", Tensor<T>::zeros({cfg.code_dim}));
    ps.add("domenc.proj.weight" + std::to_string(i + 1),
           Tensor<T>::full({1}, T(1) / T(3)));
  }
}

/// Extracts the [N, d_dom] domain-aware code of the masked region. Partial
/// convolutions keep unmasked pixels out of the code; the mask follows the
/// features through the 2x2 pools via the visible-if-any rule. Gradients
/// flow through the frozen extractor into the image.
template <typename T>
Var<T> extract_code(Var<T> image, const Tensor<T>& mask, ParamStore<T>& ps,
                    const DomainEncoderConfig& cfg) {
  auto pc = [&ps](Var<T> x, const Tensor<T>& m, const std::string& name) {
    return partial_conv2d(x, m, ps.get("domenc.frozen." + name + ".w"),
                          ps.get("domenc.frozen." + name + ".b"), 1, 1);
  };
  auto tap_code = [&ps](Var<T> feat, const Tensor<T>& m, int i) {
    std::string tap = "domenc.proj.tap" + std::to_string(i);
    Var<T> z = fully_connected(masked_gap(feat, m), ps.get(tap + ".w"), ps.get(tap + ".b"));
    return scale_by(z, ps.get("domenc.proj.weight" + std::to_string(i)));
  };

  auto r1a = pc(image, mask, "block1.conv1");
  auto [h1, m1] = pc(relu(r1a.output), r1a.mask, "block1.conv2");
  Var<T> f1 = relu(h1);
  Var<T> z = tap_code(f1, m1, 1);

  Tensor<T> m1p = mask_max_pool2x2(m1);
  auto [h2a, m2a] = pc(max_pool2x2(f1), m1p, "block2.conv1");
  auto [h2, m2] = pc(relu(h2a), m2a, "block2.conv2");
  Var<T> f2 = relu(h2);
  z = add(z, tap_code(f2, m2, 2));

  Tensor<T> m2p = mask_max_pool2x2(m2);
  auto [h3a, m3a] = pc(max_pool2x2(f2), m2p, "block3.conv1");
  auto [h3b, m3b] = pc(relu(h3a), m3a, "block3.conv2");
  auto [h3, m3] = pc(relu(h3b), m3b, "block3.conv3");
  Var<T> f3 = relu(h3);
  return add(z, tap_code(f3, m3, 3));
}

}  // namespace madis
