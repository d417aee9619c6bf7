#pragma once

#include "madis/conv.hpp"
#include "madis/init.hpp"
#include "madis/param_store.hpp"

namespace madis {

/// Localizer choice. The harness only ever talks to a localizer through
/// (image -> logits) and the ParamStore, so any network slots in.
enum class LocalizerKind { kUNet, kStub };

/// Compact depth-4 UNet: encoder 16/32/64/128 (two 3x3 convs + ReLU per
/// block, 2x2 pool between), bottleneck 256, bilinear-upsample decoder with
/// skip concatenation, 1x1 logit head.
template <typename T>
void init_unet_params(ParamStore<T>& ps, std::mt19937& rng) {
  auto conv = [&](const std::string& name, int cout, int cin, int k) {
    ps.add("localizer." + name + ".w", he_init<T>({cout, cin, k, k}, rng));
    ps.add("localizer." + name + ".b", Tensor<T>::zeros({cout}));
  };
  const int w[5] = {16, 32, 64, 128, 256};
  int cin = 3;
  for (int i = 0; i < 4; ++i) {
    conv("enc" + std::to_string(i + 1) + ".conv1", w[i], cin, 3);
    conv("enc" + std::to_string(i + 1) + ".conv2", w[i], w[i], 3);
    cin = w[i];
  }
  conv("bottleneck.conv1", w[4], w[3], 3);
  conv("bottleneck.conv2", w[4], w[4], 3);
  for (int i = 3; i >= 0; --i) {
    int up = (i == 3) ? w[4] : w[i + 1];
    conv("dec" + std::to_string(i + 1) + ".conv1", w[i], up + w[i], 3);
    conv("dec" + std::to_string(i + 1) + ".conv2", w[i], w[i], 3);
  }
  conv("head", 1, w[0], 1);
}

template <typename T>
Var<T> unet_forward(Var<T> image, ParamStore<T>& ps) {
  const auto& s = image->value.shape();
  detail::require(s.size() == 4 && s[2] % 16 == 0 && s[3] % 16 == 0,
                  "unet_forward: spatial size must be divisible by 16");
  auto block = [&ps](Var<T> x, const std::string& name) {
    x = relu(conv2d(x, ps.get("localizer." + name + ".conv1.w"),
                    ps.get("localizer." + name + ".conv1.b"), 1, 1));
    return relu(conv2d(x, ps.get("localizer." + name + ".conv2.w"),
                       ps.get("localizer." + name + ".conv2.b"), 1, 1));
  };
  Var<T> e1 = block(image, "enc1");
  Var<T> e2 = block(max_pool2x2(e1), "enc2");
  Var<T> e3 = block(max_pool2x2(e2), "enc3");
  Var<T> e4 = block(max_pool2x2(e3), "enc4");
  Var<T> h = block(max_pool2x2(e4), "bottleneck");
  const Var<T> skips[4] = {e1, e2, e3, e4};
  for (int i = 3; i >= 0; --i) {
    const auto& ss = skips[i]->value.shape();
    h = bilinear_resize(h, ss[2], ss[3]);
    h = block(concat_channels(h, skips[i]), "dec" + std::to_string(i + 1));
  }
  return conv2d(h, ps.get("localizer.head.w"), ps.get("localizer.head.b"));
}

/// Minimal drop-in localizer: a single 1x1 conv to one logit channel.
template <typename T>
void init_stub_localizer_params(ParamStore<T>& ps, std::mt19937& rng) {
  ps.add("localizer.head.w", he_init<T>({1, 3, 1, 1}, rng));
  ps.add("localizer.head.b", Tensor<T>::zeros({1}));
}

template <typename T>
Var<T> stub_localizer_forward(Var<T> image, ParamStore<T>& ps) {
  return conv2d(image, ps.get("localizer.head.w"), ps.get("localizer.head.b"));
}

template <typename T>
void init_localizer_params(ParamStore<T>& ps, LocalizerKind kind, std::mt19937& rng) {
  if (kind == LocalizerKind::kUNet)
    init_unet_params(ps, rng);
  else
    init_stub_localizer_params(ps, rng);
}

template <typename T>
Var<T> localizer_forward(Var<T> image, ParamStore<T>& ps, LocalizerKind kind) {
  return kind == LocalizerKind::kUNet ? unet_forward(image, ps)
                                      : stub_localizer_forward(image, ps);
}

}  // namespace madis
