#include "lassoprune/zoo.hpp"

#include <array>

#include "lassoprune/error.hpp"

namespace lassoprune {

namespace {

struct Builder {
  ModelManifest m;

  const std::string& conv(std::string id, std::int64_t in, std::int64_t out, std::int64_t k, std::int64_t stride,
                          std::int64_t spatial, std::vector<std::string> preds, bool bias, bool act,
                          bool prunable = true) {
    LayerSpec l;
    l.id = std::move(id);
    l.kind = LayerKind::Conv;
    l.in_channels = in;
    l.out_channels = out;
    l.kernel_h = l.kernel_w = k;
    l.stride_h = l.stride_w = stride;
    l.out_spatial_h = l.out_spatial_w = spatial;
    l.has_bias = bias;
    l.norm = true;
    l.activation = act;
    l.predecessors = std::move(preds);
    l.prunable = prunable;
    m.layers.push_back(std::move(l));
    return m.layers.back().id;
  }

  const std::string& linear(std::string id, std::int64_t in, std::int64_t out, std::string pred, bool norm_act) {
    LayerSpec l;
    l.id = std::move(id);
    l.kind = LayerKind::Linear;
    l.in_channels = in;
    l.out_channels = out;
    l.out_spatial_h = l.out_spatial_w = 1;
    l.has_bias = true;
    l.norm = norm_act;
    l.activation = norm_act;
    l.predecessors = {std::move(pred)};
    m.layers.push_back(std::move(l));
    return m.layers.back().id;
  }

  const std::string& junction(std::string id, LayerKind kind, std::int64_t channels,
                              std::vector<std::string> preds) {
    LayerSpec l;
    l.id = std::move(id);
    l.kind = kind;
    l.in_channels = l.out_channels = channels;
    l.predecessors = std::move(preds);
    m.layers.push_back(std::move(l));
    return m.layers.back().id;
  }

  ModelManifest finish() {
    validate_manifest(m);
    return std::move(m);
  }
};

}  // namespace

ModelManifest vgg16_cifar() {
  Builder b;
  b.m.model_name = "vgg16-cifar";
  b.m.input_shape = {3, 32, 32};
  // 0 marks a 2x2 max-pool.
  constexpr std::array<int, 17> cfg{64, 64, 0, 128, 128, 0, 256, 256, 256, 0, 512, 512, 512, 0, 512, 512, 512};
  std::int64_t in = 3, spatial = 32;
  std::string prev;
  int index = 0;
  for (int c : cfg) {
    if (c == 0) {
      spatial /= 2;
      continue;
    }
    std::vector<std::string> preds;
    if (!prev.empty()) preds.push_back(prev);
    prev = b.conv("conv" + std::to_string(++index), in, c, 3, 1, spatial, preds, false, true);
    in = c;
  }
  prev = b.linear("fc1", 512, 512, prev, true);
  b.linear("fc2", 512, 10, prev, false);
  return b.finish();
}

ModelManifest resnet_cifar(int n) {
  if (n < 1) throw Error(ErrorCode::InvalidConfig, "blocks per stage must be >= 1");
  Builder b;
  b.m.model_name = "resnet" + std::to_string(6 * n + 2) + "-cifar";
  b.m.input_shape = {3, 32, 32};
  std::string prev = b.conv("conv1", 3, 16, 3, 1, 32, {}, false, true);
  std::int64_t in = 16;
  constexpr std::array<std::int64_t, 3> widths{16, 32, 64};
  constexpr std::array<std::int64_t, 3> spatials{32, 16, 8};
  for (int s = 0; s < 3; ++s) {
    for (int k = 0; k < n; ++k) {
      const std::string p = "s" + std::to_string(s + 1) + ".b" + std::to_string(k) + ".";
      const std::int64_t w = widths[s];
      const std::int64_t stride = (s > 0 && k == 0) ? 2 : 1;
      const std::string block_in = prev;
      const std::string c1 = b.conv(p + "conv1", in, w, 3, stride, spatials[s], {block_in}, false, true);
      const std::string c2 = b.conv(p + "conv2", w, w, 3, 1, spatials[s], {c1}, false, true);
      std::string shortcut = block_in;
      if (in != w) shortcut = b.conv(p + "shortcut", in, w, 1, stride, spatials[s], {block_in}, false, false, false);
      prev = b.junction(p + "add", LayerKind::AddJunction, w, {c2, shortcut});
      in = w;
    }
  }
  b.linear("fc", 64, 10, prev, false);
  return b.finish();
}

ModelManifest googlenet_cifar() {
  Builder b;
  b.m.model_name = "googlenet-cifar";
  b.m.input_shape = {3, 32, 32};
  struct Inception {
    const char* name;
    std::int64_t in, n1, r3, n3, r5, n5, pool;
    std::int64_t spatial;
  };
  constexpr std::array<Inception, 9> blocks{{
      {"a3", 192, 64, 96, 128, 16, 32, 32, 32},
      {"b3", 256, 128, 128, 192, 32, 96, 64, 32},
      {"a4", 480, 192, 96, 208, 16, 48, 64, 16},
      {"b4", 512, 160, 112, 224, 24, 64, 64, 16},
      {"c4", 512, 128, 128, 256, 24, 64, 64, 16},
      {"d4", 512, 112, 144, 288, 32, 64, 64, 16},
      {"e4", 528, 256, 160, 320, 32, 128, 128, 16},
      {"a5", 832, 256, 160, 320, 32, 128, 128, 8},
      {"b5", 832, 384, 192, 384, 48, 128, 128, 8},
  }};
  std::string prev = b.conv("pre", 3, 192, 3, 1, 32, {}, true, true);
  for (const auto& blk : blocks) {
    const std::string p = std::string(blk.name) + ".";
    const std::int64_t sp = blk.spatial;
    const std::string x = prev;
    const std::string b1 = b.conv(p + "b1", blk.in, blk.n1, 1, 1, sp, {x}, true, true);
    const std::string b2r = b.conv(p + "b2.reduce", blk.in, blk.r3, 1, 1, sp, {x}, true, true);
    const std::string b2 = b.conv(p + "b2.conv", blk.r3, blk.n3, 3, 1, sp, {b2r}, true, true);
    const std::string b3r = b.conv(p + "b3.reduce", blk.in, blk.r5, 1, 1, sp, {x}, true, true);
    const std::string b3a = b.conv(p + "b3.conv1", blk.r5, blk.n5, 3, 1, sp, {b3r}, true, true);
    const std::string b3 = b.conv(p + "b3.conv2", blk.n5, blk.n5, 3, 1, sp, {b3a}, true, true);
    // The branch's 3x3 max-pool carries no weights; its conv reads the block input.
    const std::string b4 = b.conv(p + "b4.proj", blk.in, blk.pool, 1, 1, sp, {x}, true, true);
    prev = b.junction(p + "cat", LayerKind::ConcatJunction, blk.n1 + blk.n3 + blk.n5 + blk.pool, {b1, b2, b3, b4});
  }
  b.linear("fc", 1024, 10, prev, false);
  return b.finish();
}

ModelManifest resnet50_imagenet() {
  Builder b;
  b.m.model_name = "resnet50-imagenet";
  b.m.input_shape = {3, 224, 224};
  std::string prev = b.conv("conv1", 3, 64, 7, 2, 112, {}, false, true);
  std::int64_t in = 64, spatial = 56;
  constexpr std::array<int, 4> depth{3, 4, 6, 3};
  constexpr std::array<std::int64_t, 4> widths{64, 128, 256, 512};
  for (int s = 0; s < 4; ++s) {
    for (int k = 0; k < depth[s]; ++k) {
      const std::string p = "layer" + std::to_string(s + 1) + "." + std::to_string(k) + ".";
      const std::int64_t w = widths[s], out = 4 * widths[s];
      const std::int64_t stride = (s > 0 && k == 0) ? 2 : 1;
      const std::int64_t out_spatial = spatial / stride;
      const std::string block_in = prev;
      const std::string c1 = b.conv(p + "conv1", in, w, 1, 1, spatial, {block_in}, false, true);
      const std::string c2 = b.conv(p + "conv2", w, w, 3, stride, out_spatial, {c1}, false, true);
      const std::string c3 = b.conv(p + "conv3", w, out, 1, 1, out_spatial, {c2}, false, true);
      std::string shortcut = block_in;
      if (k == 0)
        shortcut = b.conv(p + "downsample", in, out, 1, stride, out_spatial, {block_in}, false, false, false);
      prev = b.junction(p + "add", LayerKind::AddJunction, out, {c3, shortcut});
      in = out;
      spatial = out_spatial;
    }
  }
  b.linear("fc", 2048, 1000, prev, false);
  return b.finish();
}

std::vector<std::string> zoo_names() {
  return {"vgg16-cifar", "resnet56-cifar", "resnet110-cifar", "googlenet-cifar", "resnet50-imagenet"};
}

ModelManifest zoo_manifest(std::string_view name) {
  if (name == "vgg16-cifar") return vgg16_cifar();
  if (name == "resnet56-cifar") return resnet_cifar(9);
  if (name == "resnet110-cifar") return resnet_cifar(18);
  if (name == "googlenet-cifar") return googlenet_cifar();
  if (name == "resnet50-imagenet") return resnet50_imagenet();
  throw Error(ErrorCode::InvalidConfig, "unknown model '" + std::string(name) + "'");
}

}  // namespace lassoprune
