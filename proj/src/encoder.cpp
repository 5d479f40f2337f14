#include "fssl/encoder.hpp"

#include <cmath>

namespace fssl {

void EncoderArch::validate() const {
  if (in_channels < 1 || in_height < 1 || in_width < 1)
    fail_invalid("arch: input extents must be positive");
  if (conv.empty()) fail_invalid("arch: need at least one conv layer");
  if (pool_window < 1) fail_invalid("arch: pool window must be positive");
  if (embed_dim < 1 || proj_dim < 1) fail_invalid("arch: embedding dims must be positive");
  int h = in_height, w = in_width;
  for (size_t i = 0; i < conv.size(); ++i) {
    const auto& c = conv[i];
    if (c.out_channels < 1 || c.kernel < 1 || c.stride < 1)
      fail_invalid("arch: conv layer " + std::to_string(i) + " has non-positive fields");
    int pad = (c.kernel - 1) / 2;
    h = (h + 2 * pad - c.kernel) / c.stride + 1;
    w = (w + 2 * pad - c.kernel) / c.stride + 1;
    if (h < 1 || w < 1)
      fail_invalid("arch: conv layer " + std::to_string(i) + " shrinks spatial extent below 1");
    if (h % pool_window != 0 || w % pool_window != 0)
      fail_invalid("arch: pool window " + std::to_string(pool_window) +
                   " does not divide spatial extent " + std::to_string(h) + "x" +
                   std::to_string(w) + " after conv layer " + std::to_string(i));
    h /= pool_window;
    w /= pool_window;
  }
}

std::pair<int, int> EncoderArch::spatial_after(int layer) const {
  int h = in_height, w = in_width;
  for (int i = 0; i <= layer; ++i) {
    const auto& c = conv[static_cast<size_t>(i)];
    int pad = (c.kernel - 1) / 2;
    h = ((h + 2 * pad - c.kernel) / c.stride + 1) / pool_window;
    w = ((w + 2 * pad - c.kernel) / c.stride + 1) / pool_window;
  }
  return {h, w};
}

int EncoderArch::flat_dim() const {
  auto [h, w] = spatial_after(static_cast<int>(conv.size()) - 1);
  return conv.back().out_channels * h * w;
}

int EncoderArch::dominant_kernel() const {
  // All layers of the default arch share one kernel size; with mixed sizes
  // the first layer's size wins and other layers are skipped by the
  // coalition's spatial features.
  return conv.front().kernel;
}

namespace {

Tensor fan_in_uniform(Shape s, int fan_in, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  return Tensor::uniform(std::move(s), rng, -bound, bound);
}

}  // namespace

ParamMap init_params(const EncoderArch& arch, uint64_t seed) {
  arch.validate();
  Rng rng(derive_seed(seed, "encoder_init"));
  ParamMap p;
  int c_in = arch.in_channels;
  for (size_t i = 0; i < arch.conv.size(); ++i) {
    const auto& c = arch.conv[i];
    std::string prefix = "conv" + std::to_string(i);
    p[prefix + ".w"] =
        fan_in_uniform({c.out_channels, c_in, c.kernel, c.kernel}, c_in * c.kernel * c.kernel, rng);
    p[prefix + ".b"] = Tensor::zeros({c.out_channels});
    c_in = c.out_channels;
  }
  int flat = arch.flat_dim();
  p["embed.w"] = fan_in_uniform({flat, arch.embed_dim}, flat, rng);
  p["embed.b"] = Tensor::zeros({arch.embed_dim});
  p["proj0.w"] = fan_in_uniform({arch.embed_dim, arch.embed_dim}, arch.embed_dim, rng);
  p["proj0.b"] = Tensor::zeros({arch.embed_dim});
  p["proj1.w"] = fan_in_uniform({arch.embed_dim, arch.proj_dim}, arch.embed_dim, rng);
  p["proj1.b"] = Tensor::zeros({arch.proj_dim});
  return p;
}

Tensor encode(const Tensor& x, const ParamMap& params, const EncoderArch& arch) {
  if (x.ndim() != 4 || x.extent(1) != arch.in_channels || x.extent(2) != arch.in_height ||
      x.extent(3) != arch.in_width)
    fail_invalid("encode: input " + shape_str(x.shape()) + " does not match arch input [Nx" +
                 std::to_string(arch.in_channels) + "x" + std::to_string(arch.in_height) + "x" +
                 std::to_string(arch.in_width) + "]");
  Tensor h = x;
  for (size_t i = 0; i < arch.conv.size(); ++i) {
    const auto& c = arch.conv[i];
    std::string prefix = "conv" + std::to_string(i);
    int pad = (c.kernel - 1) / 2;
    h = conv2d(h, params.at(prefix + ".w"), c.stride, pad);
    h = add_channel_bias(h, params.at(prefix + ".b"));
    h = relu(h);
    h = avg_pool2d(h, arch.pool_window);
  }
  h = reshape(h, {h.extent(0), arch.flat_dim()});
  return add_row_bias(matmul(h, params.at("embed.w")), params.at("embed.b"));
}

Tensor project(const Tensor& z, const ParamMap& params, const EncoderArch& arch) {
  if (z.ndim() != 2 || z.extent(1) != arch.embed_dim)
    fail_invalid("project: input " + shape_str(z.shape()) + " does not match embed_dim " +
                 std::to_string(arch.embed_dim));
  Tensor h = add_row_bias(matmul(z, params.at("proj0.w")), params.at("proj0.b"));
  h = relu(h);
  return add_row_bias(matmul(h, params.at("proj1.w")), params.at("proj1.b"));
}

}  // namespace fssl
