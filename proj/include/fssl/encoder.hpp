#pragma once

#include "fssl/params.hpp"

namespace fssl {

struct ConvSpec {
  int out_channels = 8;
  int kernel = 3;
  int stride = 1;
};

// Small convolutional encoder + projection head. Convolutions use same-style
// padding ((kernel-1)/2) and are each followed by channel bias, relu and a
// non-overlapping average pool, then a linear layer maps to the embedding.
// No batch normalization: per-sample outputs are independent of the batch.
struct EncoderArch {
  int in_channels = 3;
  int in_height = 16;
  int in_width = 16;
  std::vector<ConvSpec> conv{{8, 3, 1}, {16, 3, 1}};
  int pool_window = 2;
  int embed_dim = 32;
  int proj_dim = 16;

  void validate() const;
  // Spatial extent after conv layer i (0-based) and its pool.
  std::pair<int, int> spatial_after(int layer) const;
  int flat_dim() const;  // channels*h*w feeding the embedding layer
  int dominant_kernel() const;
};

ParamMap init_params(const EncoderArch& arch, uint64_t seed);

// x: [N, C, H, W] -> embeddings [N, embed_dim]
Tensor encode(const Tensor& x, const ParamMap& params, const EncoderArch& arch);
// z: [N, embed_dim] -> [N, proj_dim] through the two-layer projection head
Tensor project(const Tensor& z, const ParamMap& params, const EncoderArch& arch);

}  // namespace fssl
