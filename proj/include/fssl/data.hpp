#pragma once

#include "fssl/rng.hpp"
#include "fssl/tensor.hpp"

namespace fssl {

// Pixel values live in [0, 1]; every mutation clamps back into range.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  Eigen::ArrayXd pixels;  // flat [c][h][w]
  int label = -1;

  double at(int c, int h, int w) const {
    return pixels[(static_cast<Eigen::Index>(c) * height + h) * width + w];
  }
  double& at(int c, int h, int w) {
    return pixels[(static_cast<Eigen::Index>(c) * height + h) * width + w];
  }
};

using Dataset = std::vector<Image>;

struct DatasetConfig {
  int n_classes = 4;
  int per_class = 120;
  int height = 16;
  int width = 16;
  int channels = 3;
  double noise = 0.10;  // per-pixel gaussian noise std
};

// Parametric texture/shape families (stripes, checker blocks, blobs,
// gradients) with a per-class color tint and per-sample jitter. Classes are
// linearly separable on raw pixels by construction.
Dataset make_synthetic_dataset(const DatasetConfig& cfg, uint64_t seed);

enum class PartitionMode { Iid, Dirichlet };

struct PartitionSpec {
  int n_clients = 10;
  PartitionMode mode = PartitionMode::Iid;
  double alpha = 0.5;  // Dirichlet concentration, used in Dirichlet mode
  uint64_t seed = 0;
};

// Disjoint covering split into per-client index lists; every client gets at
// least one sample. IID deals each class evenly; Dirichlet draws per-class
// client proportions from Dir(alpha).
std::vector<std::vector<int>> partition(const Dataset& data, const PartitionSpec& spec);

struct AugmentConfig {
  bool enabled = true;
  int max_shift = 2;           // translation radius, edge-replicated
  double flip_prob = 0.5;      // horizontal flip
  double scale_jitter = 0.15;  // brightness scale in [1-s, 1+s]
  double shift_jitter = 0.08;  // additive brightness in [-j, j]
};

Image augment(const Image& img, const AugmentConfig& cfg, Rng& rng);

Tensor to_batch(const std::vector<const Image*>& imgs);
Tensor to_batch(const Dataset& data, const std::vector<int>& idx);
Tensor to_batch(const Image& img);

void write_ppm(const Image& img, const std::string& path);

}  // namespace fssl
