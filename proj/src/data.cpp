#include "fssl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace fssl {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// Class k keeps one texture family and one color tint for the whole run.
// Families cycle with k; the frequency level rises every 4 classes so any
// class count stays mutually distinguishable.
double family_value(int family, int level, double phase_r, double phase_c, int h, int w,
                    int height, int width) {
  double y = (static_cast<double>(h) + 0.5) / height;
  double x = (static_cast<double>(w) + 0.5) / width;
  double freq = 2.0 + level;
  switch (family) {
    case 0:  // horizontal stripes
      return 0.5 + 0.42 * std::sin(2.0 * M_PI * freq * y + phase_r);
    case 1:  // vertical stripes
      return 0.5 + 0.42 * std::sin(2.0 * M_PI * freq * x + phase_c);
    case 2: {  // checker blocks
      int bs = std::max(2, 4 - level);
      int cell = ((h + static_cast<int>(phase_r * 7)) / bs + (w + static_cast<int>(phase_c * 7)) / bs) % 2;
      return cell ? 0.82 : 0.18;
    }
    default: {  // radial blob
      double cy = 0.5 + 0.10 * std::sin(phase_r);
      double cx = 0.5 + 0.10 * std::cos(phase_c);
      double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
      double sigma = 0.22 - 0.03 * std::min(level, 3);
      return 0.12 + 0.78 * std::exp(-d2 / (2.0 * sigma * sigma));
    }
  }
}

}  // namespace

Dataset make_synthetic_dataset(const DatasetConfig& cfg, uint64_t seed) {
  if (cfg.n_classes < 2) fail_invalid("dataset: need at least 2 classes");
  if (cfg.per_class < 1) fail_invalid("dataset: per_class must be positive");
  Dataset out;
  out.reserve(static_cast<size_t>(cfg.n_classes) * cfg.per_class);
  for (int k = 0; k < cfg.n_classes; ++k) {
    Rng rng(derive_seed(seed, "synthetic_class", static_cast<uint64_t>(k)));
    int family = k % 4;
    int level = k / 4;
    // Distinct tint per class, spread around the hue circle.
    double hue = 2.0 * M_PI * k / cfg.n_classes;
    std::vector<double> tint(static_cast<size_t>(cfg.channels));
    for (int c = 0; c < cfg.channels; ++c)
      tint[static_cast<size_t>(c)] = 0.70 + 0.30 * std::cos(hue + 2.0 * M_PI * c / 3.0);
    for (int s = 0; s < cfg.per_class; ++s) {
      Image img;
      img.channels = cfg.channels;
      img.height = cfg.height;
      img.width = cfg.width;
      img.label = k;
      img.pixels.resize(static_cast<Eigen::Index>(cfg.channels) * cfg.height * cfg.width);
      double phase_r = rng.uniform(0.0, 2.0 * M_PI);
      double phase_c = rng.uniform(0.0, 2.0 * M_PI);
      double amp = rng.uniform(0.85, 1.15);
      for (int h = 0; h < cfg.height; ++h)
        for (int w = 0; w < cfg.width; ++w) {
          double base = family_value(family, level, phase_r, phase_c, h, w, cfg.height, cfg.width);
          for (int c = 0; c < cfg.channels; ++c) {
            double v = amp * base * tint[static_cast<size_t>(c)] + rng.normal(0.0, cfg.noise);
            img.at(c, h, w) = clamp01(v);
          }
        }
      out.push_back(std::move(img));
    }
  }
  return out;
}

std::vector<std::vector<int>> partition(const Dataset& data, const PartitionSpec& spec) {
  if (spec.n_clients < 1) fail_invalid("partition: n_clients must be positive");
  if (spec.n_clients > static_cast<int>(data.size()))
    fail_invalid("partition: n_clients " + std::to_string(spec.n_clients) +
                 " exceeds dataset size " + std::to_string(data.size()));
  int n_classes = 0;
  for (const auto& img : data) n_classes = std::max(n_classes, img.label + 1);
  std::vector<std::vector<int>> by_class(static_cast<size_t>(std::max(n_classes, 1)));
  for (int i = 0; i < static_cast<int>(data.size()); ++i) {
    int label = std::max(data[static_cast<size_t>(i)].label, 0);
    by_class[static_cast<size_t>(label)].push_back(i);
  }

  Rng rng(derive_seed(spec.seed, "partition"));
  std::vector<std::vector<int>> clients(static_cast<size_t>(spec.n_clients));

  for (auto& ids : by_class) {
    if (ids.empty()) continue;
    rng.shuffle(ids);
    if (spec.mode == PartitionMode::Iid) {
      // Deal evenly; remainders round-robin so counts differ by at most one.
      for (size_t i = 0; i < ids.size(); ++i)
        clients[i % static_cast<size_t>(spec.n_clients)].push_back(ids[i]);
    } else {
      if (spec.alpha <= 0.0) fail_invalid("partition: Dirichlet alpha must be positive");
      std::vector<double> props = rng.dirichlet(spec.alpha, spec.n_clients);
      // Multinomial assignment: each sample draws a client from the
      // class-level proportions.
      std::vector<double> cum(props.size());
      double acc = 0.0;
      for (size_t c = 0; c < props.size(); ++c) {
        acc += props[c];
        cum[c] = acc;
      }
      for (int id : ids) {
        double u = rng.uniform() * acc;
        size_t c = static_cast<size_t>(
            std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
        if (c >= clients.size()) c = clients.size() - 1;
        clients[c].push_back(id);
      }
    }
  }

  // Round-robin fixup: every client must hold at least one sample.
  for (size_t c = 0; c < clients.size(); ++c) {
    if (!clients[c].empty()) continue;
    size_t richest = 0;
    for (size_t d = 1; d < clients.size(); ++d)
      if (clients[d].size() > clients[richest].size()) richest = d;
    if (clients[richest].size() <= 1) fail("partition: cannot guarantee one sample per client");
    clients[c].push_back(clients[richest].back());
    clients[richest].pop_back();
  }
  for (auto& ids : clients) std::sort(ids.begin(), ids.end());
  return clients;
}

Image augment(const Image& img, const AugmentConfig& cfg, Rng& rng) {
  if (!cfg.enabled) return img;
  Image out = img;
  bool flip = rng.bernoulli(cfg.flip_prob);
  int dy = cfg.max_shift > 0 ? rng.uniform_int(2 * cfg.max_shift + 1) - cfg.max_shift : 0;
  int dx = cfg.max_shift > 0 ? rng.uniform_int(2 * cfg.max_shift + 1) - cfg.max_shift : 0;
  double scale = rng.uniform(1.0 - cfg.scale_jitter, 1.0 + cfg.scale_jitter);
  double shift = rng.uniform(-cfg.shift_jitter, cfg.shift_jitter);
  for (int c = 0; c < img.channels; ++c)
    for (int h = 0; h < img.height; ++h)
      for (int w = 0; w < img.width; ++w) {
        int sw = flip ? img.width - 1 - w : w;
        int sh = std::clamp(h + dy, 0, img.height - 1);
        sw = std::clamp(sw + dx, 0, img.width - 1);
        out.at(c, h, w) = clamp01(scale * img.at(c, sh, sw) + shift);
      }
  return out;
}

Tensor to_batch(const std::vector<const Image*>& imgs) {
  if (imgs.empty()) fail_invalid("to_batch: empty batch");
  int c = imgs[0]->channels, h = imgs[0]->height, w = imgs[0]->width;
  Eigen::Index per = static_cast<Eigen::Index>(c) * h * w;
  Eigen::ArrayXd d(static_cast<Eigen::Index>(imgs.size()) * per);
  for (size_t i = 0; i < imgs.size(); ++i) {
    if (imgs[i]->channels != c || imgs[i]->height != h || imgs[i]->width != w)
      fail_invalid("to_batch: mixed image shapes");
    d.segment(static_cast<Eigen::Index>(i) * per, per) = imgs[i]->pixels;
  }
  return Tensor::from_array({static_cast<int>(imgs.size()), c, h, w}, std::move(d));
}

Tensor to_batch(const Dataset& data, const std::vector<int>& idx) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(idx.size());
  for (int i : idx) ptrs.push_back(&data[static_cast<size_t>(i)]);
  return to_batch(ptrs);
}

Tensor to_batch(const Image& img) { return to_batch(std::vector<const Image*>{&img}); }

void write_ppm(const Image& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("write_ppm: cannot open " + path);
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  for (int h = 0; h < img.height; ++h)
    for (int w = 0; w < img.width; ++w)
      for (int c = 0; c < 3; ++c) {
        int cc = img.channels == 1 ? 0 : std::min(c, img.channels - 1);
        auto byte = static_cast<unsigned char>(std::lround(clamp01(img.at(cc, h, w)) * 255.0));
        f.put(static_cast<char>(byte));
      }
}

}  // namespace fssl
