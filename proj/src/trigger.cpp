#include "fssl/trigger.hpp"

#include <algorithm>
#include <cmath>

namespace fssl {

TriggerSpec make_trigger_spec(int size, int anchor_row, int anchor_col, double gap, int count,
                              int image_height, int image_width, int image_channels,
                              PatternKind kind, double solid_value, uint64_t pattern_seed,
                              GapMetric metric) {
  TriggerSpec spec;
  spec.size = size;
  spec.anchor_row = anchor_row;
  spec.anchor_col = anchor_col;
  spec.gap = gap;
  spec.count = count;
  spec.gap_metric = metric;
  spec.image_height = image_height;
  spec.image_width = image_width;
  spec.image_channels = image_channels;
  spec.pattern_channels = kind == PatternKind::Random ? image_channels : 1;
  Eigen::Index strip = static_cast<Eigen::Index>(spec.pattern_channels) * size *
                       (static_cast<Eigen::Index>(size) * count);
  spec.pattern.resize(strip);
  int sw = size * count;
  switch (kind) {
    case PatternKind::Solid:
      spec.pattern.setConstant(std::clamp(solid_value, 0.0, 1.0));
      break;
    case PatternKind::Checker:
      for (int r = 0; r < size; ++r)
        for (int c = 0; c < sw; ++c)
          spec.pattern[static_cast<Eigen::Index>(r) * sw + c] = (r + c) % 2 == 0 ? 1.0 : 0.0;
      break;
    case PatternKind::Random: {
      Rng rng(derive_seed(pattern_seed, "trigger_pattern"));
      for (Eigen::Index i = 0; i < spec.pattern.size(); ++i) spec.pattern[i] = rng.uniform();
      break;
    }
  }
  validate_trigger(spec);
  return spec;
}

void validate_trigger(const TriggerSpec& spec) {
  int h = spec.image_height, w = spec.image_width;
  if (h < 1 || w < 1) fail_invalid("trigger: image extents must be positive");
  if (spec.count < 1) fail_invalid("trigger: sub-trigger count M must be >= 1");
  if (spec.size <= 0 || spec.size > std::min(h, w))
    fail_invalid("trigger: TS=" + std::to_string(spec.size) +
                 " violates TS in (0, min(H,W)] with min(H,W)=" +
                 std::to_string(std::min(h, w)));
  if (spec.anchor_row < 0 || spec.anchor_row > h || spec.anchor_col < 0 || spec.anchor_col > w)
    fail_invalid("trigger: TL=(" + std::to_string(spec.anchor_row) + "," +
                 std::to_string(spec.anchor_col) + ") violates TL in [0,H]x[0,W]");
  double diag = std::sqrt(static_cast<double>(h) * h + static_cast<double>(w) * w);
  if (spec.gap < 0.0 || spec.gap > diag)
    fail_invalid("trigger: TG=" + format_double(spec.gap) +
                 " violates TG in [0, sqrt(H^2+W^2)] with diagonal " + format_double(diag));
  Eigen::Index want = static_cast<Eigen::Index>(spec.pattern_channels) * spec.size * spec.size *
                      spec.count;
  if (spec.pattern.size() != want)
    fail_invalid("trigger: pattern has " + std::to_string(spec.pattern.size()) +
                 " values, expected " + std::to_string(want));
}

std::vector<TriggerPlacement> compute_layout(const TriggerSpec& spec) {
  validate_trigger(spec);
  int ts = spec.size, h = spec.image_height, w = spec.image_width;
  int gap_px = static_cast<int>(std::ceil(spec.gap));
  int step = spec.gap_metric == GapMetric::Edge ? ts + gap_px : std::max(ts, gap_px);
  std::vector<TriggerPlacement> out;
  out.reserve(static_cast<size_t>(spec.count));
  int r = spec.anchor_row, c = spec.anchor_col;
  for (int m = 0; m < spec.count; ++m) {
    if (c + ts > w) {  // wrap to the next layout row
      r += step;
      c = spec.anchor_col;
    }
    if (c + ts > w)
      fail_invalid("trigger layout: anchor column " + std::to_string(spec.anchor_col) +
                   " + TS " + std::to_string(ts) + " exceeds image width " + std::to_string(w) +
                   " (sub-triggers must lie fully inside the image)");
    if (r + ts > h)
      fail_invalid("trigger layout: M=" + std::to_string(spec.count) + " tiles of TS=" +
                   std::to_string(ts) + " with TG=" + format_double(spec.gap) +
                   " do not fit below row " + std::to_string(h - ts) +
                   " (sub-triggers must lie fully inside the image)");
    out.push_back({r, c, ts});
    c += step;
  }
  // Defense in depth: the row-major grid construction keeps pairwise
  // separation >= TG; verify instead of assuming.
  for (size_t i = 0; i < out.size(); ++i)
    for (size_t j = i + 1; j < out.size(); ++j)
      if (placement_distance(out[i], out[j], spec.gap_metric) + 1e-9 < spec.gap)
        fail("trigger layout: pairwise gap fell below TG");
  return out;
}

std::vector<SubTrigger> decompose_trigger(const TriggerSpec& spec) {
  auto layout = compute_layout(spec);
  std::vector<SubTrigger> out;
  out.reserve(layout.size());
  int ts = spec.size, sw = ts * spec.count;
  for (int m = 0; m < spec.count; ++m) {
    SubTrigger sub;
    sub.place = layout[static_cast<size_t>(m)];
    sub.channels = spec.pattern_channels;
    sub.tile.resize(static_cast<Eigen::Index>(spec.pattern_channels) * ts * ts);
    for (int pc = 0; pc < spec.pattern_channels; ++pc)
      for (int r = 0; r < ts; ++r)
        for (int c = 0; c < ts; ++c)
          sub.tile[(static_cast<Eigen::Index>(pc) * ts + r) * ts + c] =
              spec.pattern[(static_cast<Eigen::Index>(pc) * ts + r) * sw + m * ts + c];
    out.push_back(std::move(sub));
  }
  return out;
}

Eigen::ArrayXd make_mask(const TriggerPlacement& place, int height, int width) {
  if (place.size < 1) fail_invalid("make_mask: placement size must be positive");
  if (place.row < 0 || place.col < 0 || place.row + place.size > height ||
      place.col + place.size > width)
    fail_invalid("make_mask: placement (" + std::to_string(place.row) + "," +
                 std::to_string(place.col) + ") size " + std::to_string(place.size) +
                 " is out of bounds for " + std::to_string(height) + "x" + std::to_string(width));
  Eigen::ArrayXd mask = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(height) * width);
  for (int r = 0; r < place.size; ++r)
    for (int c = 0; c < place.size; ++c)
      mask[static_cast<Eigen::Index>(place.row + r) * width + place.col + c] = 1.0;
  return mask;
}

Image apply_trigger(const Image& img, const SubTrigger& sub) {
  const auto& p = sub.place;
  if (p.row < 0 || p.col < 0 || p.row + p.size > img.height || p.col + p.size > img.width)
    fail_invalid("apply_trigger: placement out of bounds");
  Image out = img;
  for (int c = 0; c < img.channels; ++c) {
    int pc = sub.channels == 1 ? 0 : std::min(c, sub.channels - 1);
    for (int r = 0; r < p.size; ++r)
      for (int cc = 0; cc < p.size; ++cc) {
        double e = sub.tile[(static_cast<Eigen::Index>(pc) * p.size + r) * p.size + cc];
        out.at(c, p.row + r, p.col + cc) = std::clamp(e, 0.0, 1.0);
      }
  }
  return out;
}

Image apply_global_trigger(const Image& img, const std::vector<SubTrigger>& subs) {
  Image out = img;
  for (const auto& sub : subs) out = apply_trigger(out, sub);
  return out;
}

double placement_distance(const TriggerPlacement& a, const TriggerPlacement& b, GapMetric metric) {
  if (metric == GapMetric::Center) {
    double dr = (a.row + a.size / 2.0) - (b.row + b.size / 2.0);
    double dc = (a.col + a.size / 2.0) - (b.col + b.size / 2.0);
    return std::sqrt(dr * dr + dc * dc);
  }
  double dr = std::max({0, a.row - (b.row + b.size), b.row - (a.row + a.size)});
  double dc = std::max({0, a.col - (b.col + b.size), b.col - (a.col + a.size)});
  return std::sqrt(dr * dr + dc * dc);
}

}  // namespace fssl
