#pragma once

#include "fssl/data.hpp"

namespace fssl {

// TS x TS square block anchored at (row, col), fully inside the image.
struct TriggerPlacement {
  int row = 0;
  int col = 0;
  int size = 1;
};

enum class GapMetric { Edge, Center };
enum class PatternKind { Checker, Solid, Random };

// One sub-trigger: a tile of the global pattern plus where it lands.
struct SubTrigger {
  TriggerPlacement place;
  int channels = 1;        // 1 broadcasts across image channels
  Eigen::ArrayXd tile;     // flat [channels][TS][TS]
};

// The global trigger: a TS x (M*TS) pattern strip split into M square tiles,
// plus the decomposition geometry (TL anchor, TS size, TG gap, M count).
// Tiles are laid out row-major from the anchor with pairwise gap >= TG.
struct TriggerSpec {
  int size = 3;        // TS
  int anchor_row = 0;  // TL
  int anchor_col = 0;
  double gap = 1.0;    // TG
  int count = 1;       // M
  GapMetric gap_metric = GapMetric::Edge;
  int image_height = 16;
  int image_width = 16;
  int image_channels = 3;
  int pattern_channels = 1;
  Eigen::ArrayXd pattern;  // flat [pattern_channels][TS][TS*M], values in [0,1]
};

TriggerSpec make_trigger_spec(int size, int anchor_row, int anchor_col, double gap, int count,
                              int image_height, int image_width, int image_channels,
                              PatternKind kind, double solid_value, uint64_t pattern_seed,
                              GapMetric metric = GapMetric::Edge);

// Checks the constraint system (anchor within [0,H]x[0,W], TS in
// (0, min(H,W)], TG <= image diagonal) and the pattern dimensions.
void validate_trigger(const TriggerSpec& spec);

// Row-major tile placements; throws naming the violated constraint when the
// requested (TL, TS, TG, M) cannot fit.
std::vector<TriggerPlacement> compute_layout(const TriggerSpec& spec);

// M disjoint tiles of the pattern, placed per compute_layout.
std::vector<SubTrigger> decompose_trigger(const TriggerSpec& spec);

// Binary {0,1} mask over H x W: 1 exactly on the placement block.
Eigen::ArrayXd make_mask(const TriggerPlacement& place, int height, int width);

// R(x, e, phi): x*(1-T) + e*T with the mask broadcast across channels.
Image apply_trigger(const Image& img, const SubTrigger& sub);
Image apply_global_trigger(const Image& img, const std::vector<SubTrigger>& subs);

// Euclidean separation of two placements under the given metric.
double placement_distance(const TriggerPlacement& a, const TriggerPlacement& b, GapMetric metric);

}  // namespace fssl
