#pragma once

// Diagnostic proxies for completion quality. The street network has many
// plausible completions, so none of these is a ground-truth score.

#include <filesystem>
#include <string>
#include <vector>

#include "deepstreet/completion.hpp"
#include "deepstreet/mask.hpp"

namespace deepstreet {

// Squared difference summed over hole pixels and all channels, with values
// scaled to [0,1]. Throws DimensionError on mismatched geometry.
double hole_mse(const Tile& truth, const Tile& completed, const Mask& mask);

// A pixel is a road pixel when either road channel is below 128.
bool is_road_pixel(const Tile& tile, int row, int col);

struct StubCount {
  int stubs = 0;      // context road pixels 4-adjacent to a hole pixel
  int continued = 0;  // stubs with a road pixel 8-adjacent inside the hole
};

StubCount count_stubs(const Tile& completed, const Mask& mask);

// continued / stubs, or 1 when there are no stubs.
double boundary_stub_connectivity(const Tile& completed, const Mask& mask);

struct RingStats {
  int pixels = 0;
  int road_pixels = 0;
};

// Context pixels within `ring_px` (Chebyshev distance) of the hole.
RingStats context_ring(const Tile& tile, const Mask& mask, int ring_px = 32);

// True when the ring holds no road pixel or its road fraction is below
// `threshold`.
bool blank_context_detector(const Tile& masked, const Mask& mask, double threshold = 0.005, int ring_px = 32);

inline constexpr int kMontageGutterPx = 8;

// truth | masked input | completed, separated by white gutters, with the hole
// rectangle's perimeter pixels drawn orange on every panel. RGB output.
ChannelImage montage(const Tile& truth, const Tile& masked, const Tile& completed, const Mask& mask);

struct EvalRow {
  std::string tile_id;
  HoleRect hole;
  double hole_mse = 0.0;
  double connectivity = 1.0;
  bool blank_context = false;
  std::string montage_path;  // relative to the report directory
};

struct EvalReport {
  std::vector<EvalRow> rows;
};

struct EvalCase {
  std::string tile_id;
  Tile truth;
  Mask mask;
};

// Completes every case, thresholds for the connectivity proxy, writes one
// montage PNG per case plus report.tsv into `out_dir`. Rows keep input order.
EvalReport evaluate(const InferenceModel& model, const std::vector<EvalCase>& cases,
                    const std::filesystem::path& out_dir);

void write_eval_report(const std::filesystem::path& path, const EvalReport& report);

}  // namespace deepstreet
