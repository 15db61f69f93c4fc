#include "deepstreet/evaluation.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>

#include "deepstreet/error.hpp"

namespace deepstreet {

double hole_mse(const Tile& truth, const Tile& completed, const Mask& mask) {
  if (!truth.same_geometry(completed)) throw DimensionError("hole_mse: tile geometries differ");
  if (truth.width != mask.tile_px() || truth.height != mask.tile_px()) {
    throw DimensionError("hole_mse: mask does not fit the tiles");
  }
  if (!mask.has_hole()) return 0.0;
  const HoleRect& h = mask.hole();
  double sum = 0.0;
  for (int c = 0; c < truth.channels; ++c) {
    for (int r = h.row0; r < h.row0 + h.height; ++r) {
      for (int col = h.col0; col < h.col0 + h.width; ++col) {
        const double d = (static_cast<double>(truth.at(c, r, col)) - completed.at(c, r, col)) / 255.0;
        sum += d * d;
      }
    }
  }
  return sum;
}

bool is_road_pixel(const Tile& tile, int row, int col) {
  return tile.at(kRoadMajor, row, col) < 128 || tile.at(kRoadMinor, row, col) < 128;
}

StubCount count_stubs(const Tile& completed, const Mask& mask) {
  if (completed.width != mask.tile_px() || completed.height != mask.tile_px()) {
    throw DimensionError("count_stubs: mask does not fit the tile");
  }
  StubCount count;
  if (!mask.has_hole()) return count;
  const int n = completed.height;
  auto inside = [n](int r, int c) { return r >= 0 && c >= 0 && r < n && c < n; };
  const HoleRect& h = mask.hole();
  // Only pixels in the one-pixel frame around the hole can be 4-adjacent to it.
  for (int r = std::max(0, h.row0 - 1); r <= std::min(n - 1, h.row0 + h.height); ++r) {
    for (int c = std::max(0, h.col0 - 1); c <= std::min(n - 1, h.col0 + h.width); ++c) {
      if (mask.in_hole(r, c) || !is_road_pixel(completed, r, c)) continue;
      const bool stub = (inside(r - 1, c) && mask.in_hole(r - 1, c)) || (inside(r + 1, c) && mask.in_hole(r + 1, c)) ||
                        (inside(r, c - 1) && mask.in_hole(r, c - 1)) || (inside(r, c + 1) && mask.in_hole(r, c + 1));
      if (!stub) continue;
      ++count.stubs;
      bool continued = false;
      for (int dr = -1; dr <= 1 && !continued; ++dr) {
        for (int dc = -1; dc <= 1 && !continued; ++dc) {
          const int rr = r + dr, cc = c + dc;
          continued = inside(rr, cc) && mask.in_hole(rr, cc) && is_road_pixel(completed, rr, cc);
        }
      }
      count.continued += continued;
    }
  }
  return count;
}

double boundary_stub_connectivity(const Tile& completed, const Mask& mask) {
  const StubCount count = count_stubs(completed, mask);
  return count.stubs == 0 ? 1.0 : static_cast<double>(count.continued) / count.stubs;
}

RingStats context_ring(const Tile& tile, const Mask& mask, int ring_px) {
  if (ring_px < 0) throw Error("ring width must be non-negative");
  RingStats stats;
  if (!mask.has_hole()) return stats;
  const HoleRect& h = mask.hole();
  const int r_lo = std::max(0, h.row0 - ring_px), r_hi = std::min(tile.height, h.row0 + h.height + ring_px);
  const int c_lo = std::max(0, h.col0 - ring_px), c_hi = std::min(tile.width, h.col0 + h.width + ring_px);
  for (int r = r_lo; r < r_hi; ++r) {
    for (int c = c_lo; c < c_hi; ++c) {
      if (mask.in_hole(r, c)) continue;
      ++stats.pixels;
      stats.road_pixels += is_road_pixel(tile, r, c);
    }
  }
  return stats;
}

bool blank_context_detector(const Tile& masked, const Mask& mask, double threshold, int ring_px) {
  const RingStats ring = context_ring(masked, mask, ring_px);
  if (ring.road_pixels == 0) return true;
  return static_cast<double>(ring.road_pixels) / ring.pixels < threshold;
}

ChannelImage montage(const Tile& truth, const Tile& masked, const Tile& completed, const Mask& mask) {
  if (!truth.same_geometry(masked) || !truth.same_geometry(completed) || truth.channels != 3) {
    throw DimensionError("montage needs three 3-channel tiles of equal size");
  }
  if (truth.width != mask.tile_px() || truth.height != mask.tile_px()) {
    throw DimensionError("montage: mask does not fit the tiles");
  }
  const int t = truth.width;
  ChannelImage out(3 * t + 2 * kMontageGutterPx, t, 3, 255);
  const Tile* panels[] = {&truth, &masked, &completed};
  const HoleRect& h = mask.hole();
  const std::uint8_t orange[] = {255, 128, 0};
  for (int p = 0; p < 3; ++p) {
    const int x0 = p * (t + kMontageGutterPx);
    for (int c = 0; c < 3; ++c) {
      for (int r = 0; r < t; ++r) {
        for (int col = 0; col < t; ++col) {
          std::uint8_t v = panels[p]->at(c, r, col);
          if (mask.in_hole(r, col) && (r == h.row0 || r == h.row0 + h.height - 1 || col == h.col0 ||
                                       col == h.col0 + h.width - 1)) {
            v = orange[c];
          }
          out.at(c, r, x0 + col) = v;
        }
      }
    }
  }
  return out;
}

EvalReport evaluate(const InferenceModel& model, const std::vector<EvalCase>& cases,
                    const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  EvalReport report;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const EvalCase& ec = cases[i];
    const CompletionResult result = complete(model.model, ec.truth, ec.mask);
    const Tile masked = apply_mask(ec.truth, ec.mask);
    EvalRow row;
    row.tile_id = ec.tile_id;
    row.hole = ec.mask.hole();
    row.hole_mse = hole_mse(ec.truth, result.tile, ec.mask);
    row.connectivity = boundary_stub_connectivity(threshold_roads(result.tile), ec.mask);
    row.blank_context = blank_context_detector(masked, ec.mask);
    row.montage_path = "montage_" + std::to_string(i) + "_" + ec.tile_id + ".png";
    write_png(out_dir / row.montage_path, montage(ec.truth, masked, result.tile, ec.mask));
    report.rows.push_back(std::move(row));
  }
  write_eval_report(out_dir / "report.tsv", report);
  return report;
}

void write_eval_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "# proxy diagnostics, not ground-truth scores: many street layouts are valid completions\n";
  out << "tile_id\thole\thole_mse\tconnectivity\tblank_context\tmontage\n";
  out << std::setprecision(9);
  for (const auto& row : report.rows) {
    out << row.tile_id << '\t' << format_hole(row.hole) << '\t' << row.hole_mse << '\t' << row.connectivity << '\t'
        << (row.blank_context ? "true" : "false") << '\t' << row.montage_path << '\n';
  }
}

}  // namespace deepstreet
