#include "deepstreet/raster.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "deepstreet/error.hpp"

namespace deepstreet {

void validate_segment(const RoadSegment& segment) {
  if (segment.polyline.size() < 2) throw FormatError("road polyline needs at least two points");
  if (!(segment.width_m > 0.0) || !std::isfinite(segment.width_m)) {
    throw FormatError("road width must be positive");
  }
  for (const auto& p : segment.polyline) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw FormatError("road coordinates must be finite");
  }
}

std::pair<std::uint8_t, std::uint8_t> RoadClassTable::code(RoadClass road_class) {
  switch (road_class) {
    case RoadClass::class1:
      return {255, 0};
    case RoadClass::class2:
      return {0, 255};
    case RoadClass::class3:
      return {0, 0};
  }
  throw Error("unknown road class");
}

RoadClass RoadClassTable::parse_class(const std::string& tag) {
  static const std::map<std::string, RoadClass> kTags = {
      {"class1", RoadClass::class1},      {"class2", RoadClass::class2},      {"class3", RoadClass::class3},
      {"motorway", RoadClass::class1},    {"motorway_link", RoadClass::class1}, {"trunk", RoadClass::class1},
      {"trunk_link", RoadClass::class1},  {"primary", RoadClass::class1},     {"primary_link", RoadClass::class1},
      {"secondary", RoadClass::class2},   {"secondary_link", RoadClass::class2}, {"tertiary", RoadClass::class2},
      {"tertiary_link", RoadClass::class2}, {"residential", RoadClass::class3}, {"service", RoadClass::class3},
      {"unclassified", RoadClass::class3}, {"living_street", RoadClass::class3}, {"rail", RoadClass::class3},
  };
  std::string key;
  for (char ch : tag) key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
  if (auto eq = key.find('='); eq != std::string::npos) key = key.substr(eq + 1);  // highway=primary
  auto it = kTags.find(key);
  if (it == kTags.end()) throw FormatError("unknown road class tag '" + tag + "'");
  return it->second;
}

CityRaster::CityRaster(const RasterGeometry& geometry_)
    : geometry(geometry_), image(geometry_.width, geometry_.height, 3, kBackground) {}

CityRaster::CityRaster(const RasterGeometry& geometry_, ChannelImage image_)
    : geometry(geometry_), image(std::move(image_)) {
  if (image.width != geometry.width || image.height != geometry.height || image.channels != 3) {
    throw DimensionError("city raster image does not match its geometry");
  }
}

bool road_channels_valid(const ChannelImage& image) {
  for (int c : {kRoadMajor, kRoadMinor}) {
    for (std::uint8_t v : image.plane(c)) {
      if (v != 0 && v != 255) return false;
    }
  }
  return true;
}

namespace {

int class_rank(RoadClass road_class) { return 4 - static_cast<int>(road_class); }  // class1 -> 3

double point_segment_distance_sq(const Point& p, const Point& a, const Point& b) {
  const double dx = b.x - a.x, dy = b.y - a.y;
  const double len_sq = dx * dx + dy * dy;
  double t = ((p.x - a.x) * dx + (p.y - a.y) * dy) / len_sq;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = a.x + t * dx - p.x, qy = a.y + t * dy - p.y;
  return qx * qx + qy * qy;
}

}  // namespace

StrokeStats stroke_roads(const std::vector<RoadSegment>& segments, CityRaster& raster) {
  const RasterGeometry& g = raster.geometry;
  std::vector<int> rank(static_cast<std::size_t>(g.width) * g.height, 0);
  StrokeStats stats;
  for (const auto& segment : segments) {
    validate_segment(segment);
    ++stats.segments;
    const int seg_rank = class_rank(segment.road_class);
    const double radius = segment.width_m / 2.0;
    const double radius_sq = radius * radius;
    for (std::size_t e = 0; e + 1 < segment.polyline.size(); ++e) {
      const Point& a = segment.polyline[e];
      const Point& b = segment.polyline[e + 1];
      if (a.x == b.x && a.y == b.y) {
        ++stats.skipped_edges;
        continue;
      }
      // Pixel window whose centres could fall within `radius` of the edge.
      const double min_x = std::min(a.x, b.x) - radius, max_x = std::max(a.x, b.x) + radius;
      const double min_y = std::min(a.y, b.y) - radius, max_y = std::max(a.y, b.y) + radius;
      const int col_lo = std::max(0, static_cast<int>(std::floor((min_x - g.origin_x) / g.pixel_size_m)) - 1);
      const int col_hi =
          std::min(g.width - 1, static_cast<int>(std::ceil((max_x - g.origin_x) / g.pixel_size_m)) + 1);
      const int row_lo = std::max(0, static_cast<int>(std::floor((g.origin_y - max_y) / g.pixel_size_m)) - 1);
      const int row_hi =
          std::min(g.height - 1, static_cast<int>(std::ceil((g.origin_y - min_y) / g.pixel_size_m)) + 1);
      for (int r = row_lo; r <= row_hi; ++r) {
        for (int c = col_lo; c <= col_hi; ++c) {
          int& current = rank[static_cast<std::size_t>(r) * g.width + c];
          if (current >= seg_rank) continue;
          if (point_segment_distance_sq(g.pixel_center(r, c), a, b) <= radius_sq) current = seg_rank;
        }
      }
    }
  }
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const int cls = rank[static_cast<std::size_t>(r) * g.width + c];
      std::pair<std::uint8_t, std::uint8_t> code{kBackground, kBackground};
      if (cls > 0) code = RoadClassTable::code(static_cast<RoadClass>(4 - cls));
      raster.image.at(kRoadMajor, r, c) = code.first;
      raster.image.at(kRoadMinor, r, c) = code.second;
    }
  }
  return stats;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<Point> parse_linestring(const std::string& wkt, int line_no) {
  const auto where = [line_no] { return " (line " + std::to_string(line_no) + ")"; };
  std::string upper;
  for (char ch : wkt) upper.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
  if (upper.rfind("LINESTRING", 0) != 0) throw FormatError("expected LINESTRING" + where());
  const auto open = wkt.find('('), close = wkt.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    throw FormatError("unbalanced LINESTRING parentheses" + where());
  }
  std::vector<Point> points;
  std::stringstream body(wkt.substr(open + 1, close - open - 1));
  std::string pair;
  while (std::getline(body, pair, ',')) {
    std::istringstream coords(pair);
    Point p;
    if (!(coords >> p.x >> p.y)) throw FormatError("bad coordinate pair '" + trim(pair) + "'" + where());
    std::string extra;
    if (coords >> extra) throw FormatError("only 2-D coordinates are supported" + where());
    points.push_back(p);
  }
  return points;
}

}  // namespace

std::vector<RoadSegment> parse_road_lines(std::istream& in, const RoadClassTable& table) {
  std::vector<RoadSegment> segments;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped.front() == '#') continue;
    std::vector<std::string> fields;
    std::stringstream split(stripped);
    std::string field;
    while (std::getline(split, field, '\t')) fields.push_back(trim(field));
    if (fields.size() < 2 || fields.size() > 3) {
      throw FormatError("road line " + std::to_string(line_no) + ": expected geometry<TAB>class[<TAB>width_m]");
    }
    RoadSegment segment;
    segment.polyline = parse_linestring(fields[0], line_no);
    segment.road_class = RoadClassTable::parse_class(fields[1]);
    segment.width_m = table.default_width(segment.road_class);
    if (fields.size() == 3) {
      try {
        segment.width_m = std::stod(fields[2]);
      } catch (const std::exception&) {
        throw FormatError("road line " + std::to_string(line_no) + ": bad width '" + fields[2] + "'");
      }
    }
    try {
      validate_segment(segment);
    } catch (const FormatError& e) {
      throw FormatError("road line " + std::to_string(line_no) + ": " + e.what());
    }
    segments.push_back(std::move(segment));
  }
  return segments;
}

std::vector<RoadSegment> read_road_file(const std::filesystem::path& path, const RoadClassTable& table) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open road file " + path.string());
  return parse_road_lines(in, table);
}

void write_road_file(const std::filesystem::path& path, const std::vector<RoadSegment>& segments) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  for (const auto& s : segments) {
    out << "LINESTRING (";
    for (std::size_t i = 0; i < s.polyline.size(); ++i) {
      if (i) out << ", ";
      out << s.polyline[i].x << ' ' << s.polyline[i].y;
    }
    out << ")\tclass" << static_cast<int>(s.road_class) << '\t' << s.width_m << '\n';
  }
}

DemGrid read_ascii_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open elevation grid " + path.string());
  std::map<std::string, double> header;
  bool xcenter = false, ycenter = false;
  // Header keys are alphabetic; the first numeric token starts the body.
  while (true) {
    in >> std::ws;
    const int next = in.peek();
    if (next == EOF || !std::isalpha(next)) break;
    std::string key;
    double value = 0.0;
    if (!(in >> key >> value)) throw FormatError("malformed ASCII grid header in " + path.string());
    for (char& ch : key) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (key == "xllcenter") xcenter = true;
    if (key == "yllcenter") ycenter = true;
    header[key] = value;
  }
  auto require = [&](const std::string& a, const std::string& b = "") -> double {
    if (header.count(a)) return header[a];
    if (!b.empty() && header.count(b)) return header[b];
    throw FormatError("ASCII grid missing '" + a + "' in " + path.string());
  };
  DemGrid dem;
  dem.cols = static_cast<int>(require("ncols"));
  dem.rows = static_cast<int>(require("nrows"));
  dem.cell_size_m = require("cellsize");
  if (dem.cols <= 0 || dem.rows <= 0 || !(dem.cell_size_m > 0)) {
    throw FormatError("ASCII grid has non-positive extents in " + path.string());
  }
  double xll = require("xllcorner", "xllcenter");
  double yll = require("yllcorner", "yllcenter");
  if (xcenter) xll -= dem.cell_size_m / 2.0;
  if (ycenter) yll -= dem.cell_size_m / 2.0;
  dem.origin_x = xll;
  dem.origin_y = yll + dem.rows * dem.cell_size_m;
  const bool has_nodata = header.count("nodata_value") > 0;
  const double nodata = has_nodata ? header["nodata_value"] : 0.0;
  dem.elevations.resize(static_cast<std::size_t>(dem.rows) * dem.cols);
  for (auto& e : dem.elevations) {
    if (!(in >> e)) throw FormatError("ASCII grid body is short in " + path.string());
    if ((has_nodata && e == nodata) || !std::isfinite(e)) {
      throw FormatError("ASCII grid contains void cells; fill them before ingest (" + path.string() + ")");
    }
  }
  return dem;
}

void write_ascii_grid(const std::filesystem::path& path, const DemGrid& dem) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  out << "ncols " << dem.cols << "\nnrows " << dem.rows << "\nxllcorner " << dem.origin_x << "\nyllcorner "
      << dem.origin_y - dem.rows * dem.cell_size_m << "\ncellsize " << dem.cell_size_m << '\n';
  for (int r = 0; r < dem.rows; ++r) {
    for (int c = 0; c < dem.cols; ++c) out << (c ? " " : "") << dem.at(r, c);
    out << '\n';
  }
}

std::uint8_t encode_elevation(double elevation, double e_min, double e_max) {
  if (!(e_min < e_max)) throw Error("elevation range needs e_min < e_max");
  const double clamped = std::clamp(elevation, e_min, e_max);
  const double scaled = 255.0 * (e_max - clamped) / (e_max - e_min);
  return static_cast<std::uint8_t>(std::floor(scaled + 0.5));
}

void encode_dem(const DemGrid& dem, double e_min, double e_max, CityRaster& raster) {
  if (!(e_min < e_max)) throw Error("elevation range needs e_min < e_max");
  const RasterGeometry& g = raster.geometry;
  if (std::abs(dem.cell_size_m - 6.0 * g.pixel_size_m) > 1e-9 * dem.cell_size_m) {
    throw DimensionError("DEM cell size must be 6x the raster pixel size");
  }
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const Point p = g.pixel_center(r, c);
      const int dr = std::clamp(static_cast<int>(std::floor((dem.origin_y - p.y) / dem.cell_size_m)), 0, dem.rows - 1);
      const int dc = std::clamp(static_cast<int>(std::floor((p.x - dem.origin_x) / dem.cell_size_m)), 0, dem.cols - 1);
      raster.image.at(kTopo, r, c) = encode_elevation(dem.at(dr, dc), e_min, e_max);
    }
  }
}

RasterGeometry geometry_for_dem(const DemGrid& dem, double pixel_size_m) {
  const double ratio = dem.cell_size_m / pixel_size_m;
  const int factor = static_cast<int>(std::lround(ratio));
  if (std::abs(ratio - factor) > 1e-9 || factor <= 0) {
    throw DimensionError("DEM cell size is not a whole multiple of the pixel size");
  }
  return RasterGeometry{dem.cols * factor, dem.rows * factor, pixel_size_m, dem.origin_x, dem.origin_y};
}

// ---- tiles ------------------------------------------------------------------

const char* to_string(Split split) { return split == Split::train ? "train" : "test"; }

Split parse_split(const std::string& text) {
  if (text == "train") return Split::train;
  if (text == "test") return Split::test;
  throw FormatError("unknown split tag '" + text + "'");
}

OverlapPolicy parse_overlap_policy(const std::string& text) {
  if (text == "disjoint") return OverlapPolicy::disjoint;
  if (text == "free") return OverlapPolicy::free;
  throw FormatError("unknown overlap policy '" + text + "' (expected disjoint or free)");
}

std::vector<TileSample> sample_tiles(const CityRaster& raster, int count, std::uint64_t seed, OverlapPolicy policy,
                                     int tile_px) {
  const int w = raster.geometry.width, h = raster.geometry.height;
  if (count <= 0) throw Error("tile count must be positive");
  if (tile_px <= 0 || w < tile_px || h < tile_px) {
    throw DimensionError("raster " + std::to_string(w) + "x" + std::to_string(h) + " is smaller than one " +
                         std::to_string(tile_px) + "px tile");
  }
  std::mt19937_64 rng(seed);
  std::vector<std::pair<int, int>> origins;
  if (policy == OverlapPolicy::disjoint) {
    const int slots_x = w / tile_px, slots_y = h / tile_px;
    const long long capacity = static_cast<long long>(slots_x) * slots_y;
    if (count > capacity) {
      throw Error("disjoint sampling can place at most " + std::to_string(capacity) + " tiles on this raster, " +
                  std::to_string(count) + " requested");
    }
    const int off_x = std::uniform_int_distribution<int>(0, w - slots_x * tile_px)(rng);
    const int off_y = std::uniform_int_distribution<int>(0, h - slots_y * tile_px)(rng);
    std::vector<bool> used(static_cast<std::size_t>(capacity), false);
    std::uniform_int_distribution<long long> pick(0, capacity - 1);
    while (static_cast<int>(origins.size()) < count) {
      const long long slot = pick(rng);
      if (used[slot]) continue;
      used[slot] = true;
      origins.emplace_back(off_y + static_cast<int>(slot / slots_x) * tile_px,
                           off_x + static_cast<int>(slot % slots_x) * tile_px);
    }
  } else {
    const long long distinct = static_cast<long long>(w - tile_px + 1) * (h - tile_px + 1);
    if (count > distinct) {
      throw Error("only " + std::to_string(distinct) + " distinct tile origins exist on this raster");
    }
    std::uniform_int_distribution<int> rows(0, h - tile_px), cols(0, w - tile_px);
    std::set<std::pair<int, int>> seen;
    while (static_cast<int>(origins.size()) < count) {
      const std::pair<int, int> origin{rows(rng), cols(rng)};
      if (seen.insert(origin).second) origins.push_back(origin);
    }
  }
  std::vector<TileSample> tiles;
  tiles.reserve(origins.size());
  for (std::size_t i = 0; i < origins.size(); ++i) {
    TileSample t;
    t.id = static_cast<int>(i);
    t.row = origins[i].first;
    t.col = origins[i].second;
    t.size = tile_px;
    t.pixels = raster.image.crop(t.row, t.col, tile_px, tile_px);
    tiles.push_back(std::move(t));
  }
  return tiles;
}

std::size_t train_count(std::size_t tiles, double train_fraction) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error("train fraction must lie in (0,1)");
  return static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(tiles)));
}

void split_dataset(std::vector<TileSample>& tiles, double train_fraction, std::uint64_t seed) {
  if (tiles.size() < 2) throw Error("splitting needs at least two tiles");
  const std::size_t n_train = train_count(tiles.size(), train_fraction);
  std::vector<std::size_t> order(tiles.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < order.size(); ++i) {
    tiles[order[i]].split = i < n_train ? Split::train : Split::test;
  }
}

}  // namespace deepstreet
