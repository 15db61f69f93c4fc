#include "deepstreet/manifest.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "deepstreet/error.hpp"

namespace deepstreet {

std::string format_hole(const HoleRect& hole) {
  return std::to_string(hole.row0) + "," + std::to_string(hole.col0) + "," + std::to_string(hole.height) + "," +
         std::to_string(hole.width);
}

HoleRect parse_hole(const std::string& text) {
  HoleRect hole;
  int* fields[] = {&hole.row0, &hole.col0, &hole.height, &hole.width};
  std::stringstream in(text);
  std::string token;
  int i = 0;
  while (std::getline(in, token, ',')) {
    if (i == 4) throw FormatError("mask rectangle '" + text + "' has more than 4 fields");
    std::size_t used = 0;
    try {
      *fields[i] = std::stoi(token, &used);
    } catch (const std::exception&) {
      throw FormatError("mask rectangle '" + text + "' has a non-integer field");
    }
    if (used != token.size()) throw FormatError("mask rectangle '" + text + "' has a non-integer field");
    ++i;
  }
  if (i != 4) throw FormatError("mask rectangle '" + text + "' needs row0,col0,height,width");
  return hole;
}

const ManifestRecord* Manifest::find(int id) const {
  for (const auto& r : records) {
    if (r.id == id) return &r;
  }
  return nullptr;
}

std::vector<const ManifestRecord*> Manifest::with_split(Split split) const {
  std::vector<const ManifestRecord*> out;
  for (const auto& r : records) {
    if (r.split == split) out.push_back(&r);
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << std::setprecision(17);
  out << "# deepstreet-manifest v1\n"
      << "# pixel_size_m=" << m.pixel_size_m << '\n'
      << "# tile_px=" << m.tile_px << '\n'
      << "# dem_min_m=" << m.dem_min_m << '\n'
      << "# dem_max_m=" << m.dem_max_m << '\n'
      << "# seed=" << m.seed << '\n'
      << "id\trow\tcol\tsplit\tpath\thole\n";
  for (const auto& r : m.records) {
    out << r.id << '\t' << r.row << '\t' << r.col << '\t' << to_string(r.split) << '\t' << r.path << '\t'
        << (r.hole ? format_hole(*r.hole) : "-") << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

Manifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest " + path.string());
  Manifest m;
  std::string line;
  int line_no = 0;
  bool saw_magic = false, saw_columns = false;
  std::map<std::string, std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line == "# deepstreet-manifest v1") {
        saw_magic = true;
      } else if (auto eq = line.find('='); eq != std::string::npos && line.size() > 2) {
        header[line.substr(2, eq - 2)] = line.substr(eq + 1);
      }
      continue;
    }
    if (!saw_columns) {
      if (line != "id\trow\tcol\tsplit\tpath\thole") throw FormatError("manifest column header missing");
      saw_columns = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream split(line);
    std::string f;
    while (std::getline(split, f, '\t')) fields.push_back(f);
    if (fields.size() != 6) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": expected 6 tab-separated fields");
    }
    ManifestRecord r;
    try {
      r.id = std::stoi(fields[0]);
      r.row = std::stoi(fields[1]);
      r.col = std::stoi(fields[2]);
    } catch (const std::exception&) {
      throw FormatError("manifest line " + std::to_string(line_no) + ": bad integer field");
    }
    r.split = parse_split(fields[3]);
    r.path = fields[4];
    if (fields[5] != "-") r.hole = parse_hole(fields[5]);
    m.records.push_back(std::move(r));
  }
  if (!saw_magic) throw FormatError(path.string() + " is not a deepstreet manifest");
  try {
    if (header.count("pixel_size_m")) m.pixel_size_m = std::stod(header["pixel_size_m"]);
    if (header.count("tile_px")) m.tile_px = std::stoi(header["tile_px"]);
    if (header.count("dem_min_m")) m.dem_min_m = std::stod(header["dem_min_m"]);
    if (header.count("dem_max_m")) m.dem_max_m = std::stod(header["dem_max_m"]);
    if (header.count("seed")) m.seed = std::stoull(header["seed"]);
  } catch (const std::exception&) {
    throw FormatError("manifest header of " + path.string() + " has a malformed value");
  }
  return m;
}

Tile load_tile(const std::filesystem::path& manifest_path, const ManifestRecord& record) {
  return read_png(manifest_path.parent_path() / record.path);
}

std::vector<Tile> load_split(const std::filesystem::path& manifest_path, const Manifest& manifest, Split split) {
  std::vector<Tile> tiles;
  for (const auto* r : manifest.with_split(split)) {
    Tile t = load_tile(manifest_path, *r);
    if (t.channels != 3 || t.width != manifest.tile_px || t.height != manifest.tile_px) {
      throw DimensionError("tile " + r->path + " does not match the manifest tile size");
    }
    tiles.push_back(std::move(t));
  }
  return tiles;
}

}  // namespace deepstreet
