#include "deepstreet/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <set>
#include <sstream>
#include <vector>

#include "deepstreet/error.hpp"

namespace deepstreet {
namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename Int>
Int parse_int(const std::string& text) {
  Int value{};
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || end != text.data() + text.size()) throw FormatError("expected an integer, got '" + text + "'");
  return value;
}

double parse_double(const std::string& text) {
  if (text.empty()) throw FormatError("expected a number");
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (end != text.c_str() + text.size()) throw FormatError("expected a number, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw FormatError("expected true or false, got '" + text + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

template <typename T>
Field int_field(const char* key, T PipelineConfig::*member) {
  return {key, [member](const PipelineConfig& c) { return std::to_string(c.*member); },
          [member](PipelineConfig& c, const std::string& v) { c.*member = parse_int<T>(v); }};
}

Field double_field(const char* key, double PipelineConfig::*member) {
  return {key, [member](const PipelineConfig& c) { return format_double(c.*member); },
          [member](PipelineConfig& c, const std::string& v) { c.*member = parse_double(v); }};
}

Field bool_field(const char* key, bool PipelineConfig::*member) {
  return {key, [member](const PipelineConfig& c) { return std::string(c.*member ? "true" : "false"); },
          [member](PipelineConfig& c, const std::string& v) { c.*member = parse_bool(v); }};
}

Field string_field(const char* key, std::string PipelineConfig::*member) {
  return {key, [member](const PipelineConfig& c) { return c.*member; },
          [member](PipelineConfig& c, const std::string& v) { c.*member = v; }};
}

const std::vector<Field>& fields() {
  using C = PipelineConfig;
  static const std::vector<Field> table = {
      double_field("pixel_size_m", &C::pixel_size_m),
      int_field("tile_px", &C::tile_px),
      int_field("hole_px", &C::hole_px),
      int_field("center_min_px", &C::center_min_px),
      int_field("center_max_px", &C::center_max_px),
      int_field("crop_px", &C::crop_px),
      double_field("network_scale", &C::network_scale),
      bool_field("generator_batch_norm", &C::generator_batch_norm),
      bool_field("discriminator_batch_norm", &C::discriminator_batch_norm),
      double_field("alpha", &C::alpha),
      int_field("batch_size", &C::batch_size),
      int_field("generator_iters", &C::generator_iters),
      int_field("discriminator_iters", &C::discriminator_iters),
      int_field("joint_iters", &C::joint_iters),
      double_field("adadelta_rho", &C::adadelta_rho),
      double_field("adadelta_epsilon", &C::adadelta_epsilon),
      int_field("checkpoint_every", &C::checkpoint_every),
      {"generator_loss",
       [](const C& c) {
         return std::string(c.generator_loss == GeneratorLoss::non_saturating ? "non_saturating" : "saturating");
       },
       [](C& c, const std::string& v) {
         if (v == "non_saturating") {
           c.generator_loss = GeneratorLoss::non_saturating;
         } else if (v == "saturating") {
           c.generator_loss = GeneratorLoss::saturating;
         } else {
           throw FormatError("generator_loss must be non_saturating or saturating");
         }
       }},
      int_field("hole_fill", &C::hole_fill),
      double_field("dem_min_m", &C::dem_min_m),
      double_field("dem_max_m", &C::dem_max_m),
      double_field("class1_width_m", &C::class1_width_m),
      double_field("class2_width_m", &C::class2_width_m),
      double_field("class3_width_m", &C::class3_width_m),
      double_field("train_fraction", &C::train_fraction),
      int_field("seed", &C::seed),
      string_field("data_dir", &C::data_dir),
      string_field("checkpoint_dir", &C::checkpoint_dir),
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

}  // namespace

PipelineConfig PipelineConfig::desk() {
  PipelineConfig c;
  c.tile_px = 64;
  c.hole_px = 16;
  c.center_min_px = 16;
  c.center_max_px = 48;
  c.crop_px = 32;
  return c;
}

void PipelineConfig::validate() const {
  if (!(pixel_size_m > 0.0)) throw Error("pixel_size_m must be positive");
  mask_geometry().validate();
  if (crop_px <= 0 || crop_px > tile_px) throw Error("crop_px must be in (0, tile_px]");
  if (!(dem_min_m < dem_max_m)) throw Error("dem_min_m must be below dem_max_m");
  if (!(class1_width_m > 0.0 && class2_width_m > 0.0 && class3_width_m > 0.0)) {
    throw Error("road widths must be positive");
  }
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw Error("train_fraction must be in (0,1)");
  if (hole_fill < 0 || hole_fill > 255) throw Error("hole_fill must be in 0..255");
  for (const std::string* dir : {&data_dir, &checkpoint_dir}) {
    if (dir->empty() || dir->find_first_of("#\n\r") != std::string::npos || trim(*dir) != *dir) {
      throw Error("directory '" + *dir + "' cannot be stored in a config file");
    }
  }
  train_config().validate();
}

MaskGeometry PipelineConfig::mask_geometry() const { return {tile_px, hole_px, center_min_px, center_max_px}; }

NetworkConfig PipelineConfig::network_config() const {
  NetworkConfig n;
  n.scale = network_scale;
  n.tile_px = tile_px;
  n.crop_px = crop_px;
  n.generator_batch_norm = generator_batch_norm;
  n.discriminator_batch_norm = discriminator_batch_norm;
  n.seed = seed;
  return n;
}

TrainConfig PipelineConfig::train_config() const {
  TrainConfig t;
  t.alpha = alpha;
  t.batch_size = batch_size;
  t.generator_iters = generator_iters;
  t.discriminator_iters = discriminator_iters;
  t.joint_iters = joint_iters;
  t.rho = static_cast<float>(adadelta_rho);
  t.epsilon = static_cast<float>(adadelta_epsilon);
  t.seed = seed;
  t.checkpoint_every = checkpoint_every;
  t.geometry = mask_geometry();
  t.fill_value = static_cast<std::uint8_t>(hole_fill);
  t.generator_loss = generator_loss;
  return t;
}

RoadClassTable PipelineConfig::road_class_table() const {
  RoadClassTable t;
  t.width_m = {class1_width_m, class2_width_m, class3_width_m};
  return t;
}

PipelineConfig parse_config(std::istream& in) {
  PipelineConfig config;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    const auto where = " (config line " + std::to_string(line_no) + ")";
    if (eq == std::string::npos) throw FormatError("expected key = value" + where);
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& f : fields()) {
      if (key == f.key) field = &f;
    }
    if (!field) throw FormatError("unknown key '" + key + "'" + where);
    if (!seen.insert(key).second) throw FormatError("duplicate key '" + key + "'" + where);
    try {
      field->set(config, value);
    } catch (const FormatError& e) {
      throw FormatError(key + ": " + e.what() + where);
    }
  }
  return config;
}

PipelineConfig read_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  return parse_config(in);
}

std::string serialize_config(const PipelineConfig& config) {
  std::ostringstream out;
  for (const auto& f : fields()) out << f.key << " = " << f.get(config) << '\n';
  return out.str();
}

void write_config(const std::filesystem::path& path, const PipelineConfig& config) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write config " + path.string());
  out << serialize_config(config);
}

std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::filesystem::path>& explicit_path) {
  if (explicit_path) return explicit_path;
  if (const char* env = std::getenv(kConfigEnvVar); env && *env) return std::filesystem::path(env);
  return std::nullopt;
}

}  // namespace deepstreet
