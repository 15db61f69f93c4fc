#include "deepstreet/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <vector>

#include "deepstreet/error.hpp"

namespace deepstreet {
namespace {

constexpr char kMagic[4] = {'D', 'S', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  void u8(std::uint8_t v) { bytes_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void text(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  void tensor(const std::string& name, const Tensor& t) {
    text(name);
    u32(static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) u32(static_cast<std::uint32_t>(d));
    for (float v : t.data()) f32(v);
  }
  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  Reader(std::vector<std::uint8_t> bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * i);
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string text() {
    const std::uint32_t n = u32();
    need(n);
    std::string s(bytes_.begin() + static_cast<std::ptrdiff_t>(pos_), bytes_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  Tensor tensor(std::string& name) {
    name = text();
    const std::uint32_t rank = u32();
    if (rank == 0 || rank > 8) fail("tensor '" + name + "' has an unsupported rank");
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<int>(u32());
    Tensor t(shape);
    need(t.size() * 4);
    for (float& v : t.data()) v = f32();
    return t;
  }
  bool done() const { return pos_ == bytes_.size(); }
  [[noreturn]] void fail(const std::string& why) const { throw FormatError("checkpoint " + source_ + ": " + why); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) fail("truncated");
  }
  std::vector<std::uint8_t> bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Model& model, const TrainingCounters& counters) {
  Writer w;
  for (char ch : kMagic) w.u8(static_cast<std::uint8_t>(ch));
  w.u32(kVersion);
  w.u64(model.spec_hash());
  w.f64(model.config.scale);
  w.u32(static_cast<std::uint32_t>(model.config.tile_px));
  w.u32(static_cast<std::uint32_t>(model.config.crop_px));
  w.u8(model.config.generator_batch_norm ? 1 : 0);
  w.u8(model.config.discriminator_batch_norm ? 1 : 0);
  w.u64(model.config.seed);
  w.u32(static_cast<std::uint32_t>(counters.phase));
  w.u64(static_cast<std::uint64_t>(counters.generator_iters));
  w.u64(static_cast<std::uint64_t>(counters.discriminator_iters));
  w.u64(static_cast<std::uint64_t>(counters.joint_iters));
  w.u32(static_cast<std::uint32_t>(model.params.tensors.size() + 2 * model.params.norms.size()));
  for (const auto& [id, v] : model.params.tensors) w.tensor(id, v.value());
  for (const auto& [id, buffers] : model.params.norms) {
    w.tensor(id + ".running_mean", buffers.running_mean);
    w.tensor(id + ".running_var", buffers.running_var);
  }

  // Write-then-rename so readers never observe a partial file.
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(w.bytes().data()), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  Reader r(std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>()),
           path.string());
  for (char ch : kMagic) {
    if (r.u8() != static_cast<std::uint8_t>(ch)) r.fail("bad magic");
  }
  if (r.u32() != kVersion) r.fail("unsupported version");
  const std::uint64_t stored_hash = r.u64();
  NetworkConfig config;
  config.scale = r.f64();
  config.tile_px = static_cast<int>(r.u32());
  config.crop_px = static_cast<int>(r.u32());
  config.generator_batch_norm = r.u8() != 0;
  config.discriminator_batch_norm = r.u8() != 0;
  config.seed = r.u64();
  LoadedCheckpoint loaded;
  loaded.counters.phase = static_cast<int>(r.u32());
  loaded.counters.generator_iters = static_cast<std::int64_t>(r.u64());
  loaded.counters.discriminator_iters = static_cast<std::int64_t>(r.u64());
  loaded.counters.joint_iters = static_cast<std::int64_t>(r.u64());

  if (spec_hash(config) != stored_hash) r.fail("spec hash does not match the stored network description");
  loaded.model = build_model(config);
  auto& params = loaded.model.params;

  const std::uint32_t count = r.u32();
  if (count != params.tensors.size() + 2 * params.norms.size()) r.fail("tensor count does not match the network");
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name;
    Tensor t = r.tensor(name);
    Tensor* target = nullptr;
    if (auto it = params.tensors.find(name); it != params.tensors.end()) {
      target = &it->second.mutable_value();
    } else if (name.size() > 13 && name.ends_with(".running_mean")) {
      auto nit = params.norms.find(name.substr(0, name.size() - 13));
      if (nit != params.norms.end()) target = &nit->second.running_mean;
    } else if (name.size() > 12 && name.ends_with(".running_var")) {
      auto nit = params.norms.find(name.substr(0, name.size() - 12));
      if (nit != params.norms.end()) target = &nit->second.running_var;
    }
    if (!target) r.fail("unknown tensor '" + name + "'");
    if (target->shape() != t.shape()) r.fail("tensor '" + name + "' has shape " + shape_to_string(t.shape()));
    *target = std::move(t);
  }
  if (!r.done()) r.fail("trailing bytes");
  return loaded;
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const NetworkConfig& expected) {
  LoadedCheckpoint loaded = load_checkpoint(path);
  if (loaded.model.spec_hash() != spec_hash(expected)) {
    throw Error("checkpoint " + path.string() + " was trained for a different network (spec hash mismatch)");
  }
  return loaded;
}

std::string checkpoint_name(int phase, std::int64_t iteration) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "ckpt_p%d_%07lld.dsck", phase, static_cast<long long>(iteration));
  return buf;
}

}  // namespace deepstreet
