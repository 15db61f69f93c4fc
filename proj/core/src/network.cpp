#include "deepstreet/network.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "deepstreet/error.hpp"

namespace deepstreet {
namespace {

int scaled_width(int base, double scale) {
  const int w = static_cast<int>(std::lround(base * scale));
  if (w < 1) {
    throw Error("scale factor " + std::to_string(scale) + " shrinks a " + std::to_string(base) +
                "-channel layer below one channel");
  }
  return w;
}

std::string layer_id(const std::string& prefix, std::size_t index) {
  std::ostringstream out;
  out << prefix << 'L' << (index < 9 ? "0" : "") << index + 1;
  return out.str();
}

// Channel count feeding layer `i` of a sequential stack.
int input_channels(const std::vector<LayerDescriptor>& layers, std::size_t i, int first) {
  return i == 0 ? first : layers[i - 1].out_channels;
}

Tensor uniform(const Shape& shape, double bound, std::mt19937_64& rng) {
  Tensor t(shape);
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (float& v : t.data()) v = static_cast<float>(dist(rng));
  return t;
}

void add_norm(ModelParams& params, const std::string& id, int channels) {
  params.tensors[id + ".bn.gamma"] = ad::Var::parameter(Tensor({channels}, 1.0f));
  params.tensors[id + ".bn.beta"] = ad::Var::parameter(Tensor({channels}, 0.0f));
  ad::BatchNormBuffers buffers;
  buffers.running_mean = Tensor({channels}, 0.0f);
  buffers.running_var = Tensor({channels}, 1.0f);
  params.norms[id + ".bn"] = std::move(buffers);
}

// Shared conv stack for the discriminator branches.
void add_branch(ModelParams& params, const std::string& prefix, const BranchSpec& branch, int in_channels,
                bool batch_norm, std::mt19937_64& rng) {
  int spatial = branch.input_px;
  for (std::size_t i = 0; i < branch.layers.size(); ++i) {
    const auto& layer = branch.layers[i];
    const int cin = input_channels(branch.layers, i, in_channels);
    const std::string id = layer_id(prefix, i);
    const double fan_in = static_cast<double>(cin) * layer.kernel * layer.kernel;
    params.tensors[id + ".weight"] =
        ad::Var::parameter(uniform({layer.out_channels, cin, layer.kernel, layer.kernel}, std::sqrt(6.0 / fan_in), rng));
    params.tensors[id + ".bias"] = ad::Var::parameter(Tensor({layer.out_channels}, 0.0f));
    if (batch_norm) add_norm(params, id, layer.out_channels);
    spatial = kernels::conv_output_extent(spatial, layer.kernel, {layer.stride, layer.dilation, layer.padding});
  }
  const int flat = branch.layers.back().out_channels * spatial * spatial;
  params.tensors[prefix + "fc.weight"] =
      ad::Var::parameter(uniform({flat, branch.feature_dim}, std::sqrt(6.0 / flat), rng));
  params.tensors[prefix + "fc.bias"] = ad::Var::parameter(Tensor({branch.feature_dim}, 0.0f));
}

ad::Var conv_layer(const ModelParams& params, const std::string& id, const LayerDescriptor& layer, const ad::Var& x) {
  const ad::Var& w = params.at(id + ".weight");
  const ad::Var& b = params.at(id + ".bias");
  if (layer.kind == LayerKind::deconv) return ad::conv2d_transpose(x, w, b, layer.stride, layer.padding);
  return ad::conv2d(x, w, b, {layer.stride, layer.dilation, layer.padding});
}

ad::Var norm_layer(ModelParams& params, const std::string& id, const ad::Var& x, bool training) {
  auto& buffers = params.norms.at(id + ".bn");
  return ad::batch_norm(x, params.at(id + ".bn.gamma"), params.at(id + ".bn.beta"), &buffers, training);
}

void require_input(const ad::Var& v, int channels, const char* what) {
  const Shape& s = v.shape();
  if (s.size() != 4 || s[1] != channels) {
    throw DimensionError(std::string(what) + " expects [N," + std::to_string(channels) + ",H,W], got " +
                         shape_to_string(s));
  }
}

ad::Var run_generator(ModelParams& params, const GeneratorSpec& spec, const ad::Var& input, bool training) {
  require_input(input, spec.in_channels, "generator");
  if (input.shape()[2] % 4 != 0 || input.shape()[3] % 4 != 0) {
    throw DimensionError("generator input extents must be multiples of 4");
  }
  ad::Var x = input;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& layer = spec.layers[i];
    const std::string id = layer_id("generator.", i);
    x = conv_layer(params, id, layer, x);
    if (layer.kind == LayerKind::output_conv) {
      x = ad::sigmoid(x);
    } else {
      if (spec.batch_norm) x = norm_layer(params, id, x, training);
      x = ad::relu(x);
    }
  }
  return x;
}

ad::Var run_branch(ModelParams& params, const std::string& prefix, const BranchSpec& branch, bool batch_norm,
                   const ad::Var& input, bool training) {
  if (input.shape()[2] != branch.input_px || input.shape()[3] != branch.input_px) {
    throw DimensionError(prefix + " branch expects " + std::to_string(branch.input_px) + "px inputs, got " +
                         shape_to_string(input.shape()));
  }
  ad::Var x = input;
  for (std::size_t i = 0; i < branch.layers.size(); ++i) {
    const std::string id = layer_id(prefix, i);
    x = conv_layer(params, id, branch.layers[i], x);
    if (batch_norm) x = norm_layer(params, id, x, training);
    x = ad::relu(x);
  }
  x = ad::fully_connected(ad::flatten(x), params.at(prefix + "fc.weight"), params.at(prefix + "fc.bias"));
  return ad::relu(x);
}

ad::Var run_discriminator(ModelParams& params, const DiscriminatorSpec& spec, const ad::Var& full,
                          const ad::Var& crop, bool training) {
  require_input(full, spec.in_channels, "discriminator global branch");
  require_input(crop, spec.in_channels, "discriminator local branch");
  if (full.shape()[0] != crop.shape()[0]) throw DimensionError("discriminator inputs disagree on batch size");
  const ad::Var g = run_branch(params, "discriminator.global.", spec.global, spec.batch_norm, full, training);
  const ad::Var l = run_branch(params, "discriminator.local.", spec.local, spec.batch_norm, crop, training);
  const ad::Var fused = ad::concat_channels({g, l});
  const ad::Var logit =
      ad::fully_connected(fused, params.at("discriminator.head.weight"), params.at("discriminator.head.bias"));
  return ad::sigmoid(logit);
}

void fnv1a(std::uint64_t& h, const std::string& text) {
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
}

std::string describe(const LayerDescriptor& l) {
  std::ostringstream out;
  out << to_string(l.kind) << ':' << l.kernel << ':' << l.stride << ':' << l.dilation << ':' << l.padding << ':'
      << l.out_channels << ';';
  return out.str();
}

}  // namespace

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::conv:
      return "conv";
    case LayerKind::dilated_conv:
      return "dilated-conv";
    case LayerKind::deconv:
      return "deconv";
    case LayerKind::output_conv:
      return "output-conv";
  }
  return "?";
}

GeneratorSpec make_generator_spec(double scale, bool batch_norm) {
  if (!(scale > 0.0 && scale <= 1.0)) throw Error("scale factor must lie in (0, 1]");
  auto conv = [&](int k, int s, int base) {
    return LayerDescriptor{LayerKind::conv, k, s, 1, (k - 1) / 2, scaled_width(base, scale)};
  };
  auto dilated = [&](int d, int base) {
    return LayerDescriptor{LayerKind::dilated_conv, 3, 1, d, d, scaled_width(base, scale)};
  };
  auto deconv = [&](int base) { return LayerDescriptor{LayerKind::deconv, 4, 2, 1, 1, scaled_width(base, scale)}; };

  GeneratorSpec spec;
  spec.batch_norm = batch_norm;
  spec.layers = {
      conv(5, 1, 64),                                             // 256
      conv(3, 2, 128),  conv(3, 1, 128),                          // 128
      conv(3, 2, 256),  conv(3, 1, 256),  conv(3, 1, 256),        // 64
      dilated(2, 256),  dilated(4, 256),  dilated(8, 256), dilated(16, 256),
      conv(3, 1, 256),  conv(3, 1, 256),
      deconv(128),      conv(3, 1, 128),                          // 128
      deconv(64),       conv(3, 1, 32),                           // 256
      LayerDescriptor{LayerKind::output_conv, 3, 1, 1, 1, 3},
  };
  return spec;
}

std::vector<FeatureShape> propagate_shapes(const GeneratorSpec& spec, int tile_px) {
  std::vector<FeatureShape> shapes;
  FeatureShape s{spec.in_channels, tile_px, tile_px};
  for (const auto& layer : spec.layers) {
    const kernels::ConvGeometry g{layer.stride, layer.dilation, layer.padding};
    if (layer.kind == LayerKind::deconv) {
      s.height = kernels::conv_transpose_output_extent(s.height, layer.kernel, g);
      s.width = kernels::conv_transpose_output_extent(s.width, layer.kernel, g);
    } else {
      s.height = kernels::conv_output_extent(s.height, layer.kernel, g);
      s.width = kernels::conv_output_extent(s.width, layer.kernel, g);
    }
    s.channels = layer.out_channels;
    shapes.push_back(s);
  }
  return shapes;
}

DiscriminatorSpec make_discriminator_spec(double scale, int tile_px, int crop_px, bool batch_norm) {
  if (!(scale > 0.0 && scale <= 1.0)) throw Error("scale factor must lie in (0, 1]");
  auto branch = [&](int depth, int input_px) {
    BranchSpec b;
    b.input_px = input_px;
    for (int i = 0; i < depth; ++i) {
      b.layers.push_back({LayerKind::conv, 5, 2, 1, 2, scaled_width(32 << i, scale)});
    }
    b.feature_dim = scaled_width(1024, scale);
    return b;
  };
  DiscriminatorSpec spec;
  spec.global = branch(5, tile_px);
  spec.local = branch(4, crop_px);
  spec.batch_norm = batch_norm;
  return spec;
}

NetworkConfig NetworkConfig::for_geometry(const MaskGeometry& geometry, double scale) {
  NetworkConfig c;
  c.scale = scale;
  c.tile_px = geometry.tile_px;
  c.crop_px = geometry.hole_px + 16;
  return c;
}

const ad::Var& ModelParams::at(const std::string& id) const {
  auto it = tensors.find(id);
  if (it == tensors.end()) throw Error("model has no parameter '" + id + "'");
  return it->second;
}

std::vector<ad::Var> ModelParams::with_prefix(const std::string& prefix) const {
  std::vector<ad::Var> out;
  for (const auto& [id, v] : tensors) {
    if (id.rfind(prefix, 0) == 0) out.push_back(v);
  }
  return out;
}

std::uint64_t spec_hash(const NetworkConfig& config) {
  const GeneratorSpec g = make_generator_spec(config.scale, config.generator_batch_norm);
  const DiscriminatorSpec d =
      make_discriminator_spec(config.scale, config.tile_px, config.crop_px, config.discriminator_batch_norm);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::ostringstream text;
  text << "deepstreet/1;tile=" << config.tile_px << ";crop=" << config.crop_px << ";gen(" << g.in_channels << ','
       << g.out_channels << ",bn=" << g.batch_norm << "):";
  for (const auto& l : g.layers) text << describe(l);
  text << "disc(bn=" << d.batch_norm << "):global(" << d.global.feature_dim << "):";
  for (const auto& l : d.global.layers) text << describe(l);
  text << "local(" << d.local.feature_dim << "):";
  for (const auto& l : d.local.layers) text << describe(l);
  fnv1a(h, text.str());
  return h;
}

std::uint64_t Model::spec_hash() const { return deepstreet::spec_hash(config); }

Model Model::clone() const {
  Model copy;
  copy.config = config;
  copy.generator = generator;
  copy.discriminator = discriminator;
  copy.params.norms = params.norms;
  for (const auto& [id, v] : params.tensors) copy.params.tensors[id] = ad::Var::parameter(v.value());
  return copy;
}

Model build_model(const NetworkConfig& config) {
  if (config.crop_px <= 0 || config.crop_px > config.tile_px) throw Error("crop size must fit in the tile");
  Model model;
  model.config = config;
  model.generator = make_generator_spec(config.scale, config.generator_batch_norm);
  model.discriminator =
      make_discriminator_spec(config.scale, config.tile_px, config.crop_px, config.discriminator_batch_norm);
  propagate_shapes(model.generator, config.tile_px);  // rejects tile sizes the stack cannot carry

  std::mt19937_64 rng(config.seed);
  auto& params = model.params;
  const auto& layers = model.generator.layers;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& layer = layers[i];
    const int cin = input_channels(layers, i, model.generator.in_channels);
    const std::string id = layer_id("generator.", i);
    const int k = layer.kernel;
    Shape shape;
    double fan_in = 0.0;
    if (layer.kind == LayerKind::deconv) {
      shape = {cin, layer.out_channels, k, k};
      fan_in = static_cast<double>(cin) * k * k / (layer.stride * layer.stride);
    } else {
      shape = {layer.out_channels, cin, k, k};
      fan_in = static_cast<double>(cin) * k * k;
    }
    const bool hidden = layer.kind != LayerKind::output_conv;
    params.tensors[id + ".weight"] = ad::Var::parameter(uniform(shape, std::sqrt((hidden ? 6.0 : 1.0) / fan_in), rng));
    params.tensors[id + ".bias"] = ad::Var::parameter(Tensor({layer.out_channels}, 0.0f));
    if (hidden && model.generator.batch_norm) add_norm(params, id, layer.out_channels);
  }

  const auto& d = model.discriminator;
  add_branch(params, "discriminator.global.", d.global, d.in_channels, d.batch_norm, rng);
  add_branch(params, "discriminator.local.", d.local, d.in_channels, d.batch_norm, rng);
  const int fused = d.global.feature_dim + d.local.feature_dim;
  params.tensors["discriminator.head.weight"] = ad::Var::parameter(uniform({fused, 1}, std::sqrt(1.0 / fused), rng));
  params.tensors["discriminator.head.bias"] = ad::Var::parameter(Tensor({1}, 0.0f));
  return model;
}

ad::Var generator_forward(const Model& model, const ad::Var& input) {
  // Inference never writes the running statistics.
  return run_generator(const_cast<ModelParams&>(model.params), model.generator, input, false);
}

ad::Var generator_forward(Model& model, const ad::Var& input, bool training) {
  return run_generator(model.params, model.generator, input, training);
}

ad::Var discriminator_forward(const Model& model, const ad::Var& full, const ad::Var& crop) {
  return run_discriminator(const_cast<ModelParams&>(model.params), model.discriminator, full, crop, false);
}

ad::Var discriminator_forward(Model& model, const ad::Var& full, const ad::Var& crop, bool training) {
  return run_discriminator(model.params, model.discriminator, full, crop, training);
}

ad::Var restore_context(const ad::Var& raw, const ad::Var& original, const Tensor& masks) {
  return ad::blend(masks, original, raw);
}

std::pair<int, int> local_crop_origin(const Mask& mask, int crop_px) {
  const int row = mask.center_row() - crop_px / 2;
  const int col = mask.center_col() - crop_px / 2;
  if (row < 0 || col < 0 || row + crop_px > mask.tile_px() || col + crop_px > mask.tile_px()) {
    throw DimensionError("local crop of " + std::to_string(crop_px) + "px around the hole leaves the tile");
  }
  return {row, col};
}

Tensor local_crop(const Tile& tile, const Mask& mask, int crop_px) {
  const auto [row, col] = local_crop_origin(mask, crop_px);
  const Tile window = tile.crop(row, col, crop_px, crop_px);
  return tiles_to_tensor(std::span<const Tile>(&window, 1)).reshaped({3, crop_px, crop_px});
}

ad::Var local_crops(const ad::Var& tiles, std::span<const Mask> masks, int crop_px) {
  std::vector<std::pair<int, int>> offsets;
  offsets.reserve(masks.size());
  for (const auto& m : masks) offsets.push_back(local_crop_origin(m, crop_px));
  return ad::crop(tiles, offsets, crop_px, crop_px);
}

float normalize(std::uint8_t value) { return static_cast<float>(value) / 255.0f; }

std::uint8_t quantize(float value) {
  const float scaled = std::round(value * 255.0f);
  if (!(scaled > 0.0f)) return 0;
  if (scaled >= 255.0f) return 255;
  return static_cast<std::uint8_t>(scaled);
}

Tensor tiles_to_tensor(std::span<const Tile> tiles) {
  if (tiles.empty()) throw DimensionError("cannot batch zero tiles");
  const int h = tiles[0].height, w = tiles[0].width;
  Tensor out({static_cast<int>(tiles.size()), 3, h, w});
  float* dst = out.raw();
  for (const auto& t : tiles) {
    if (t.channels != 3 || t.height != h || t.width != w) throw DimensionError("tiles in a batch must share geometry");
    for (std::uint8_t v : t.data) *dst++ = normalize(v);
  }
  return out;
}

Tensor masks_to_tensor(std::span<const Mask> masks) {
  if (masks.empty()) throw DimensionError("cannot batch zero masks");
  const int t = masks[0].tile_px();
  Tensor out({static_cast<int>(masks.size()), 1, t, t});
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (masks[i].tile_px() != t) throw DimensionError("masks in a batch must share geometry");
    for (int r = 0; r < t; ++r) {
      for (int c = 0; c < t; ++c) out.at(static_cast<int>(i), 0, r, c) = masks[i].value(r, c);
    }
  }
  return out;
}

Tensor generator_input(std::span<const Tile> tiles, std::span<const Mask> masks, std::uint8_t fill) {
  if (tiles.size() != masks.size()) throw DimensionError("one mask per tile is required");
  if (tiles.empty()) throw DimensionError("cannot batch zero tiles");
  const int h = tiles[0].height, w = tiles[0].width;
  Tensor out({static_cast<int>(tiles.size()), 4, h, w});
  for (std::size_t i = 0; i < tiles.size(); ++i) {
    const Tile masked = apply_mask(tiles[i], masks[i], fill);
    if (masked.height != h || masked.width != w) throw DimensionError("tiles in a batch must share geometry");
    const int n = static_cast<int>(i);
    for (int c = 0; c < 3; ++c) {
      for (int r = 0; r < h; ++r) {
        for (int col = 0; col < w; ++col) out.at(n, c, r, col) = normalize(masked.at(c, r, col));
      }
    }
    for (int r = 0; r < h; ++r) {
      for (int col = 0; col < w; ++col) out.at(n, 3, r, col) = masks[i].value(r, col);
    }
  }
  return out;
}

Tile tensor_to_tile(const Tensor& batch, int index) {
  if (batch.rank() != 4 || batch.dim(1) != 3) throw DimensionError("expected a [N,3,H,W] tensor");
  const int h = batch.dim(2), w = batch.dim(3);
  Tile tile(w, h, 3);
  const std::size_t plane = static_cast<std::size_t>(3) * h * w;
  const float* src = batch.raw() + plane * index;
  for (std::size_t p = 0; p < plane; ++p) tile.data[p] = quantize(src[p]);
  return tile;
}

}  // namespace deepstreet
