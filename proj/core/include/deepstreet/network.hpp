#pragma once

// Encoder/decoder generator with dilated mid block, and the combined
// global + local discriminator.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "deepstreet/autodiff.hpp"
#include "deepstreet/image.hpp"
#include "deepstreet/mask.hpp"

namespace deepstreet {

enum class LayerKind { conv, dilated_conv, deconv, output_conv };

const char* to_string(LayerKind kind);

/// One convolutional layer. For deconv layers `stride` is the upsampling
/// factor.
struct LayerDescriptor {
  LayerKind kind = LayerKind::conv;
  int kernel = 3;
  int stride = 1;
  int dilation = 1;
  int padding = 1;
  int out_channels = 0;

  bool operator==(const LayerDescriptor&) const = default;
};

struct GeneratorSpec {
  std::vector<LayerDescriptor> layers;
  int in_channels = 4;
  int out_channels = 3;
  bool batch_norm = true;
};

// The 17-layer table with channel widths multiplied by `scale` (0 < scale <= 1,
// every scaled width must stay >= 1).
GeneratorSpec make_generator_spec(double scale, bool batch_norm = true);

struct FeatureShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  bool operator==(const FeatureShape&) const = default;
};

// Output shape after each layer, from the shape laws alone (no tensors).
std::vector<FeatureShape> propagate_shapes(const GeneratorSpec& spec, int tile_px);

struct BranchSpec {
  std::vector<LayerDescriptor> layers;  // stride-2 5x5 convolutions
  int input_px = 0;
  int feature_dim = 0;
};

struct DiscriminatorSpec {
  BranchSpec global;
  BranchSpec local;
  int in_channels = 3;
  bool batch_norm = false;
};

DiscriminatorSpec make_discriminator_spec(double scale, int tile_px, int crop_px, bool batch_norm = false);

struct NetworkConfig {
  double scale = 0.125;
  int tile_px = 256;
  int crop_px = 64;
  bool generator_batch_norm = true;
  bool discriminator_batch_norm = false;
  std::uint64_t seed = 0;

  static NetworkConfig for_geometry(const MaskGeometry& geometry, double scale);
};

// All learnable tensors plus batch-norm running statistics, keyed by layer id.
struct ModelParams {
  std::map<std::string, ad::Var> tensors;
  std::map<std::string, ad::BatchNormBuffers> norms;

  const ad::Var& at(const std::string& id) const;
  std::vector<ad::Var> with_prefix(const std::string& prefix) const;
};

struct Model {
  NetworkConfig config;
  GeneratorSpec generator;
  DiscriminatorSpec discriminator;
  ModelParams params;

  std::uint64_t spec_hash() const;
  std::vector<ad::Var> generator_parameters() const { return params.with_prefix("generator."); }
  std::vector<ad::Var> discriminator_parameters() const { return params.with_prefix("discriminator."); }
  // Deep copy; a plain copy shares parameter storage.
  Model clone() const;
};

// Spec hash of the network a config describes; the seed does not enter it.
std::uint64_t spec_hash(const NetworkConfig& config);

// Builds both networks with seeded fan-in-scaled uniform weights and zero biases.
Model build_model(const NetworkConfig& config);

// input [N,4,H,W] (three tile channels + mask plane) -> [N,3,H,W] in (0,1).
// The const overload runs in inference mode; the other may use batch statistics
// and update running estimates when `training` is set.
ad::Var generator_forward(const Model& model, const ad::Var& input);
ad::Var generator_forward(Model& model, const ad::Var& input, bool training);

// full [N,3,T,T], crop [N,3,C,C] -> [N,1] probability of being real.
ad::Var discriminator_forward(const Model& model, const ad::Var& full, const ad::Var& crop);
ad::Var discriminator_forward(Model& model, const ad::Var& full, const ad::Var& crop, bool training);

// Context pixels (mask == 1) from `original`, hole pixels from `raw`.
ad::Var restore_context(const ad::Var& raw, const ad::Var& original, const Tensor& masks);

// Top-left corner of the crop_px window centred on the hole centre.
std::pair<int, int> local_crop_origin(const Mask& mask, int crop_px);
// [3,crop,crop] normalized crop around the hole of one tile.
Tensor local_crop(const Tile& tile, const Mask& mask, int crop_px = 64);
// Batched crop of a [N,3,T,T] Var, one window per mask.
ad::Var local_crops(const ad::Var& tiles, std::span<const Mask> masks, int crop_px);

// ---- tensor <-> tile conversion --------------------------------------------

float normalize(std::uint8_t value);
std::uint8_t quantize(float value);

Tensor tiles_to_tensor(std::span<const Tile> tiles);
Tensor masks_to_tensor(std::span<const Mask> masks);
// [N,4,T,T]: masked tile channels (road channels set to `fill` in the hole) + mask plane.
Tensor generator_input(std::span<const Tile> tiles, std::span<const Mask> masks, std::uint8_t fill);
Tile tensor_to_tile(const Tensor& batch, int index);

}  // namespace deepstreet
