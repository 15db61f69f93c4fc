#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <span>
#include <vector>

#include "deepstreet/adadelta.hpp"
#include "deepstreet/checkpoint.hpp"
#include "deepstreet/error.hpp"
#include "deepstreet/mask.hpp"
#include "deepstreet/network.hpp"

namespace deepstreet {

enum class GeneratorLoss { non_saturating, saturating };

struct TrainConfig {
  double alpha = 0.001;
  int batch_size = 8;
  std::int64_t generator_iters = 2000;      // phase 1
  std::int64_t discriminator_iters = 500;   // phase 2
  std::int64_t joint_iters = 2000;          // phase 3
  float rho = 0.95f;
  float epsilon = 1e-6f;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 0;  // 0 = phase boundaries only
  MaskGeometry geometry;
  std::uint8_t fill_value = 0;
  GeneratorLoss generator_loss = GeneratorLoss::non_saturating;

  // 900,000 / 30,000 / 900,000 iterations at batch 24.
  static TrainConfig full_scale();
  void validate() const;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

// ---- losses -----------------------------------------------------------------

// Squared error summed over hole pixels (mask == 0) and all channels, averaged
// over the batch. `masks` is [N,1,H,W] with 0 in the hole.
double mse_loss(const Tensor& original, const Tensor& output, const Tensor& masks);
ad::Var mse_loss(const ad::Var& output, const ad::Var& original, const Tensor& masks);

inline constexpr float kProbabilityFloor = 1e-7f;

struct GanLosses {
  double discriminator = 0.0;  // -[log d_real + log(1 - d_fake)]
  double generator = 0.0;      // -log d_fake, or log(1 - d_fake) when saturating
  int clamped = 0;             // inputs pulled into [1e-7, 1 - 1e-7]
};

GanLosses gan_losses(double d_real, double d_fake, GeneratorLoss kind = GeneratorLoss::non_saturating);

struct Objective {
  double generator = 0.0;      // mse + alpha * generator adversarial loss
  double discriminator = 0.0;  // alpha * discriminator loss
};

Objective combined_objective(double mse, double generator_adv, double discriminator_adv, double alpha);

// ---- run log ----------------------------------------------------------------

struct IterationRecord {
  int phase = 0;
  std::int64_t iteration = 0;  // 1-based within the phase
  double mse = 0.0;            // batch mean of per-tile hole sums
  double mse_per_pixel = 0.0;  // mse / (hole pixels * 3)
  double d_loss = 0.0;         // 0 when the phase does not evaluate it
  double g_adv = 0.0;          // 0 when the phase does not evaluate it
  int clamped = 0;
  double millis = 0.0;

  bool losses_finite() const;
};

/// Tab-separated, one line per iteration:
///   phase iter mse mse_per_pixel d_loss g_adv clamped millis
struct TrainingRunLog {
  std::vector<IterationRecord> records;

  static const char* header();
  static void write_record(std::ostream& out, const IterationRecord& record);
};

// ---- trainer ----------------------------------------------------------------

/// Owns the model, both optimizers and the batch RNG. Each call runs one
/// iteration of the named phase: every batch samples tiles with replacement
/// and draws a fresh random mask per tile.
class Trainer {
 public:
  Trainer(Model model, std::vector<Tile> tiles, TrainConfig config);

  IterationRecord generator_step();      // phase 1: hole MSE only
  IterationRecord discriminator_step();  // phase 2: D against frozen-generator completions
  IterationRecord joint_step();          // phase 3: one D update, then one G update

  // One D update on explicit batches ([N,3,T,T] in [0,1]); the local branch
  // sees the window around each mask's hole. Returns the unweighted loss.
  double update_discriminator(const Tensor& real, const Tensor& fake, std::span<const Mask> masks,
                              double weight, int* clamped = nullptr);

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  const TrainConfig& config() const { return config_; }
  TrainingCounters counters() const { return counters_; }

 private:
  struct Batch {
    std::vector<Tile> tiles;
    std::vector<Mask> masks;
    Tensor input;       // [N,4,T,T]
    Tensor target;      // [N,3,T,T]
    Tensor mask_plane;  // [N,1,T,T]
  };
  Batch next_batch();
  double hole_area() const;

  Model model_;
  std::vector<Tile> tiles_;
  TrainConfig config_;
  std::mt19937_64 rng_;
  Adadelta generator_opt_;
  Adadelta discriminator_opt_;
  TrainingCounters counters_;
};

// Fraction of real tiles scored > 0.5 plus fake tiles scored < 0.5.
double discriminator_accuracy(const Model& model, std::span<const Tile> real, std::span<const Tile> fake,
                              std::span<const Mask> masks);

struct TrainResult {
  TrainingRunLog log;
  std::vector<std::filesystem::path> checkpoints;
  Model model;
};

// Runs the three phases, appending to <out_dir>/train_log.tsv and writing a
// checkpoint at each phase boundary and every `checkpoint_every` iterations.
// A non-finite loss aborts with TrainingError; checkpoints already written stay.
TrainResult train(std::vector<Tile> tiles, const TrainConfig& config, const NetworkConfig& network,
                  const std::filesystem::path& out_dir,
                  const std::function<void(const IterationRecord&)>& observer = {});
// Same, starting from an existing model (e.g. a loaded checkpoint). The model's
// parameter storage is shared with the caller, not copied.
TrainResult train(std::vector<Tile> tiles, const TrainConfig& config, Model model,
                  const std::filesystem::path& out_dir,
                  const std::function<void(const IterationRecord&)>& observer = {});

}  // namespace deepstreet
