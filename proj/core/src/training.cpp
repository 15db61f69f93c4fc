#include "deepstreet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>

#include "deepstreet/error.hpp"

namespace deepstreet {

TrainConfig TrainConfig::full_scale() {
  TrainConfig c;
  c.batch_size = 24;
  c.generator_iters = 900000;
  c.discriminator_iters = 30000;
  c.joint_iters = 900000;
  return c;
}

void TrainConfig::validate() const {
  if (!(alpha >= 0.0)) throw Error("alpha must be non-negative");
  if (batch_size <= 0) throw Error("batch size must be positive");
  if (generator_iters <= 0 || discriminator_iters <= 0 || joint_iters <= 0) {
    throw Error("phase iteration counts must be positive");
  }
  if (checkpoint_every < 0) throw Error("checkpoint cadence must be non-negative");
  if (!(rho > 0.0f && rho < 1.0f) || !(epsilon > 0.0f)) throw Error("adadelta needs rho in (0,1) and epsilon > 0");
  geometry.validate();
}

// ---- losses -----------------------------------------------------------------

double mse_loss(const Tensor& original, const Tensor& output, const Tensor& masks) {
  require_same_shape(original, output, "mse_loss");
  Tensor hole(masks.shape());
  for (std::size_t i = 0; i < masks.size(); ++i) hole[i] = 1.0f - masks[i];
  ad::NoGradGuard guard;
  const ad::Var total =
      ad::masked_squared_error(ad::Var::constant(output), ad::Var::constant(original), hole);
  return static_cast<double>(total.value()[0]) / original.dim(0);
}

ad::Var mse_loss(const ad::Var& output, const ad::Var& original, const Tensor& masks) {
  Tensor hole(masks.shape());
  for (std::size_t i = 0; i < masks.size(); ++i) hole[i] = 1.0f - masks[i];
  return ad::affine(ad::masked_squared_error(output, original, hole), 1.0f / output.shape()[0], 0.0f);
}

GanLosses gan_losses(double d_real, double d_fake, GeneratorLoss kind) {
  GanLosses out;
  auto clamp = [&](double p) {
    const double lo = kProbabilityFloor, hi = 1.0 - kProbabilityFloor;
    if (!(p >= lo && p <= hi)) {
      ++out.clamped;
      return std::isnan(p) ? lo : std::clamp(p, lo, hi);
    }
    return p;
  };
  const double real = clamp(d_real);
  const double fake = clamp(d_fake);
  out.discriminator = -(std::log(real) + std::log(1.0 - fake));
  out.generator = kind == GeneratorLoss::non_saturating ? -std::log(fake) : std::log(1.0 - fake);
  return out;
}

Objective combined_objective(double mse, double generator_adv, double discriminator_adv, double alpha) {
  if (!(alpha >= 0.0)) throw Error("alpha must be non-negative");
  return {mse + alpha * generator_adv, alpha * discriminator_adv};
}

namespace {

int count_clamped(const Tensor& probs) {
  int n = 0;
  for (float p : probs.data()) {
    if (!(p >= kProbabilityFloor && p <= 1.0f - kProbabilityFloor)) ++n;
  }
  return n;
}

ad::Var discriminator_loss(const ad::Var& d_real, const ad::Var& d_fake) {
  const float lo = kProbabilityFloor, hi = 1.0f - kProbabilityFloor;
  const ad::Var log_real = ad::mean(ad::log_clamped(d_real, lo, hi));
  const ad::Var log_not_fake = ad::mean(ad::log_clamped(ad::affine(d_fake, -1.0f, 1.0f), lo, hi));
  return ad::affine(ad::add(log_real, log_not_fake), -1.0f, 0.0f);
}

ad::Var generator_adversarial_loss(const ad::Var& d_fake, GeneratorLoss kind) {
  const float lo = kProbabilityFloor, hi = 1.0f - kProbabilityFloor;
  if (kind == GeneratorLoss::non_saturating) {
    return ad::affine(ad::mean(ad::log_clamped(d_fake, lo, hi)), -1.0f, 0.0f);
  }
  return ad::mean(ad::log_clamped(ad::affine(d_fake, -1.0f, 1.0f), lo, hi));
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

// ---- run log ----------------------------------------------------------------

bool IterationRecord::losses_finite() const {
  return std::isfinite(mse) && std::isfinite(mse_per_pixel) && std::isfinite(d_loss) && std::isfinite(g_adv);
}

const char* TrainingRunLog::header() { return "phase\titer\tmse\tmse_per_pixel\td_loss\tg_adv\tclamped\tmillis"; }

void TrainingRunLog::write_record(std::ostream& out, const IterationRecord& r) {
  out << r.phase << '\t' << r.iteration << '\t' << std::setprecision(9) << r.mse << '\t' << r.mse_per_pixel << '\t'
      << r.d_loss << '\t' << r.g_adv << '\t' << r.clamped << '\t' << std::setprecision(6) << r.millis << '\n';
}

// ---- trainer ----------------------------------------------------------------

Trainer::Trainer(Model model, std::vector<Tile> tiles, TrainConfig config)
    : model_(std::move(model)),
      tiles_(std::move(tiles)),
      config_(config),
      rng_(config.seed),
      generator_opt_(model_.generator_parameters(), config.rho, config.epsilon),
      discriminator_opt_(model_.discriminator_parameters(), config.rho, config.epsilon) {
  config_.validate();
  if (static_cast<int>(tiles_.size()) < config_.batch_size) {
    throw Error("training needs at least batch_size (" + std::to_string(config_.batch_size) + ") tiles, got " +
                std::to_string(tiles_.size()));
  }
  for (const auto& t : tiles_) {
    if (t.channels != 3 || t.width != config_.geometry.tile_px || t.height != config_.geometry.tile_px) {
      throw DimensionError("training tile does not match the configured tile size");
    }
  }
  if (model_.config.tile_px != config_.geometry.tile_px) {
    throw DimensionError("network tile size differs from the mask geometry tile size");
  }
}

double Trainer::hole_area() const {
  return static_cast<double>(config_.geometry.hole_px) * config_.geometry.hole_px * 3.0;
}

Trainer::Batch Trainer::next_batch() {
  Batch b;
  std::uniform_int_distribution<std::size_t> pick(0, tiles_.size() - 1);
  for (int i = 0; i < config_.batch_size; ++i) {
    b.tiles.push_back(tiles_[pick(rng_)]);
    b.masks.push_back(random_mask(rng_, config_.geometry));
  }
  b.input = generator_input(b.tiles, b.masks, config_.fill_value);
  b.target = tiles_to_tensor(b.tiles);
  b.mask_plane = masks_to_tensor(b.masks);
  return b;
}

IterationRecord Trainer::generator_step() {
  const auto start = std::chrono::steady_clock::now();
  Batch b = next_batch();
  const ad::Var out = generator_forward(model_, ad::Var::constant(b.input), true);
  const ad::Var loss = mse_loss(out, ad::Var::constant(b.target), b.mask_plane);
  ad::backward(loss);
  generator_opt_.step();
  generator_opt_.zero_grad();

  ++counters_.generator_iters;
  counters_.phase = std::max(counters_.phase, 1);
  IterationRecord r;
  r.phase = 1;
  r.iteration = counters_.generator_iters;
  r.mse = loss.value()[0];
  r.mse_per_pixel = r.mse / hole_area();
  r.millis = elapsed_ms(start);
  return r;
}

double Trainer::update_discriminator(const Tensor& real, const Tensor& fake, std::span<const Mask> masks,
                                     double weight, int* clamped) {
  const int crop = model_.config.crop_px;
  const ad::Var real_v = ad::Var::constant(real);
  const ad::Var fake_v = ad::Var::constant(fake);
  const ad::Var d_real = discriminator_forward(model_, real_v, local_crops(real_v, masks, crop), true);
  const ad::Var d_fake = discriminator_forward(model_, fake_v, local_crops(fake_v, masks, crop), true);
  const ad::Var loss = discriminator_loss(d_real, d_fake);
  if (clamped) *clamped += count_clamped(d_real.value()) + count_clamped(d_fake.value());
  ad::backward(ad::affine(loss, static_cast<float>(weight), 0.0f));
  discriminator_opt_.step();
  discriminator_opt_.zero_grad();
  return loss.value()[0];
}

IterationRecord Trainer::discriminator_step() {
  const auto start = std::chrono::steady_clock::now();
  Batch b = next_batch();
  Tensor raw;
  {
    ad::NoGradGuard frozen;
    raw = generator_forward(static_cast<const Model&>(model_), ad::Var::constant(b.input)).value();
  }
  const Tensor completed =
      restore_context(ad::Var::constant(raw), ad::Var::constant(b.target), b.mask_plane).value();

  IterationRecord r;
  r.phase = 2;
  r.d_loss = update_discriminator(b.target, completed, b.masks, 1.0, &r.clamped);
  ++counters_.discriminator_iters;
  counters_.phase = std::max(counters_.phase, 2);
  r.iteration = counters_.discriminator_iters;
  r.mse = mse_loss(b.target, raw, b.mask_plane);
  r.mse_per_pixel = r.mse / hole_area();
  r.millis = elapsed_ms(start);
  return r;
}

IterationRecord Trainer::joint_step() {
  const auto start = std::chrono::steady_clock::now();
  Batch b = next_batch();
  const int crop = model_.config.crop_px;
  const float alpha = static_cast<float>(config_.alpha);

  const ad::Var target = ad::Var::constant(b.target);
  const ad::Var out = generator_forward(model_, ad::Var::constant(b.input), true);
  const ad::Var completed = restore_context(out, target, b.mask_plane);

  IterationRecord r;
  r.phase = 3;
  r.d_loss = update_discriminator(b.target, completed.value(), b.masks, alpha, &r.clamped);

  const ad::Var d_fake = discriminator_forward(model_, completed, local_crops(completed, b.masks, crop), true);
  r.clamped += count_clamped(d_fake.value());
  const ad::Var adv = generator_adversarial_loss(d_fake, config_.generator_loss);
  const ad::Var mse = mse_loss(out, target, b.mask_plane);
  const ad::Var total = ad::add(mse, ad::affine(adv, alpha, 0.0f));
  ad::backward(total);
  generator_opt_.step();
  generator_opt_.zero_grad();
  discriminator_opt_.zero_grad();

  ++counters_.joint_iters;
  counters_.phase = 3;
  r.iteration = counters_.joint_iters;
  r.mse = mse.value()[0];
  r.mse_per_pixel = r.mse / hole_area();
  r.g_adv = adv.value()[0];
  r.millis = elapsed_ms(start);
  return r;
}

double discriminator_accuracy(const Model& model, std::span<const Tile> real, std::span<const Tile> fake,
                              std::span<const Mask> masks) {
  if (real.size() != masks.size() || fake.size() != masks.size() || masks.empty()) {
    throw DimensionError("accuracy needs matching real, fake and mask counts");
  }
  ad::NoGradGuard guard;
  int correct = 0;
  for (int pass = 0; pass < 2; ++pass) {
    const Tensor batch = tiles_to_tensor(pass == 0 ? real : fake);
    const ad::Var v = ad::Var::constant(batch);
    const ad::Var p = discriminator_forward(model, v, local_crops(v, masks, model.config.crop_px));
    for (float prob : p.value().data()) correct += pass == 0 ? prob > 0.5f : prob < 0.5f;
  }
  return static_cast<double>(correct) / (2.0 * masks.size());
}

TrainResult train(std::vector<Tile> tiles, const TrainConfig& config, const NetworkConfig& network,
                  const std::filesystem::path& out_dir, const std::function<void(const IterationRecord&)>& observer) {
  config.validate();
  return train(std::move(tiles), config, build_model(network), out_dir, observer);
}

TrainResult train(std::vector<Tile> tiles, const TrainConfig& config, Model model,
                  const std::filesystem::path& out_dir, const std::function<void(const IterationRecord&)>& observer) {
  config.validate();
  std::filesystem::create_directories(out_dir);
  const auto log_path = out_dir / "train_log.tsv";
  const bool fresh = !std::filesystem::exists(log_path);
  std::ofstream log_file(log_path, std::ios::app);
  if (!log_file) throw Error("cannot open " + log_path.string());
  if (fresh) log_file << TrainingRunLog::header() << '\n';

  Trainer trainer(std::move(model), std::move(tiles), config);
  TrainResult result;
  std::int64_t global_iter = 0;

  auto save = [&](int phase, std::int64_t iteration) {
    const auto path = out_dir / checkpoint_name(phase, iteration);
    save_checkpoint(path, trainer.model(), trainer.counters());
    result.checkpoints.push_back(path);
  };

  const struct {
    int phase;
    std::int64_t iters;
  } phases[] = {{1, config.generator_iters}, {2, config.discriminator_iters}, {3, config.joint_iters}};
  for (const auto& p : phases) {
    for (std::int64_t i = 1; i <= p.iters; ++i) {
      IterationRecord r = p.phase == 1   ? trainer.generator_step()
                          : p.phase == 2 ? trainer.discriminator_step()
                                         : trainer.joint_step();
      TrainingRunLog::write_record(log_file, r);
      log_file.flush();
      result.log.records.push_back(r);
      if (!r.losses_finite()) {
        throw TrainingError("non-finite loss at phase " + std::to_string(r.phase) + " iteration " +
                            std::to_string(r.iteration) + "; last good checkpoint kept");
      }
      if (observer) observer(r);
      ++global_iter;
      const bool boundary = i == p.iters;
      const bool cadence = config.checkpoint_every > 0 && global_iter % config.checkpoint_every == 0;
      if (boundary || cadence) save(p.phase, i);
    }
  }
  result.model = trainer.model().clone();
  return result;
}

}  // namespace deepstreet
