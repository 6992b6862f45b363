#pragma once

#include "damgan/data.hpp"
#include "damgan/losses.hpp"
#include "damgan/metrics.hpp"
#include "damgan/model.hpp"
#include "damgan/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace damgan::train {

/// Raised when a loss term turns non-finite; carries the term's name.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& term, double value);
  const std::string& term() const { return term_; }

 private:
  std::string term_;
};

/// Which masks training batches use. `alternate` switches center/free-form per step.
enum class MaskSchedule { center, free_form, alternate };

const char* to_string(MaskSchedule s);
MaskSchedule parse_mask_schedule(const std::string& s);

struct TrainConfig {
  int batch_size = 16;
  std::int64_t steps = 1000;
  double lr_g = 1e-4;
  double lr_d = 1e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int d_steps_per_g = 1;
  loss::LossWeights weights;
  data::MaskSpec mask_spec;
  MaskSchedule mask_schedule = MaskSchedule::alternate;
  std::uint64_t seed = 0;
  std::int64_t checkpoint_every = 1000;
  std::int64_t eval_every = 0;  // 0 disables periodic evaluation

  void validate() const;
  optim::AdamConfig adam_g() const { return {lr_g, adam_beta1, adam_beta2, adam_eps}; }
  optim::AdamConfig adam_d() const { return {lr_d, adam_beta1, adam_beta2, adam_eps}; }
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Everything needed to continue a run; this is what a checkpoint stores.
struct TrainState {
  model::ModelConfig model;
  TrainConfig config;
  model::ParameterStore<float> generator;
  model::ParameterStore<float> discriminator;
  optim::AdamState<float> opt_g;
  optim::AdamState<float> opt_d;
  std::int64_t step = 0;
  std::mt19937_64 rng;
};

/// Fresh networks and optimizer state seeded from config.seed.
TrainState init_state(const model::ModelConfig& model, const TrainConfig& config);

struct Batch {
  data::ImageTensor x_hat;
  data::Mask mask;  // [b,1,h,w] or a single broadcast item
};

/// D update(s) on detached generator output, then one generator update on
/// the weighted objective. Increments state.step.
loss::LossBreakdown train_step(TrainState& state, const Batch& batch);

/// Draws the next training batch from `images` using state.rng.
Batch sample_batch(TrainState& state, const data::ImageTensor& images);

/// Per-image evaluation seed: mixes the image id into the global seed.
std::uint64_t image_seed(const std::string& id, std::uint64_t seed);

struct EvaluationReports {
  metrics::MetricsReport raw;
  metrics::MetricsReport composited;
};

/// Scores the generator on `images` (ids parallel to items) with center or
/// per-image seeded free-form masks.
EvaluationReports evaluate_model(const model::ModelConfig& cfg,
                                 const model::ParameterStore<float>& generator,
                                 const data::ImageTensor& images, const std::vector<std::string>& ids,
                                 metrics::MaskTag mask_mode, const data::MaskSpec& mask_spec,
                                 std::uint64_t seed);

struct RunOptions {
  std::filesystem::path data_root;
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  /// Receives one summary line per periodic evaluation.
  std::function<void(const std::string&)> on_eval;
};

struct RunResult {
  TrainState state;
  std::vector<std::int64_t> checkpoint_steps;
  std::filesystem::path log;
};

std::filesystem::path checkpoint_path(const std::filesystem::path& out_dir, std::int64_t step);

/// Runs (or resumes) training to config.steps, writing train_log.csv and
/// checkpoints into out_dir.
RunResult run_training(const model::ModelConfig& model, const TrainConfig& config,
                       const data::DatasetManifest& manifest, const RunOptions& options);

/// Same, on an in-memory training set.
RunResult run_training(const model::ModelConfig& model, const TrainConfig& config,
                       const data::ImageTensor& train_images, const data::ImageTensor& val_images,
                       const RunOptions& options);

inline constexpr const char* kLogHeader = "step,l_re,l_adv_d,l_adv_g,l_dam,l_total";

std::string format_log_row(std::int64_t step, const loss::LossBreakdown& l);

}  // namespace damgan::train
