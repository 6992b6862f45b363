#include "damgan/trainer.hpp"

#include "damgan/checkpoint.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace damgan::train {

namespace fs = std::filesystem;

NumericalError::NumericalError(const std::string& term, double value)
    : std::runtime_error("non-finite loss term " + term + " = " + std::to_string(value)), term_(term) {}

const char* to_string(MaskSchedule s) {
  switch (s) {
    case MaskSchedule::center: return "center";
    case MaskSchedule::free_form: return "free_form";
    case MaskSchedule::alternate: return "alternate";
  }
  return "alternate";
}

MaskSchedule parse_mask_schedule(const std::string& s) {
  if (s == "center") return MaskSchedule::center;
  if (s == "free_form") return MaskSchedule::free_form;
  if (s == "alternate") return MaskSchedule::alternate;
  throw std::invalid_argument("unknown mask schedule '" + s + "'");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("train config: " + what); };
  if (batch_size < 1) fail("batch_size must be positive");
  if (steps < 0) fail("steps must be non-negative");
  if (!(lr_g > 0)) fail("lr_g must be positive");
  if (!(lr_d > 0)) fail("lr_d must be positive");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1)) fail("adam_beta1 must lie in [0,1)");
  if (!(adam_beta2 >= 0 && adam_beta2 < 1)) fail("adam_beta2 must lie in [0,1)");
  if (!(adam_eps > 0)) fail("adam_eps must be positive");
  if (d_steps_per_g < 1) fail("d_steps_per_g must be positive");
  if (checkpoint_every < 1) fail("checkpoint_every must be positive");
  if (eval_every < 0) fail("eval_every must be non-negative");
  weights.validate();
}

TrainState init_state(const model::ModelConfig& model, const TrainConfig& config) {
  model.validate();
  config.validate();
  TrainState s;
  s.model = model;
  s.config = config;
  s.config.mask_spec.resolution = model.resolution;
  std::seed_seq seq{config.seed, config.seed >> 32, std::uint64_t{0xda3ca11}};
  std::mt19937_64 seeder(seq);
  s.generator = model::build_generator<float>(model, seeder());
  s.discriminator = model::build_discriminator<float>(model, seeder());
  s.opt_g = optim::AdamState<float>::like(s.generator);
  s.opt_d = optim::AdamState<float>::like(s.discriminator);
  s.rng.seed(seeder());
  return s;
}

namespace {

void require_finite(const char* term, double v) {
  if (!std::isfinite(v)) throw NumericalError(term, v);
}

}  // namespace

loss::LossBreakdown train_step(TrainState& state, const Batch& batch) {
  const auto& cfg = state.config;
  const auto masked = data::apply_mask(batch.x_hat, batch.mask);

  ad::Tape<float> gtape;
  model::Bound<float> gparams(gtape, state.generator, true);
  const auto graph = model::generator_forward(state.model, gparams, masked.generator_input);
  const Tensor<float> fake = graph.final.value();

  loss::LossBreakdown out;
  for (int k = 0; k < cfg.d_steps_per_g; ++k) {
    ad::Tape<float> dtape;
    model::Bound<float> dparams(dtape, state.discriminator, true);
    auto real_scores = model::discriminator_forward(state.model, dparams, dtape.constant(batch.x_hat));
    auto fake_scores = model::discriminator_forward(state.model, dparams, dtape.constant(fake));
    auto l_d = loss::adversarial_loss_d(real_scores, fake_scores);
    out.l_adv_d = l_d.item();
    require_finite("l_adv_d", out.l_adv_d);
    dtape.backward(l_d);
    optim::adam_step(state.discriminator, dparams.gradients(), state.opt_d, cfg.adam_d());
  }

  // Discriminator parameters enter the generator tape as constants.
  model::Bound<float> frozen_d(gtape, state.discriminator, false);
  auto scores = model::discriminator_forward(state.model, frozen_d, graph.final);
  const auto obj = loss::generator_objective(graph, batch.x_hat, scores, cfg.weights);
  out.l_re = obj.l_re.item();
  out.l_adv_g = obj.l_adv_g.item();
  out.l_dam = obj.l_dam.item();
  out.l_total = obj.total.item();
  require_finite("l_re", out.l_re);
  require_finite("l_adv_g", out.l_adv_g);
  require_finite("l_dam", out.l_dam);
  require_finite("l_total", out.l_total);
  gtape.backward(obj.total);
  optim::adam_step(state.generator, gparams.gradients(), state.opt_g, cfg.adam_g());
  ++state.step;
  return out;
}

Batch sample_batch(TrainState& state, const data::ImageTensor& images) {
  const Shape s = images.shape();
  if (s.n < 1) throw std::invalid_argument("sample_batch: no training images");
  const auto& cfg = state.config;
  std::vector<Index> order(static_cast<std::size_t>(s.n));
  std::iota(order.begin(), order.end(), Index{0});
  const Index b = std::min<Index>(cfg.batch_size, s.n);
  if (b < s.n) {
    // Partial Fisher-Yates: the first b slots become a uniform subset.
    for (Index i = 0; i < b; ++i) {
      std::uniform_int_distribution<Index> pick(i, s.n - 1);
      std::swap(order[std::size_t(i)], order[std::size_t(pick(state.rng))]);
    }
  }
  Batch batch{data::ImageTensor({b, s.c, s.h, s.w}), data::Mask({b, 1, s.h, s.w})};
  for (Index i = 0; i < b; ++i) batch.x_hat.item(i) = images.item(order[std::size_t(i)]);

  const bool center = cfg.mask_schedule == MaskSchedule::center ||
                      (cfg.mask_schedule == MaskSchedule::alternate && state.step % 2 == 0);
  data::MaskSpec spec = cfg.mask_spec;
  spec.resolution = s.h;
  for (Index i = 0; i < b; ++i) {
    if (center) {
      spec.mode = data::MaskMode::center;
    } else {
      spec.mode = data::MaskMode::free_form;
      spec.seed = state.rng();
    }
    batch.mask.item(i) = data::make_mask(spec).item(0);
  }
  return batch;
}

std::uint64_t image_seed(const std::string& id, std::uint64_t seed) {
  std::uint64_t z = checkpoint::fnv1a64(id.data(), id.size()) ^ (seed + 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

EvaluationReports evaluate_model(const model::ModelConfig& cfg,
                                 const model::ParameterStore<float>& generator,
                                 const data::ImageTensor& images, const std::vector<std::string>& ids,
                                 metrics::MaskTag mask_mode, const data::MaskSpec& mask_spec,
                                 std::uint64_t seed) {
  const Shape s = images.shape();
  if (s.n < 1) throw std::invalid_argument("evaluate_model: empty validation split");
  if (ids.size() != std::size_t(s.n)) throw std::invalid_argument("evaluate_model: ids do not match images");
  std::vector<metrics::MetricsRow> raw, comp;
  data::MaskSpec spec = mask_spec;
  spec.resolution = cfg.resolution;
  spec.mode = mask_mode == metrics::MaskTag::center ? data::MaskMode::center : data::MaskMode::free_form;
  for (Index i = 0; i < s.n; ++i) {
    const std::string& id = ids[std::size_t(i)];
    spec.seed = image_seed(id, seed);
    const data::Mask mask = data::make_mask(spec);
    const data::ImageTensor x_hat = slice_batch(images, i, 1);
    const auto masked = data::apply_mask(x_hat, mask);
    const auto out = model::run_generator(cfg, generator, masked.generator_input);
    const auto r = metrics::evaluate_pair(x_hat, out.final, mask, metrics::Compositing::raw);
    const auto c = metrics::evaluate_pair(x_hat, out.final, mask, metrics::Compositing::composited);
    raw.push_back({id, r.psnr, r.ssim});
    comp.push_back({id, c.psnr, c.ssim});
  }
  return {metrics::aggregate(std::move(raw), mask_mode, metrics::Compositing::raw),
          metrics::aggregate(std::move(comp), mask_mode, metrics::Compositing::composited)};
}

std::string format_log_row(std::int64_t step, const loss::LossBreakdown& l) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.6g,%.6g,%.6g,%.6g,%.6g", static_cast<long long>(step), l.l_re,
                l.l_adv_d, l.l_adv_g, l.l_dam, l.l_total);
  return buf;
}

fs::path checkpoint_path(const fs::path& out_dir, std::int64_t step) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "checkpoint_%08lld.ckpt", static_cast<long long>(step));
  return out_dir / buf;
}

namespace {

/// Keeps the header and rows up to `step`, so a resumed run continues the log.
void prepare_log(const fs::path& log, std::int64_t step) {
  std::vector<std::string> kept;
  if (step > 0 && fs::exists(log)) {
    std::ifstream in(log);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (std::stoll(line.substr(0, line.find(','))) <= step) kept.push_back(line);
    }
  }
  std::ofstream out(log, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write training log " + log.string());
  out << kLogHeader << '\n';
  for (const auto& l : kept) out << l << '\n';
}

std::vector<std::string> item_ids(Index n) {
  std::vector<std::string> ids;
  for (Index i = 0; i < n; ++i) ids.push_back(std::to_string(i));
  return ids;
}

}  // namespace

RunResult run_training(const model::ModelConfig& model, const TrainConfig& config,
                       const data::ImageTensor& train_images, const data::ImageTensor& val_images,
                       const RunOptions& options) {
  if (train_images.shape().n < 1) throw std::invalid_argument("run_training: empty training set");
  fs::create_directories(options.out_dir);

  RunResult result;
  if (options.resume) {
    result.state = checkpoint::load(*options.resume);
    if (!(result.state.model == model)) throw std::invalid_argument("resume: model config differs from checkpoint");
    // The step budget may be extended; everything else must match.
    TrainConfig saved = result.state.config;
    saved.steps = config.steps;
    TrainConfig wanted = config;
    wanted.mask_spec.resolution = model.resolution;
    if (!(saved == wanted)) throw std::invalid_argument("resume: train config differs from checkpoint");
    result.state.config.steps = config.steps;
  } else {
    result.state = init_state(model, config);
  }
  TrainState& state = result.state;
  result.log = options.out_dir / "train_log.csv";
  prepare_log(result.log, state.step);

  std::ofstream log(result.log, std::ios::binary | std::ios::app);
  auto save = [&] {
    checkpoint::save(checkpoint_path(options.out_dir, state.step), state);
    result.checkpoint_steps.push_back(state.step);
  };
  try {
    while (state.step < config.steps) {
      const Batch batch = sample_batch(state, train_images);
      const auto losses = train_step(state, batch);
      log << format_log_row(state.step, losses) << '\n';
      log.flush();
      if (!log) throw std::runtime_error("failed writing training log " + result.log.string());
      if (state.step % config.checkpoint_every == 0 || state.step == config.steps) save();
      if (config.eval_every > 0 && state.step % config.eval_every == 0 && val_images.shape().n > 0) {
        const auto rep = evaluate_model(model, state.generator, val_images, item_ids(val_images.shape().n),
                                        metrics::MaskTag::center, state.config.mask_spec, config.seed);
        if (options.on_eval) {
          std::ostringstream msg;
          msg << "step " << state.step << " val center psnr=" << rep.composited.mean_psnr
              << " ssim=" << rep.composited.mean_ssim;
          options.on_eval(msg.str());
        }
      }
    }
  } catch (...) {
    log.flush();
    throw;
  }
  if (result.checkpoint_steps.empty() || result.checkpoint_steps.back() != state.step) save();
  return result;
}

RunResult run_training(const model::ModelConfig& model, const TrainConfig& config,
                       const data::DatasetManifest& manifest, const RunOptions& options) {
  if (manifest.count(data::Split::train) == 0) throw std::invalid_argument("run_training: manifest has no training images");
  const auto train = data::load_split(options.data_root, manifest, data::Split::train);
  const auto val = manifest.count(data::Split::val) > 0
                       ? data::load_split(options.data_root, manifest, data::Split::val)
                       : data::ImageTensor();
  return run_training(model, config, train, val, options);
}

}  // namespace damgan::train
