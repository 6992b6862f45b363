#include "damgan/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace damgan::loss {

void LossWeights::validate() const {
  if (!(std::isfinite(re) && re >= 0)) throw std::invalid_argument("loss weights: lambda_re must be finite and >= 0");
  if (!(std::isfinite(adv) && adv >= 0)) throw std::invalid_argument("loss weights: lambda_adv must be finite and >= 0");
  if (!(std::isfinite(dam) && dam >= 0)) throw std::invalid_argument("loss weights: lambda_dam must be finite and >= 0");
}

template <typename Scalar>
Tensor<Scalar> grayscale(const Tensor<Scalar>& rgb) {
  const Shape s = rgb.shape();
  if (s.c != 3) throw std::invalid_argument("grayscale: expected 3 channels, got " + to_string(s));
  Tensor<Scalar> out({s.n, 1, s.h, s.w});
  for (Index n = 0; n < s.n; ++n) {
    const auto in = rgb.item(n);
    out.item(n).row(0) = Scalar(0.299) * in.row(0) + Scalar(0.587) * in.row(1) + Scalar(0.114) * in.row(2);
  }
  return out;
}

template <typename Scalar>
Tensor<Scalar> ground_truth_fakeness(const Tensor<Scalar>& x_hat, const Tensor<Scalar>& final) {
  require_same_shape(x_hat.shape(), final.shape(), "ground_truth_fakeness");
  Tensor<Scalar> diff(final.shape(), (final.array() - x_hat.array()).abs());
  Tensor<Scalar> gray = grayscale(diff);
  // Luma weights sum to 1, so rounding may only push past 1 by an ulp.
  gray.array() = gray.array().min(Scalar(1));
  return gray;
}

template <typename Scalar>
FakenessTargets<Scalar> fakeness_targets(const Tensor<Scalar>& x_hat, const Tensor<Scalar>& final) {
  const Tensor<Scalar> full = ground_truth_fakeness(x_hat, final);
  FakenessTargets<Scalar> targets;
  for (int j = 0; j < model::kFakenessScales; ++j) {
    targets[std::size_t(j)] = area_downsample(full, Index{1} << j);
  }
  return targets;
}

template <typename Scalar>
ad::Var<Scalar> reconstruction_loss(const ad::Var<Scalar>& x_hat, const ad::Var<Scalar>& coarse,
                                    const ad::Var<Scalar>& final) {
  require_same_shape(x_hat.shape(), coarse.shape(), "reconstruction_loss");
  require_same_shape(x_hat.shape(), final.shape(), "reconstruction_loss");
  return ad::l1_mean(coarse, x_hat) + ad::l1_mean(final, x_hat);
}

template <typename Scalar>
ad::Var<Scalar> adversarial_loss_d(const ad::Var<Scalar>& score_real, const ad::Var<Scalar>& score_fake) {
  const Scalar eps = Scalar(kLogClamp);
  return ad::neg_mean_log(score_real, eps) + ad::neg_mean_log1m(score_fake, eps);
}

template <typename Scalar>
ad::Var<Scalar> adversarial_loss_g(const ad::Var<Scalar>& score_fake) {
  return ad::neg_mean_log(score_fake, Scalar(kLogClamp));
}

template <typename Scalar>
ad::Var<Scalar> dam_loss(const std::array<ad::Var<Scalar>, model::kFakenessScales>& predicted,
                         const FakenessTargets<Scalar>& targets) {
  ad::Tape<Scalar>& tape = *predicted[0].tape();
  ad::Var<Scalar> sum = ad::l1_mean(predicted[0], tape.constant(targets[0]));
  for (std::size_t j = 1; j < predicted.size(); ++j) {
    sum = sum + ad::l1_mean(predicted[j], tape.constant(targets[j]));
  }
  return sum;
}

template <typename Scalar>
ad::Var<Scalar> total_loss(const ad::Var<Scalar>& l_re, const ad::Var<Scalar>& l_adv_g,
                           const ad::Var<Scalar>& l_dam, const LossWeights& w) {
  w.validate();
  return ad::scale(l_re, Scalar(w.re)) + ad::scale(l_adv_g, Scalar(w.adv)) +
         ad::scale(l_dam, Scalar(w.dam));
}

template <typename Scalar>
Scalar reconstruction_loss(const Tensor<Scalar>& x_hat, const Tensor<Scalar>& coarse,
                           const Tensor<Scalar>& final) {
  ad::Tape<Scalar> tape;
  return reconstruction_loss(tape.constant(x_hat), tape.constant(coarse), tape.constant(final)).item();
}

namespace {

template <typename Scalar>
Tensor<Scalar> scores_tensor(std::span<const Scalar> scores) {
  if (scores.empty()) throw std::invalid_argument("adversarial loss: empty score batch");
  Tensor<Scalar> t({Index(scores.size()), 1, 1, 1});
  for (std::size_t i = 0; i < scores.size(); ++i) t[Index(i)] = scores[i];
  return t;
}

}  // namespace

template <typename Scalar>
Scalar adversarial_loss_d(std::span<const Scalar> score_real, std::span<const Scalar> score_fake) {
  ad::Tape<Scalar> tape;
  return adversarial_loss_d(tape.constant(scores_tensor(score_real)),
                            tape.constant(scores_tensor(score_fake)))
      .item();
}

template <typename Scalar>
Scalar adversarial_loss_g(std::span<const Scalar> score_fake) {
  ad::Tape<Scalar> tape;
  return adversarial_loss_g(tape.constant(scores_tensor(score_fake))).item();
}

template <typename Scalar>
Scalar dam_loss(const FakenessTargets<Scalar>& predicted, const Tensor<Scalar>& x_hat,
                const Tensor<Scalar>& final) {
  const auto targets = fakeness_targets(x_hat, final);
  ad::Tape<Scalar> tape;
  std::array<ad::Var<Scalar>, model::kFakenessScales> vars;
  for (std::size_t j = 0; j < vars.size(); ++j) {
    require_same_shape(predicted[j].shape(), targets[j].shape(), "dam_loss");
    vars[j] = tape.constant(predicted[j]);
  }
  return dam_loss(vars, targets).item();
}

double total_loss(double l_re, double l_adv_g, double l_dam, const LossWeights& w) {
  w.validate();
  return w.re * l_re + w.adv * l_adv_g + w.dam * l_dam;
}

template <typename Scalar>
GeneratorObjective<Scalar> generator_objective(const model::GeneratorGraph<Scalar>& graph,
                                               const Tensor<Scalar>& x_hat,
                                               const ad::Var<Scalar>& fake_scores,
                                               const LossWeights& w,
                                               const FakenessTargets<Scalar>* frozen_targets) {
  ad::Tape<Scalar>& tape = *graph.final.tape();
  GeneratorObjective<Scalar> obj;
  obj.targets = frozen_targets ? *frozen_targets : fakeness_targets(x_hat, graph.final.value());
  obj.l_re = reconstruction_loss(tape.constant(x_hat), graph.coarse, graph.final);
  obj.l_adv_g = adversarial_loss_g(fake_scores);
  obj.l_dam = dam_loss(graph.fakeness, obj.targets);
  obj.total = total_loss(obj.l_re, obj.l_adv_g, obj.l_dam, w);
  return obj;
}

#define DAMGAN_INSTANTIATE_LOSS(S)                                                                \
  template Tensor<S> grayscale(const Tensor<S>&);                                                 \
  template Tensor<S> ground_truth_fakeness(const Tensor<S>&, const Tensor<S>&);                   \
  template FakenessTargets<S> fakeness_targets(const Tensor<S>&, const Tensor<S>&);               \
  template ad::Var<S> reconstruction_loss(const ad::Var<S>&, const ad::Var<S>&, const ad::Var<S>&); \
  template ad::Var<S> adversarial_loss_d(const ad::Var<S>&, const ad::Var<S>&);                   \
  template ad::Var<S> adversarial_loss_g(const ad::Var<S>&);                                      \
  template ad::Var<S> dam_loss(const std::array<ad::Var<S>, model::kFakenessScales>&,             \
                               const FakenessTargets<S>&);                                        \
  template ad::Var<S> total_loss(const ad::Var<S>&, const ad::Var<S>&, const ad::Var<S>&,         \
                                 const LossWeights&);                                             \
  template S reconstruction_loss(const Tensor<S>&, const Tensor<S>&, const Tensor<S>&);           \
  template S adversarial_loss_d(std::span<const S>, std::span<const S>);                          \
  template S adversarial_loss_g(std::span<const S>);                                              \
  template S dam_loss(const FakenessTargets<S>&, const Tensor<S>&, const Tensor<S>&);             \
  template GeneratorObjective<S> generator_objective(const model::GeneratorGraph<S>&,             \
                                                     const Tensor<S>&, const ad::Var<S>&,         \
                                                     const LossWeights&, const FakenessTargets<S>*);

DAMGAN_INSTANTIATE_LOSS(float)
DAMGAN_INSTANTIATE_LOSS(double)

}  // namespace damgan::loss
