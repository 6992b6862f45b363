#pragma once

#include "damgan/autodiff.hpp"
#include "damgan/model.hpp"
#include "damgan/tensor.hpp"

#include <array>
#include <span>

namespace damgan::loss {

/// Clamp applied to discriminator probabilities before taking logs.
inline constexpr double kLogClamp = 1e-7;

struct LossWeights {
  double re = 1.0;
  double adv = 0.001;
  double dam = 0.005;

  void validate() const;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossBreakdown {
  double l_re = 0;
  double l_adv_d = 0;
  double l_adv_g = 0;
  double l_dam = 0;
  double l_total = 0;
};

template <typename Scalar>
using FakenessTargets = std::array<Tensor<Scalar>, model::kFakenessScales>;

/// BT.601 luma of an RGB batch, [b, 1, h, w].
template <typename Scalar>
Tensor<Scalar> grayscale(const Tensor<Scalar>& rgb);

/// grayscale(|final - x_hat|) for two images already at the same scale.
template <typename Scalar>
Tensor<Scalar> ground_truth_fakeness(const Tensor<Scalar>& x_hat, const Tensor<Scalar>& final);

/// Per-scale targets: the full-resolution map area-averaged by 2^j.
template <typename Scalar>
FakenessTargets<Scalar> fakeness_targets(const Tensor<Scalar>& x_hat, const Tensor<Scalar>& final);

// Differentiable forms. Every result is a [1,1,1,1] node.

/// mean|x_hat - coarse| + mean|x_hat - final|
template <typename Scalar>
ad::Var<Scalar> reconstruction_loss(const ad::Var<Scalar>& x_hat, const ad::Var<Scalar>& coarse,
                                    const ad::Var<Scalar>& final);

/// -mean log D(real) - mean log(1 - D(fake))
template <typename Scalar>
ad::Var<Scalar> adversarial_loss_d(const ad::Var<Scalar>& score_real, const ad::Var<Scalar>& score_fake);

/// Non-saturating generator form: -mean log D(fake).
template <typename Scalar>
ad::Var<Scalar> adversarial_loss_g(const ad::Var<Scalar>& score_fake);

/// sum_j mean|M_j - target_j|. Targets enter as constants.
template <typename Scalar>
ad::Var<Scalar> dam_loss(const std::array<ad::Var<Scalar>, model::kFakenessScales>& predicted,
                         const FakenessTargets<Scalar>& targets);

template <typename Scalar>
ad::Var<Scalar> total_loss(const ad::Var<Scalar>& l_re, const ad::Var<Scalar>& l_adv_g,
                           const ad::Var<Scalar>& l_dam, const LossWeights& w);

// Value forms over plain tensors.

template <typename Scalar>
Scalar reconstruction_loss(const Tensor<Scalar>& x_hat, const Tensor<Scalar>& coarse,
                           const Tensor<Scalar>& final);

template <typename Scalar>
Scalar adversarial_loss_d(std::span<const Scalar> score_real, std::span<const Scalar> score_fake);

template <typename Scalar>
Scalar adversarial_loss_g(std::span<const Scalar> score_fake);

/// Builds the targets from (x_hat, final), then sums the per-scale L1 means.
template <typename Scalar>
Scalar dam_loss(const FakenessTargets<Scalar>& predicted, const Tensor<Scalar>& x_hat,
                const Tensor<Scalar>& final);

double total_loss(double l_re, double l_adv_g, double l_dam, const LossWeights& w);

/// Generator-side terms of one batch, built on the generator's tape.
template <typename Scalar>
struct GeneratorObjective {
  ad::Var<Scalar> l_re;
  ad::Var<Scalar> l_adv_g;
  ad::Var<Scalar> l_dam;
  ad::Var<Scalar> total;
  FakenessTargets<Scalar> targets;
};

/// Total generator objective for a forward graph. `frozen_targets`, when
/// given, replaces the targets derived from the graph's own output.
template <typename Scalar>
GeneratorObjective<Scalar> generator_objective(const model::GeneratorGraph<Scalar>& graph,
                                               const Tensor<Scalar>& x_hat,
                                               const ad::Var<Scalar>& fake_scores,
                                               const LossWeights& w,
                                               const FakenessTargets<Scalar>* frozen_targets = nullptr);

}  // namespace damgan::loss
