#pragma once

#include "damgan/autodiff.hpp"
#include "damgan/tensor.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace damgan::model {

enum class Norm { none, instance };

/// Number of fakeness scales; the DAM loss sums exactly this many.
inline constexpr int kFakenessScales = 4;

struct ModelConfig {
  Index resolution = 128;
  int coarse_levels = 3;
  int dam_levels = 4;
  Index base_width = 48;
  int max_width_multiplier = 8;
  std::vector<int> dilation_rates = {2, 4, 8};
  Norm norm = Norm::instance;
  double leaky_slope = 0.2;
  Index disc_base_width = 64;

  /// Throws std::invalid_argument naming the first violated invariant.
  void validate() const;
  /// Channel width of encoder level `level` (0 = full resolution).
  Index width(int level) const;
  /// Number of stride-2 discriminator convs needed to reach a side of at most 4.
  int discriminator_layers() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Named learnable tensors, ordered by name.
template <typename Scalar>
class ParameterStore {
 public:
  using Map = std::map<std::string, Tensor<Scalar>>;

  void add(const std::string& name, Tensor<Scalar> value);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor<Scalar>& at(const std::string& name) const;
  Tensor<Scalar>& at(const std::string& name);

  std::size_t size() const { return params_.size(); }
  Index parameter_count() const;
  const std::string& init_scheme() const { return init_scheme_; }
  void set_init_scheme(std::string s) { init_scheme_ = std::move(s); }

  typename Map::const_iterator begin() const { return params_.begin(); }
  typename Map::const_iterator end() const { return params_.end(); }
  typename Map::iterator begin() { return params_.begin(); }
  typename Map::iterator end() { return params_.end(); }

  /// Same names and shapes, all zeros.
  ParameterStore zeros_like() const;

  template <typename Other>
  ParameterStore<Other> cast() const {
    ParameterStore<Other> out;
    for (const auto& [name, t] : params_) out.add(name, t.template cast<Other>());
    out.set_init_scheme(init_scheme_);
    return out;
  }

 private:
  Map params_;
  std::string init_scheme_;
};

/// Parameters of a store recorded as leaves on a tape, created on first use.
template <typename Scalar>
class Bound {
 public:
  Bound(ad::Tape<Scalar>& tape, const ParameterStore<Scalar>& store, bool trainable)
      : tape_(&tape), store_(&store), trainable_(trainable) {}

  ad::Var<Scalar> operator()(const std::string& name);
  bool has(const std::string& name) const { return store_->contains(name); }
  ad::Tape<Scalar>& tape() const { return *tape_; }
  /// d(root)/d(param) for every parameter in the store; zeros where none flowed.
  ParameterStore<Scalar> gradients() const;

 private:
  ad::Tape<Scalar>* tape_;
  const ParameterStore<Scalar>* store_;
  bool trainable_;
  std::map<std::string, ad::Var<Scalar>> vars_;
};

template <typename Scalar>
ParameterStore<Scalar> build_generator(const ModelConfig& cfg, std::uint64_t seed);

template <typename Scalar>
ParameterStore<Scalar> build_discriminator(const ModelConfig& cfg, std::uint64_t seed);

/// First stage: rough fill of the masked input [b, 4, h, w] -> [b, 3, h, w].
template <typename Scalar>
ad::Var<Scalar> coarse_forward(const ModelConfig& cfg, Bound<Scalar>& params,
                               const ad::Var<Scalar>& generator_input);

template <typename Scalar>
struct DamBlockResult {
  ad::Var<Scalar> out;
  ad::Var<Scalar> fakeness;
};

/// F = conv1x1([T, S]); M = sigmoid(conv1x1(F)); out = F + M * F.
/// `injected_fakeness` replaces M (bypassing the sigmoid) when given.
template <typename Scalar>
DamBlockResult<Scalar> dam_block_forward(
    Bound<Scalar>& params, const std::string& prefix, const ad::Var<Scalar>& decoder_feature,
    const ad::Var<Scalar>& skip_feature,
    const std::optional<Tensor<Scalar>>& injected_fakeness = std::nullopt);

template <typename Scalar>
struct DamResult {
  ad::Var<Scalar> final;
  /// Index j: side resolution / 2^j (j = 0 finest).
  std::array<ad::Var<Scalar>, kFakenessScales> fakeness;
};

/// Second stage on the coarse composite plus mask channel [b, 4, h, w].
template <typename Scalar>
DamResult<Scalar> dam_forward(const ModelConfig& cfg, Bound<Scalar>& params,
                              const ad::Var<Scalar>& composite_input);

template <typename Scalar>
struct GeneratorGraph {
  ad::Var<Scalar> coarse;
  ad::Var<Scalar> composite;
  ad::Var<Scalar> final;
  std::array<ad::Var<Scalar>, kFakenessScales> fakeness;
};

/// Both stages. The DAM stage sees coarse * m + known * (1 - m) with the mask.
template <typename Scalar>
GeneratorGraph<Scalar> generator_forward(const ModelConfig& cfg, Bound<Scalar>& params,
                                         const Tensor<Scalar>& generator_input);

/// One probability per batch item, shape [b, 1, 1, 1].
template <typename Scalar>
ad::Var<Scalar> discriminator_forward(const ModelConfig& cfg, Bound<Scalar>& params,
                                      const ad::Var<Scalar>& image);

template <typename Scalar>
struct GeneratorOutput {
  Tensor<Scalar> coarse;
  Tensor<Scalar> final;
  std::array<Tensor<Scalar>, kFakenessScales> fakeness;
};

/// Inference-only generator pass.
template <typename Scalar>
GeneratorOutput<Scalar> run_generator(const ModelConfig& cfg, const ParameterStore<Scalar>& params,
                                      const Tensor<Scalar>& generator_input);

/// Inference-only discriminator pass; returns b scores.
template <typename Scalar>
std::vector<Scalar> run_discriminator(const ModelConfig& cfg, const ParameterStore<Scalar>& params,
                                      const Tensor<Scalar>& image);

}  // namespace damgan::model
