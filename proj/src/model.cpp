#include "damgan/model.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace damgan::model {

void ModelConfig::validate() const {
  auto fail = [](const std::string& what) { throw std::invalid_argument("model config: " + what); };
  if (dam_levels != kFakenessScales) fail("dam_levels must equal 4");
  if (coarse_levels < 1) fail("coarse_levels must be positive");
  if (resolution <= 0) fail("resolution must be positive");
  if (resolution % (Index{1} << dam_levels) != 0) fail("resolution must be divisible by 2^dam_levels");
  if (resolution % (Index{1} << coarse_levels) != 0) fail("resolution must be divisible by 2^coarse_levels");
  if (base_width < 1) fail("base_width must be positive");
  if (max_width_multiplier < 1) fail("max_width_multiplier must be positive");
  if (disc_base_width < 1) fail("disc_base_width must be positive");
  if (dilation_rates.empty()) fail("dilation_rates must not be empty");
  for (int r : dilation_rates)
    if (r < 1) fail("dilation_rates must be positive");
  if (!(leaky_slope >= 0.0 && leaky_slope < 1.0)) fail("leaky_slope must lie in [0,1)");
}

Index ModelConfig::width(int level) const {
  const Index mult = std::min<Index>(Index{1} << level, max_width_multiplier);
  return base_width * mult;
}

int ModelConfig::discriminator_layers() const {
  int layers = 0;
  for (Index side = resolution; side > 4; side = (side + 1) / 2) ++layers;
  return layers;
}

template <typename Scalar>
void ParameterStore<Scalar>::add(const std::string& name, Tensor<Scalar> value) {
  if (!params_.emplace(name, std::move(value)).second) {
    throw std::invalid_argument("duplicate parameter name: " + name);
  }
}

template <typename Scalar>
const Tensor<Scalar>& ParameterStore<Scalar>::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

template <typename Scalar>
Tensor<Scalar>& ParameterStore<Scalar>::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter: " + name);
  return it->second;
}

template <typename Scalar>
Index ParameterStore<Scalar>::parameter_count() const {
  Index total = 0;
  for (const auto& [name, t] : params_) total += t.size();
  return total;
}

template <typename Scalar>
ParameterStore<Scalar> ParameterStore<Scalar>::zeros_like() const {
  ParameterStore out;
  for (const auto& [name, t] : params_) out.add(name, Tensor<Scalar>(t.shape()));
  out.init_scheme_ = init_scheme_;
  return out;
}

template <typename Scalar>
ad::Var<Scalar> Bound<Scalar>::operator()(const std::string& name) {
  auto it = vars_.find(name);
  if (it != vars_.end()) return it->second;
  ad::Var<Scalar> v = tape_->leaf(store_->at(name), trainable_);
  vars_.emplace(name, v);
  return v;
}

template <typename Scalar>
ParameterStore<Scalar> Bound<Scalar>::gradients() const {
  ParameterStore<Scalar> out;
  for (const auto& [name, t] : *store_) {
    auto it = vars_.find(name);
    out.add(name, it == vars_.end() ? Tensor<Scalar>(t.shape()) : tape_->gradient(it->second));
  }
  return out;
}

namespace {

constexpr const char* kInitScheme = "fan_in_normal";

/// Seeded fan-in-scaled normal initialization, applied in declaration order.
template <typename Scalar>
class Initializer {
 public:
  Initializer(ParameterStore<Scalar>& store, std::uint64_t seed, double slope)
      : store_(store), rng_(seed), hidden_gain_(2.0 / (1.0 + slope * slope)) {}

  /// Conv feeding an activation.
  void conv(const std::string& name, Index out, Index in, Index k, bool bias) {
    weights(name + ".w", {out, in, k, k}, hidden_gain_);
    if (bias) store_.add(name + ".b", Tensor<Scalar>({1, out, 1, 1}));
  }
  /// Conv feeding a sigmoid or the identity.
  void head(const std::string& name, Index out, Index in, Index k) {
    weights(name + ".w", {out, in, k, k}, 1.0);
    store_.add(name + ".b", Tensor<Scalar>({1, out, 1, 1}));
  }

 private:
  void weights(const std::string& name, const Shape& shape, double gain) {
    const double fan_in = double(shape.c * shape.h * shape.w);
    std::normal_distribution<double> dist(0.0, std::sqrt(gain / fan_in));
    Tensor<Scalar> w(shape);
    for (Index i = 0; i < w.size(); ++i) w[i] = Scalar(dist(rng_));
    store_.add(name, std::move(w));
  }

  ParameterStore<Scalar>& store_;
  std::mt19937_64 rng_;
  double hidden_gain_;
};

std::string level_name(const char* net, const char* part, int level) {
  return std::string(net) + "." + part + std::to_string(level);
}

template <typename Scalar>
void declare_down_level(Initializer<Scalar>& init, const std::string& prefix, Index in, Index out,
                        bool bias) {
  init.conv(prefix + ".conv", out, in, 3, bias);
  init.conv(prefix + ".res1", out, out, 3, bias);
  init.conv(prefix + ".res2", out, out, 3, bias);
}

}  // namespace

template <typename Scalar>
ParameterStore<Scalar> build_generator(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParameterStore<Scalar> store;
  store.set_init_scheme(kInitScheme);
  Initializer<Scalar> init(store, seed, cfg.leaky_slope);
  const bool bias = cfg.norm == Norm::none;

  init.conv("coarse.in", cfg.width(0), 4, 3, true);
  for (int k = 1; k <= cfg.coarse_levels; ++k) {
    declare_down_level(init, level_name("coarse", "down", k), cfg.width(k - 1), cfg.width(k), bias);
  }
  const Index mid = cfg.width(cfg.coarse_levels);
  for (std::size_t i = 0; i < cfg.dilation_rates.size(); ++i) {
    init.conv("coarse.mid" + std::to_string(i), mid, mid, 3, bias);
  }
  for (int k = cfg.coarse_levels; k >= 1; --k) {
    init.conv(level_name("coarse", "up", k), cfg.width(k - 1), cfg.width(k), 3, bias);
  }
  init.head("coarse.out", 3, cfg.width(0), 3);

  init.conv("dam.in", cfg.width(0), 4, 3, true);
  for (int k = 1; k < cfg.dam_levels; ++k) {
    declare_down_level(init, level_name("dam", "down", k), cfg.width(k - 1), cfg.width(k), bias);
  }
  init.conv("dam.bottleneck", cfg.width(cfg.dam_levels), cfg.width(cfg.dam_levels - 1), 3, true);
  for (int j = cfg.dam_levels - 1; j >= 0; --j) {
    const std::string p = level_name("dam", "dec", j);
    init.conv(p, cfg.width(j), cfg.width(j + 1), 3, bias);
    init.conv(level_name("dam", "block", j) + ".fuse", cfg.width(j), 2 * cfg.width(j), 1, true);
    init.head(level_name("dam", "block", j) + ".attn", 1, cfg.width(j), 1);
  }
  init.head("dam.out", 3, cfg.width(0), 3);
  return store;
}

template <typename Scalar>
ParameterStore<Scalar> build_discriminator(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  ParameterStore<Scalar> store;
  store.set_init_scheme(kInitScheme);
  Initializer<Scalar> init(store, seed, cfg.leaky_slope);
  Index in = 3;
  Index side = cfg.resolution;
  for (int k = 0; k < cfg.discriminator_layers(); ++k) {
    const Index out = cfg.disc_base_width * std::min<Index>(Index{1} << k, 8);
    init.conv(level_name("disc", "conv", k), out, in, 5, true);
    in = out;
    side = (side + 1) / 2;
  }
  init.head("disc.fc", 1, in * side * side, 1);
  return store;
}

namespace {

template <typename Scalar>
struct Layers {
  const ModelConfig& cfg;
  Bound<Scalar>& p;

  Scalar slope() const { return Scalar(cfg.leaky_slope); }

  ad::Var<Scalar> conv(const std::string& name, const ad::Var<Scalar>& x, ad::ConvOptions o) {
    std::optional<ad::Var<Scalar>> bias;
    if (p.has(name + ".b")) bias = p(name + ".b");
    return ad::conv2d(x, p(name + ".w"), bias, o);
  }

  ad::Var<Scalar> norm(const ad::Var<Scalar>& x) {
    return cfg.norm == Norm::instance ? ad::instance_norm(x) : x;
  }

  ad::Var<Scalar> act(const ad::Var<Scalar>& x) { return ad::leaky_relu(x, slope()); }

  /// conv -> norm -> leaky relu
  ad::Var<Scalar> block(const std::string& name, const ad::Var<Scalar>& x, ad::ConvOptions o) {
    return act(norm(conv(name, x, o)));
  }

  /// Stride-2 conv followed by a residual pair at the new scale.
  ad::Var<Scalar> down(const std::string& prefix, const ad::Var<Scalar>& x) {
    auto h = block(prefix + ".conv", x, {.stride = 2, .padding = 1});
    auto r = block(prefix + ".res1", h, {.padding = 1});
    r = norm(conv(prefix + ".res2", r, {.padding = 1}));
    return act(h + r);
  }

  ad::Var<Scalar> up(const std::string& name, const ad::Var<Scalar>& x) {
    return block(name, ad::upsample_nearest(x, 2), {.padding = 1});
  }
};

void require_input(const ModelConfig& cfg, const Shape& s, Index channels, const char* what) {
  if (s.c != channels || s.h != cfg.resolution || s.w != cfg.resolution || s.n < 1) {
    throw std::invalid_argument(std::string(what) + ": expected [b," + std::to_string(channels) +
                                "," + std::to_string(cfg.resolution) + "," +
                                std::to_string(cfg.resolution) + "], got " + to_string(s));
  }
}

}  // namespace

template <typename Scalar>
ad::Var<Scalar> coarse_forward(const ModelConfig& cfg, Bound<Scalar>& params,
                               const ad::Var<Scalar>& generator_input) {
  require_input(cfg, generator_input.shape(), 4, "coarse_forward");
  Layers<Scalar> l{cfg, params};
  auto h = l.act(l.conv("coarse.in", generator_input, {.padding = 1}));
  for (int k = 1; k <= cfg.coarse_levels; ++k) h = l.down(level_name("coarse", "down", k), h);
  for (std::size_t i = 0; i < cfg.dilation_rates.size(); ++i) {
    const Index r = cfg.dilation_rates[i];
    h = l.block("coarse.mid" + std::to_string(i), h, {.padding = r, .dilation = r});
  }
  for (int k = cfg.coarse_levels; k >= 1; --k) h = l.up(level_name("coarse", "up", k), h);
  return ad::sigmoid(l.conv("coarse.out", h, {.padding = 1}));
}

template <typename Scalar>
DamBlockResult<Scalar> dam_block_forward(Bound<Scalar>& params, const std::string& prefix,
                                         const ad::Var<Scalar>& decoder_feature,
                                         const ad::Var<Scalar>& skip_feature,
                                         const std::optional<Tensor<Scalar>>& injected_fakeness) {
  const Shape ts = decoder_feature.shape();
  const Shape ss = skip_feature.shape();
  if (ts.n != ss.n || ts.h != ss.h || ts.w != ss.w) {
    throw std::invalid_argument("dam_block_forward: decoder feature " + to_string(ts) +
                                " and skip feature " + to_string(ss) + " differ spatially");
  }
  auto conv1x1 = [&](const std::string& name, const ad::Var<Scalar>& x) {
    return ad::conv2d(x, params(name + ".w"), std::optional(params(name + ".b")), {});
  };
  auto fused = conv1x1(prefix + ".fuse", ad::concat_channels(decoder_feature, skip_feature));
  ad::Var<Scalar> fakeness;
  if (injected_fakeness) {
    require_same_shape(injected_fakeness->shape(), Shape{ts.n, 1, ts.h, ts.w}, "dam_block_forward");
    fakeness = params.tape().constant(*injected_fakeness);
  } else {
    fakeness = ad::sigmoid(conv1x1(prefix + ".attn", fused));
  }
  auto reweighted = ad::mul_channel_broadcast(fused, fakeness);
  return {fused + reweighted, fakeness};
}

template <typename Scalar>
DamResult<Scalar> dam_forward(const ModelConfig& cfg, Bound<Scalar>& params,
                              const ad::Var<Scalar>& composite_input) {
  require_input(cfg, composite_input.shape(), 4, "dam_forward");
  Layers<Scalar> l{cfg, params};
  std::vector<ad::Var<Scalar>> skips;
  skips.push_back(l.act(l.conv("dam.in", composite_input, {.padding = 1})));
  for (int k = 1; k < cfg.dam_levels; ++k) {
    skips.push_back(l.down(level_name("dam", "down", k), skips.back()));
  }
  auto h = l.act(l.conv("dam.bottleneck", skips.back(), {.stride = 2, .padding = 1}));
  DamResult<Scalar> result;
  for (int j = cfg.dam_levels - 1; j >= 0; --j) {
    auto decoded = l.up(level_name("dam", "dec", j), h);
    auto block = dam_block_forward(params, level_name("dam", "block", j), decoded,
                                   skips[static_cast<std::size_t>(j)]);
    result.fakeness[static_cast<std::size_t>(j)] = block.fakeness;
    h = block.out;
  }
  result.final = ad::sigmoid(l.conv("dam.out", h, {.padding = 1}));
  return result;
}

template <typename Scalar>
GeneratorGraph<Scalar> generator_forward(const ModelConfig& cfg, Bound<Scalar>& params,
                                         const Tensor<Scalar>& generator_input) {
  require_input(cfg, generator_input.shape(), 4, "generator_forward");
  ad::Tape<Scalar>& tape = params.tape();
  const Shape s = generator_input.shape();
  const Tensor<Scalar> mask = slice_channels(generator_input, 3, 1);
  Tensor<Scalar> hole({s.n, 3, s.h, s.w});
  Tensor<Scalar> known({s.n, 3, s.h, s.w});
  for (Index n = 0; n < s.n; ++n) {
    const auto m = mask.item(n).row(0).array();
    for (Index c = 0; c < 3; ++c) {
      hole.item(n).row(c) = m.matrix();
      known.item(n).row(c) = (generator_input.item(n).row(c).array() * (Scalar(1) - m)).matrix();
    }
  }
  GeneratorGraph<Scalar> g;
  g.coarse = coarse_forward(cfg, params, tape.constant(generator_input));
  g.composite = g.coarse * tape.constant(std::move(hole)) + tape.constant(std::move(known));
  auto dam = dam_forward(cfg, params, ad::concat_channels(g.composite, tape.constant(mask)));
  g.final = dam.final;
  g.fakeness = dam.fakeness;
  return g;
}

template <typename Scalar>
ad::Var<Scalar> discriminator_forward(const ModelConfig& cfg, Bound<Scalar>& params,
                                      const ad::Var<Scalar>& image) {
  require_input(cfg, image.shape(), 3, "discriminator_forward");
  Layers<Scalar> l{cfg, params};
  ad::Var<Scalar> h = image;
  for (int k = 0; k < cfg.discriminator_layers(); ++k) {
    h = l.act(l.conv(level_name("disc", "conv", k), h, {.stride = 2, .padding = 2}));
  }
  return ad::sigmoid(ad::linear(h, params("disc.fc.w"), params("disc.fc.b")));
}

template <typename Scalar>
GeneratorOutput<Scalar> run_generator(const ModelConfig& cfg, const ParameterStore<Scalar>& params,
                                      const Tensor<Scalar>& generator_input) {
  ad::Tape<Scalar> tape;
  Bound<Scalar> bound(tape, params, false);
  auto g = generator_forward(cfg, bound, generator_input);
  GeneratorOutput<Scalar> out{g.coarse.value(), g.final.value(), {}};
  for (int j = 0; j < kFakenessScales; ++j) out.fakeness[j] = g.fakeness[j].value();
  return out;
}

template <typename Scalar>
std::vector<Scalar> run_discriminator(const ModelConfig& cfg, const ParameterStore<Scalar>& params,
                                      const Tensor<Scalar>& image) {
  ad::Tape<Scalar> tape;
  Bound<Scalar> bound(tape, params, false);
  auto scores = discriminator_forward(cfg, bound, tape.constant(image));
  const auto& a = scores.value().array();
  return std::vector<Scalar>(a.data(), a.data() + a.size());
}

#define DAMGAN_INSTANTIATE_MODEL(S)                                                                \
  template class ParameterStore<S>;                                                                \
  template class Bound<S>;                                                                         \
  template ParameterStore<S> build_generator<S>(const ModelConfig&, std::uint64_t);                \
  template ParameterStore<S> build_discriminator<S>(const ModelConfig&, std::uint64_t);            \
  template ad::Var<S> coarse_forward(const ModelConfig&, Bound<S>&, const ad::Var<S>&);            \
  template DamBlockResult<S> dam_block_forward(Bound<S>&, const std::string&, const ad::Var<S>&,   \
                                               const ad::Var<S>&, const std::optional<Tensor<S>>&); \
  template DamResult<S> dam_forward(const ModelConfig&, Bound<S>&, const ad::Var<S>&);             \
  template GeneratorGraph<S> generator_forward(const ModelConfig&, Bound<S>&, const Tensor<S>&);   \
  template ad::Var<S> discriminator_forward(const ModelConfig&, Bound<S>&, const ad::Var<S>&);     \
  template GeneratorOutput<S> run_generator(const ModelConfig&, const ParameterStore<S>&,          \
                                            const Tensor<S>&);                                     \
  template std::vector<S> run_discriminator(const ModelConfig&, const ParameterStore<S>&,          \
                                            const Tensor<S>&);

DAMGAN_INSTANTIATE_MODEL(float)
DAMGAN_INSTANTIATE_MODEL(double)

}  // namespace damgan::model
