#pragma once

#include "damgan/model.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace damgan::optim {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename Scalar>
struct AdamState {
  model::ParameterStore<Scalar> m;
  model::ParameterStore<Scalar> v;
  std::int64_t t = 0;

  static AdamState like(const model::ParameterStore<Scalar>& params) {
    return {params.zeros_like(), params.zeros_like(), 0};
  }
};

/// One bias-corrected Adam update of every parameter in `params`.
template <typename Scalar>
void adam_step(model::ParameterStore<Scalar>& params, const model::ParameterStore<Scalar>& grads,
               AdamState<Scalar>& state, const AdamConfig& cfg) {
  if (grads.size() != params.size() || state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter, gradient and moment sets differ");
  }
  ++state.t;
  const Scalar b1 = Scalar(cfg.beta1);
  const Scalar b2 = Scalar(cfg.beta2);
  const Scalar c1 = Scalar(1.0 - std::pow(cfg.beta1, double(state.t)));
  const Scalar c2 = Scalar(1.0 - std::pow(cfg.beta2, double(state.t)));
  const Scalar lr = Scalar(cfg.lr);
  const Scalar eps = Scalar(cfg.eps);
  for (auto& [name, p] : params) {
    const auto& g = grads.at(name).array();
    auto& m = state.m.at(name).array();
    auto& v = state.v.at(name).array();
    m = b1 * m + (Scalar(1) - b1) * g;
    v = b2 * v + (Scalar(1) - b2) * g.square();
    p.array() -= lr * (m / c1) / ((v / c2).sqrt() + eps);
  }
}

}  // namespace damgan::optim
