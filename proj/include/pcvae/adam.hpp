#pragma once

#include <cmath>
#include <vector>

#include "pcvae/params.hpp"
#include "pcvae/tensor.hpp"

namespace pcvae {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected ADAM state over a ParamStore, moments laid out in
/// parameter order.
struct AdamState {
  AdamConfig cfg;
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  AdamState() = default;

  AdamState(const ParamStore& params, AdamConfig c) : cfg(c) {
    m.reserve(params.count());
    v.reserve(params.count());
    for (std::size_t i = 0; i < params.count(); ++i) {
      Tensor z = params.value(i);
      z.v.assign(z.size(), 0.0);
      m.push_back(z);
      v.push_back(std::move(z));
    }
  }
};

/// One descent step on all parameters. grads must be parallel to the store.
inline void adam_step(ParamStore& params, const std::vector<Tensor>& grads,
                      AdamState& state) {
  if (grads.size() != params.count())
    throw DimensionError("adam_step: gradient count mismatch");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!grads[i].same_shape(params.value(i)))
      throw DimensionError("adam_step: gradient shape mismatch for " +
                           params.name(i));
    if (!grads[i].all_finite())
      throw NumericError("non-finite gradient for parameter " +
                         params.name(i));
  }
  state.step += 1;
  double c1 = 1.0 - std::pow(state.cfg.beta1, static_cast<double>(state.step));
  double c2 = 1.0 - std::pow(state.cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < grads.size(); ++i) {
    Tensor& p = params.value(i);
    Tensor& mi = state.m[i];
    Tensor& vi = state.v[i];
    const Tensor& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      mi.v[k] = state.cfg.beta1 * mi.v[k] + (1.0 - state.cfg.beta1) * g.v[k];
      vi.v[k] =
          state.cfg.beta2 * vi.v[k] + (1.0 - state.cfg.beta2) * g.v[k] * g.v[k];
      double mhat = mi.v[k] / c1;
      double vhat = vi.v[k] / c2;
      p.v[k] -= state.cfg.lr * mhat / (std::sqrt(vhat) + state.cfg.eps);
    }
  }
}

}  // namespace pcvae
