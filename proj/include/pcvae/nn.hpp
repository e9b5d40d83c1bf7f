#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "pcvae/autodiff.hpp"
#include "pcvae/params.hpp"
#include "pcvae/rng.hpp"
#include "pcvae/tensor.hpp"

namespace pcvae {

enum class Activation { Identity, Relu, Elu, Sigmoid };

inline Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::Relu;
  if (s == "elu") return Activation::Elu;
  if (s == "sigmoid") return Activation::Sigmoid;
  throw ConfigError("unknown activation: " + s);
}

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Relu: return "relu";
    case Activation::Elu: return "elu";
    case Activation::Sigmoid: return "sigmoid";
  }
  return "identity";
}

inline Var apply_activation(Tape& tape, Var x, Activation a) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Relu: return tape.relu(x);
    case Activation::Elu: return tape.elu(x);
    case Activation::Sigmoid: return tape.sigmoid(x);
  }
  return x;
}

struct LayerSpec {
  std::size_t in = 0;
  std::size_t out = 0;
  Activation act = Activation::Identity;
};

/// Fully connected network: widths plus one hidden activation, identity
/// output unless stated otherwise.
struct MlpSpec {
  std::vector<LayerSpec> layers;

  static MlpSpec dense(std::size_t in, const std::vector<std::size_t>& hidden,
                       std::size_t out, Activation hidden_act,
                       Activation out_act = Activation::Identity) {
    MlpSpec spec;
    std::size_t prev = in;
    for (std::size_t h : hidden) {
      spec.layers.push_back({prev, h, hidden_act});
      prev = h;
    }
    spec.layers.push_back({prev, out, out_act});
    return spec;
  }

  std::size_t in_dim() const { return layers.front().in; }
  std::size_t out_dim() const { return layers.back().out; }
};

/// Glorot-uniform weights, zero biases.
inline Tensor glorot_uniform(std::size_t out, std::size_t in, Rng& rng) {
  double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  Tensor w({out, in});
  for (double& e : w.v) e = rng.uniform(-bound, bound);
  return w;
}

inline void init_mlp_params(ParamStore& params, const std::string& prefix,
                            const MlpSpec& spec, Rng& rng) {
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    params.add(prefix + ".w" + std::to_string(i),
               glorot_uniform(l.out, l.in, rng));
    params.add(prefix + ".b" + std::to_string(i), Tensor({l.out}));
  }
}

/// Runs the network on the tape. Shape mismatches report the offending
/// layer index.
inline Var mlp_forward(Bound& bound, const std::string& prefix,
                       const MlpSpec& spec, Var input) {
  Tape& tape = bound.tape();
  Var h = input;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const LayerSpec& l = spec.layers[i];
    if (tape.val(h).size() != l.in)
      throw DimensionError(prefix + " layer " + std::to_string(i) +
                           ": expected input width " + std::to_string(l.in) +
                           ", got " + std::to_string(tape.val(h).size()));
    Var w = bound(prefix + ".w" + std::to_string(i));
    Var b = bound(prefix + ".b" + std::to_string(i));
    h = apply_activation(tape, tape.matvec(w, h) + b, l.act);
  }
  return h;
}

}  // namespace pcvae
