#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pcvae/dataio.hpp"
#include "pcvae/gaussian.hpp"
#include "pcvae/nn.hpp"
#include "pcvae/params.hpp"
#include "pcvae/rng.hpp"

namespace pcvae {

enum class ModelKind { Zi, MaskZi, Pnp, Flow, Miwae, NotMiwae, FlowMnar };

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "zi") return ModelKind::Zi;
  if (s == "mask_zi") return ModelKind::MaskZi;
  if (s == "pnp") return ModelKind::Pnp;
  if (s == "flow") return ModelKind::Flow;
  if (s == "miwae") return ModelKind::Miwae;
  if (s == "not_miwae") return ModelKind::NotMiwae;
  if (s == "flow_mnar") return ModelKind::FlowMnar;
  throw ConfigError("unknown model kind: " + s);
}

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Zi: return "zi";
    case ModelKind::MaskZi: return "mask_zi";
    case ModelKind::Pnp: return "pnp";
    case ModelKind::Flow: return "flow";
    case ModelKind::Miwae: return "miwae";
    case ModelKind::NotMiwae: return "not_miwae";
    case ModelKind::FlowMnar: return "flow_mnar";
  }
  return "zi";
}

/// Families whose approximate posterior is a transformed base distribution.
inline bool is_flow_family(ModelKind k) {
  return k == ModelKind::Flow || k == ModelKind::FlowMnar;
}

/// Importance-weighted bound families.
inline bool is_iw_family(ModelKind k) {
  return k == ModelKind::Miwae || k == ModelKind::NotMiwae;
}

/// Families that model the missingness mask explicitly.
inline bool has_mask_head(ModelKind k) {
  return k == ModelKind::NotMiwae || k == ModelKind::FlowMnar;
}

enum class EncoderKind { Zi, MaskZi, Pnp, FlowInput };

inline EncoderKind encoder_kind_for(ModelKind k) {
  switch (k) {
    case ModelKind::Zi:
    case ModelKind::Miwae:
    case ModelKind::NotMiwae: return EncoderKind::Zi;
    case ModelKind::MaskZi: return EncoderKind::MaskZi;
    case ModelKind::Pnp: return EncoderKind::Pnp;
    case ModelKind::Flow:
    case ModelKind::FlowMnar: return EncoderKind::FlowInput;
  }
  return EncoderKind::Zi;
}

/// Architecture knobs. Encoder/decoder widths follow the usual 100-wide
/// stacks; the pnp h/g widths and the flow conditioner width are not pinned
/// by the reference setups and stay configurable.
struct ArchConfig {
  std::size_t latent_dim = 10;
  std::vector<std::size_t> enc_hidden{100, 100, 100};
  std::vector<std::size_t> dec_hidden{100, 100, 100, 100};
  Activation act = Activation::Elu;
  std::size_t embed_dim = 20;
  std::size_t pnp_h_width = 100;
  std::vector<std::size_t> pnp_g_hidden{100, 100};
  std::size_t flow_layers = 4;
  std::size_t flow_bins = 10;
  std::size_t flow_cond_hidden = 64;
};

struct EncoderSpec {
  EncoderKind kind = EncoderKind::Zi;
  std::size_t data_dim = 0;
  std::size_t latent_dim = 0;
  std::vector<std::size_t> hidden;
  Activation act = Activation::Elu;
  std::size_t embed_dim = 0;           // pnp only
  std::size_t h_width = 0;             // pnp only
  std::vector<std::size_t> g_hidden;   // pnp only

  std::size_t input_width() const {
    switch (kind) {
      case EncoderKind::Zi: return data_dim;
      case EncoderKind::MaskZi:
      case EncoderKind::FlowInput: return 2 * data_dim;
      case EncoderKind::Pnp: return embed_dim;
    }
    return data_dim;
  }

  MlpSpec trunk() const {
    return MlpSpec::dense(input_width(), hidden, 2 * latent_dim, act);
  }
  MlpSpec pnp_h() const {
    return MlpSpec::dense(embed_dim, {}, h_width, act, act);
  }
  MlpSpec pnp_g() const {
    return MlpSpec::dense(h_width, g_hidden, 2 * latent_dim, act);
  }
};

/// Gaussian head over the features: means squashed to (0,1) by a sigmoid,
/// log-variances clamped like everywhere else.
struct DecoderSpec {
  std::size_t latent_dim = 0;
  std::size_t data_dim = 0;
  std::vector<std::size_t> hidden;
  Activation act = Activation::Elu;

  MlpSpec net() const {
    return MlpSpec::dense(latent_dim, hidden, 2 * data_dim, act);
  }
};

struct FlowSpec {
  std::size_t layers = 4;
  std::size_t bins = 10;
  std::size_t cond_hidden = 64;
  std::size_t context_dim = 0;
  std::size_t latent_dim = 0;
  bool squash = true;
};

/// Identity/transformed alternation for coupling layers. Even layers
/// transform the odd coordinates and vice versa.
inline void coupling_split(std::size_t latent_dim, std::size_t layer,
                           std::vector<std::size_t>& identity_idx,
                           std::vector<std::size_t>& transformed_idx) {
  identity_idx.clear();
  transformed_idx.clear();
  for (std::size_t j = 0; j < latent_dim; ++j) {
    if ((j + layer) % 2 == 0)
      identity_idx.push_back(j);
    else
      transformed_idx.push_back(j);
  }
}

inline MlpSpec flow_conditioner_spec(const FlowSpec& spec, std::size_t layer) {
  std::vector<std::size_t> id_idx, tr_idx;
  coupling_split(spec.latent_dim, layer, id_idx, tr_idx);
  return MlpSpec::dense(id_idx.size() + spec.context_dim, {spec.cond_hidden},
                        tr_idx.size() * spec.bins, Activation::Elu);
}

/// A trained (or initialized) model: architecture, parameters and the data
/// scaling it was fitted with.
struct Model {
  ModelKind kind = ModelKind::Zi;
  EncoderSpec enc;
  DecoderSpec dec;
  FlowSpec flow;
  ParamStore params;
  ScaleInfo scale;

  std::size_t data_dim() const { return enc.data_dim; }
  std::size_t latent_dim() const { return enc.latent_dim; }

  static Model create(ModelKind kind, std::size_t data_dim,
                      const ArchConfig& arch, Rng& rng,
                      const std::vector<double>& column_means = {}) {
    Model m;
    m.kind = kind;
    m.enc.kind = encoder_kind_for(kind);
    m.enc.data_dim = data_dim;
    m.enc.latent_dim = arch.latent_dim;
    m.enc.hidden = arch.enc_hidden;
    m.enc.act = arch.act;
    m.enc.embed_dim = arch.embed_dim;
    m.enc.h_width = arch.pnp_h_width;
    m.enc.g_hidden = arch.pnp_g_hidden;
    m.dec.latent_dim = arch.latent_dim;
    m.dec.data_dim = data_dim;
    m.dec.hidden = arch.dec_hidden;
    m.dec.act = arch.act;
    m.flow.layers = arch.flow_layers;
    m.flow.bins = arch.flow_bins;
    m.flow.cond_hidden = arch.flow_cond_hidden;
    m.flow.latent_dim = arch.latent_dim;
    m.flow.context_dim = 2 * data_dim;
    m.flow.squash = true;
    m.init_params(rng, column_means);
    return m;
  }

  void init_params(Rng& rng, const std::vector<double>& column_means) {
    if (enc.kind == EncoderKind::Pnp) {
      Tensor embed({enc.data_dim, enc.embed_dim});
      double bound =
          std::sqrt(6.0 / static_cast<double>(1 + enc.embed_dim));
      for (double& e : embed.v) e = rng.uniform(-bound, bound);
      params.add("enc.embed", embed);
      init_mlp_params(params, "enc.h", enc.pnp_h(), rng);
      init_mlp_params(params, "enc.g", enc.pnp_g(), rng);
    } else {
      init_mlp_params(params, "enc", enc.trunk(), rng);
    }
    init_mlp_params(params, "dec", dec.net(), rng);
    if (is_flow_family(kind))
      for (std::size_t l = 0; l < flow.layers; ++l)
        init_mlp_params(params, "flow.c" + std::to_string(l),
                        flow_conditioner_spec(flow, l), rng);
    if (has_mask_head(kind)) {
      params.add("mask.a", Tensor::full({enc.data_dim}, 10.0));
      Tensor b({enc.data_dim});
      for (std::size_t j = 0; j < enc.data_dim; ++j)
        b.v[j] = j < column_means.size() ? column_means[j] : 0.5;
      params.add("mask.b", b);
    }
  }
};

/// Posterior parameters plus the raw encoder input, which doubles as the
/// flow conditioner context.
struct Encoded {
  GaussianVars base;
  Var context;
};

namespace detail {

inline Tensor zero_imputed(const Tensor& x, const Tensor& mask) {
  Tensor out = x;
  for (std::size_t j = 0; j < out.size(); ++j) out.v[j] *= mask.v[j];
  return out;
}

inline GaussianVars split_gaussian_head(Tape& tape, Var raw, std::size_t dim) {
  std::vector<std::size_t> mean_idx(dim), lv_idx(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    mean_idx[j] = j;
    lv_idx[j] = dim + j;
  }
  Var mean = tape.gather(raw, mean_idx);
  Var lv = tape.clamp(tape.gather(raw, lv_idx), kLogVarMin, kLogVarMax);
  return {mean, lv};
}

}  // namespace detail

/// Maps a partially observed row to the posterior parameters. Values at
/// masked cells are never read: the input is formed as x*mask (plus the
/// mask itself where the family uses it).
inline Encoded encode(Bound& bound, const Model& model, const Tensor& x_row,
                      const Tensor& mask_row) {
  Tape& tape = bound.tape();
  const EncoderSpec& spec = model.enc;
  if (x_row.size() != spec.data_dim || mask_row.size() != spec.data_dim)
    throw DimensionError("encode: row width " + std::to_string(x_row.size()) +
                         " vs data dim " + std::to_string(spec.data_dim));
  if (spec.kind == EncoderKind::Pnp) {
    std::vector<std::size_t> observed;
    for (std::size_t j = 0; j < spec.data_dim; ++j)
      if (mask_row.v[j] != 0.0) observed.push_back(j);
    std::sort(observed.begin(), observed.end());
    Var pooled = tape.constant(Tensor({spec.h_width}));
    Var embed = bound("enc.embed");
    for (std::size_t j : observed) {
      std::vector<std::size_t> row_idx(spec.embed_dim);
      for (std::size_t k = 0; k < spec.embed_dim; ++k)
        row_idx[k] = j * spec.embed_dim + k;
      Var e_j = tape.gather(embed, row_idx);
      Var s_j = tape.affine(e_j, x_row.v[j], 0.0);
      pooled = pooled + mlp_forward(bound, "enc.h", spec.pnp_h(), s_j);
    }
    Var raw = mlp_forward(bound, "enc.g", spec.pnp_g(), pooled);
    return {detail::split_gaussian_head(tape, raw, spec.latent_dim), Var{}};
  }
  Tensor masked = detail::zero_imputed(x_row, mask_row);
  Tensor input;
  if (spec.kind == EncoderKind::Zi) {
    input = masked;
  } else {
    input = Tensor({2 * spec.data_dim});
    for (std::size_t j = 0; j < spec.data_dim; ++j) {
      input.v[j] = masked.v[j];
      input.v[spec.data_dim + j] = mask_row.v[j];
    }
  }
  Var in_var = tape.constant(input);
  Var raw = mlp_forward(bound, "enc", spec.trunk(), in_var);
  return {detail::split_gaussian_head(tape, raw, spec.latent_dim), in_var};
}

/// Decodes a latent point to the per-feature Gaussian.
inline GaussianVars decode(Bound& bound, const Model& model, Var z) {
  Tape& tape = bound.tape();
  if (tape.val(z).size() != model.dec.latent_dim)
    throw DimensionError("decode: latent width " +
                         std::to_string(tape.val(z).size()) + " vs " +
                         std::to_string(model.dec.latent_dim));
  Var raw = mlp_forward(bound, "dec", model.dec.net(), z);
  std::size_t d = model.dec.data_dim;
  std::vector<std::size_t> mean_idx(d), lv_idx(d);
  for (std::size_t j = 0; j < d; ++j) {
    mean_idx[j] = j;
    lv_idx[j] = d + j;
  }
  Var mean = tape.sigmoid(tape.gather(raw, mean_idx));
  Var lv = tape.clamp(tape.gather(raw, lv_idx), kLogVarMin, kLogVarMax);
  return {mean, lv};
}

/// Sum of per-feature log densities over observed cells only; exactly 0 for
/// an empty mask.
inline Var masked_log_likelihood(Tape& tape, const GaussianVars& dist,
                                 const Tensor& x_row, const Tensor& mask_row) {
  return weighted_gaussian_log_density(tape, x_row, mask_row, dist);
}

/// Self-masking head: per-feature observation probability
/// sigmoid(a_j * (xhat_j - b_j)) on the completed sample.
inline Var mask_probabilities(Bound& bound, const Model& model, Var xhat) {
  Tape& tape = bound.tape();
  Var a = bound("mask.a");
  Var b = bound("mask.b");
  return tape.sigmoid(a * (xhat - b));
}

/// Observed cells kept, missing cells taken from the decoder mean.
inline Var complete_sample(Tape& tape, const Tensor& x_row,
                           const Tensor& mask_row, const GaussianVars& dist) {
  Tensor inv = mask_row;
  for (double& e : inv.v) e = 1.0 - e;
  Var from_dec = dist.mean * tape.constant(inv);
  return tape.constant(detail::zero_imputed(x_row, mask_row)) + from_dec;
}

}  // namespace pcvae
