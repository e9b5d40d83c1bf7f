#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "pcvae/gaussian.hpp"
#include "pcvae/model.hpp"
#include "pcvae/nn.hpp"
#include "pcvae/params.hpp"

namespace pcvae {

/// Count of coordinates that had to be pulled off the unit-interval
/// boundary; test/debug aid.
inline std::size_t& pwl_clamp_events() {
  thread_local std::size_t count = 0;
  return count;
}

namespace detail {

inline double clamp_unit(double u) {
  const double eps = 1e-6;
  if (u < eps || u > 1.0 - eps) {
    ++pwl_clamp_events();
    return u < eps ? eps : 1.0 - eps;
  }
  return u;
}

}  // namespace detail

/// Piecewise-linear CDF coupling over the transformed coordinates.
/// u holds T coordinates in (0,1); probs holds T rows of `bins` bin
/// probabilities (each row positive, summing to 1). The map in every
/// coordinate is the CDF of the histogram with equal-width bins, so the
/// local slope in bin b is bins*q_b and the log-determinant is
/// sum_t log(bins * q_b(t)).
inline std::pair<Var, Var> pwl_coupling_forward(Tape& tape, Var u, Var probs,
                                                std::size_t bins) {
  const Tensor& tu = tape.val(u);
  const Tensor& tp = tape.val(probs);
  std::size_t dims = tu.size();
  if (tp.size() != dims * bins)
    throw DimensionError("pwl_coupling_forward: probs size " +
                         std::to_string(tp.size()) + " vs " +
                         std::to_string(dims * bins));
  std::vector<std::size_t> bin(dims);
  std::vector<double> uc(dims);
  Tensor out({dims});
  double logdet = 0.0;
  for (std::size_t t = 0; t < dims; ++t) {
    double ut = detail::clamp_unit(tu.v[t]);
    std::size_t b = std::min(static_cast<std::size_t>(ut * bins), bins - 1);
    const double* q = tp.v.data() + t * bins;
    double cum = 0.0;
    for (std::size_t k = 0; k < b; ++k) cum += q[k];
    out.v[t] = cum + (ut * bins - static_cast<double>(b)) * q[b];
    logdet += std::log(static_cast<double>(bins) * q[b]);
    bin[t] = b;
    uc[t] = ut;
  }
  if (!std::isfinite(logdet))
    throw NumericError("pwl_coupling_forward: non-finite log-det");
  Var out_var = tape.custom(
      std::move(out), "pwl_fwd", {u, probs},
      [u, probs, bins, bin, uc](Tape& t, Var o) {
        const Tensor& g = t.gref(o);
        const Tensor& tp = t.val(probs);
        const Tensor& tu = t.val(u);
        if (t.tracks_grad(u)) {
          Tensor& gu = t.gmut(u);
          for (std::size_t i = 0; i < bin.size(); ++i) {
            bool interior = tu.v[i] > 1e-6 && tu.v[i] < 1.0 - 1e-6;
            if (interior)
              gu.v[i] += g.v[i] * static_cast<double>(bins) *
                         tp.v[i * bins + bin[i]];
          }
        }
        if (t.tracks_grad(probs)) {
          Tensor& gp = t.gmut(probs);
          for (std::size_t i = 0; i < bin.size(); ++i) {
            for (std::size_t k = 0; k < bin[i]; ++k)
              gp.v[i * bins + k] += g.v[i];
            gp.v[i * bins + bin[i]] +=
                g.v[i] *
                (uc[i] * bins - static_cast<double>(bin[i]));
          }
        }
      });
  Var ld_var = tape.custom(
      Tensor::scalar(logdet), "pwl_fwd_logdet", {probs},
      [probs, bins, bin](Tape& t, Var o) {
        double g = t.gref(o).v[0];
        if (!t.tracks_grad(probs)) return;
        Tensor& gp = t.gmut(probs);
        const Tensor& tp = t.val(probs);
        for (std::size_t i = 0; i < bin.size(); ++i)
          gp.v[i * bins + bin[i]] += g / tp.v[i * bins + bin[i]];
      });
  return {out_var, ld_var};
}

/// Exact inverse via the per-bin linear solve; its log-det negates the
/// forward one for the matching bins.
inline std::pair<Var, Var> pwl_coupling_inverse(Tape& tape, Var up, Var probs,
                                                std::size_t bins) {
  const Tensor& tup = tape.val(up);
  const Tensor& tp = tape.val(probs);
  std::size_t dims = tup.size();
  if (tp.size() != dims * bins)
    throw DimensionError("pwl_coupling_inverse: probs size mismatch");
  std::vector<std::size_t> bin(dims);
  std::vector<double> upc(dims), cum_lo(dims);
  Tensor out({dims});
  double logdet = 0.0;
  for (std::size_t t = 0; t < dims; ++t) {
    double y = detail::clamp_unit(tup.v[t]);
    const double* q = tp.v.data() + t * bins;
    std::size_t b = 0;
    double cum = 0.0;
    while (b + 1 < bins && y >= cum + q[b]) {
      cum += q[b];
      ++b;
    }
    out.v[t] = (static_cast<double>(b) + (y - cum) / q[b]) /
               static_cast<double>(bins);
    logdet -= std::log(static_cast<double>(bins) * q[b]);
    bin[t] = b;
    upc[t] = y;
    cum_lo[t] = cum;
  }
  if (!std::isfinite(logdet))
    throw NumericError("pwl_coupling_inverse: non-finite log-det");
  Var out_var = tape.custom(
      std::move(out), "pwl_inv", {up, probs},
      [up, probs, bins, bin, upc, cum_lo](Tape& t, Var o) {
        const Tensor& g = t.gref(o);
        const Tensor& tp = t.val(probs);
        const Tensor& tup = t.val(up);
        double nb = static_cast<double>(bins);
        if (t.tracks_grad(up)) {
          Tensor& gu = t.gmut(up);
          for (std::size_t i = 0; i < bin.size(); ++i) {
            bool interior = tup.v[i] > 1e-6 && tup.v[i] < 1.0 - 1e-6;
            if (interior)
              gu.v[i] += g.v[i] / (nb * tp.v[i * bins + bin[i]]);
          }
        }
        if (t.tracks_grad(probs)) {
          Tensor& gp = t.gmut(probs);
          for (std::size_t i = 0; i < bin.size(); ++i) {
            double qb = tp.v[i * bins + bin[i]];
            for (std::size_t k = 0; k < bin[i]; ++k)
              gp.v[i * bins + k] -= g.v[i] / (nb * qb);
            gp.v[i * bins + bin[i]] -=
                g.v[i] * (upc[i] - cum_lo[i]) / (nb * qb * qb);
          }
        }
      });
  Var ld_var = tape.custom(
      Tensor::scalar(logdet), "pwl_inv_logdet", {probs},
      [probs, bins, bin](Tape& t, Var o) {
        double g = t.gref(o).v[0];
        if (!t.tracks_grad(probs)) return;
        Tensor& gp = t.gmut(probs);
        const Tensor& tp = t.val(probs);
        for (std::size_t i = 0; i < bin.size(); ++i)
          gp.v[i * bins + bin[i]] -= g / tp.v[i * bins + bin[i]];
      });
  return {out_var, ld_var};
}

/// Flow posterior handle on a tape: diagonal-Gaussian base, sigmoid/logit
/// boundary bijections and the coupling stack conditioned on `context`.
struct FlowPosterior {
  GaussianVars base;
  Var context;
  FlowSpec spec;
  std::string prefix = "flow";
};

struct FlowSample {
  Var z;
  Var log_q;
};

namespace detail {

/// Counts boundary hits, then clamps on the tape.
inline Var clamp_unit_var(Tape& tape, Var u) {
  const Tensor& tu = tape.val(u);
  for (double e : tu.v)
    if (e < 1e-6 || e > 1.0 - 1e-6) ++pwl_clamp_events();
  return tape.clamp(u, 1e-6, 1.0 - 1e-6);
}

/// sum_j log(u_j (1 - u_j)) — the sigmoid Jacobian in log form.
inline Var log_unit_jacobian(Tape& tape, Var u) {
  return tape.sum(tape.log(u * tape.affine(u, -1.0, 1.0)));
}

inline Var conditioner_probs(Bound& bound, const FlowPosterior& fp,
                             std::size_t layer, Var u,
                             const std::vector<std::size_t>& identity_idx) {
  Tape& tape = bound.tape();
  Var id_part = tape.gather(u, identity_idx);
  Var cond_in = fp.spec.context_dim > 0 ? tape.concat(id_part, fp.context)
                                        : id_part;
  Var logits =
      mlp_forward(bound, fp.prefix + ".c" + std::to_string(layer),
                  flow_conditioner_spec(fp.spec, layer), cond_in);
  return tape.softmax_groups(logits, fp.spec.bins);
}

}  // namespace detail

/// Draws z and returns its exact log density under the flow. The sample
/// path is base reparameterization -> sigmoid -> couplings -> logit, with
/// every Jacobian term folded into log_q.
inline FlowSample flow_sample_and_logprob(Bound& bound,
                                          const FlowPosterior& fp,
                                          const Tensor& noise) {
  Tape& tape = bound.tape();
  Var v = reparam_sample(tape, fp.base, noise);
  Var log_q = gaussian_log_density(tape, v, fp.base);
  if (!fp.spec.squash) {
    if (fp.spec.layers != 0)
      throw ContractError("flow without boundary bijections cannot carry "
                          "coupling layers");
    return {v, log_q};
  }
  Var u = detail::clamp_unit_var(tape, tape.sigmoid(v));
  log_q = log_q - detail::log_unit_jacobian(tape, u);
  std::size_t K = fp.spec.latent_dim;
  for (std::size_t l = 0; l < fp.spec.layers; ++l) {
    std::vector<std::size_t> id_idx, tr_idx;
    coupling_split(K, l, id_idx, tr_idx);
    Var probs = detail::conditioner_probs(bound, fp, l, u, id_idx);
    auto [u_tr, logdet] =
        pwl_coupling_forward(tape, tape.gather(u, tr_idx), probs,
                             fp.spec.bins);
    u = tape.scatter_pair(tape.gather(u, id_idx), id_idx, u_tr, tr_idx, K);
    log_q = log_q - logdet;
  }
  Var uc = detail::clamp_unit_var(tape, u);
  Var z = tape.log(uc) - tape.log(tape.affine(uc, -1.0, 1.0));
  log_q = log_q + detail::log_unit_jacobian(tape, uc);
  return {z, log_q};
}

/// Log density of an arbitrary point under the flow, via the inverse path.
/// Evaluating this at a point returned by flow_sample_and_logprob matches
/// the sampled log_q to high accuracy.
inline Var flow_logprob(Bound& bound, const FlowPosterior& fp, Var z) {
  Tape& tape = bound.tape();
  if (!fp.spec.squash) return gaussian_log_density(tape, z, fp.base);
  Var u = detail::clamp_unit_var(tape, tape.sigmoid(z));
  Var log_q = detail::log_unit_jacobian(tape, u);
  std::size_t K = fp.spec.latent_dim;
  for (std::size_t l = fp.spec.layers; l-- > 0;) {
    std::vector<std::size_t> id_idx, tr_idx;
    coupling_split(K, l, id_idx, tr_idx);
    Var probs = detail::conditioner_probs(bound, fp, l, u, id_idx);
    auto [u_tr, logdet] =
        pwl_coupling_inverse(tape, tape.gather(u, tr_idx), probs,
                             fp.spec.bins);
    u = tape.scatter_pair(tape.gather(u, id_idx), id_idx, u_tr, tr_idx, K);
    log_q = log_q + logdet;
  }
  Var uc = detail::clamp_unit_var(tape, u);
  Var v = tape.log(uc) - tape.log(tape.affine(uc, -1.0, 1.0));
  log_q = log_q - detail::log_unit_jacobian(tape, uc);
  return log_q + gaussian_log_density(tape, v, fp.base);
}

/// Builds the flow posterior handle from an encoded row.
inline FlowPosterior flow_posterior(const Model& model, const Encoded& enc) {
  FlowPosterior fp;
  fp.base = enc.base;
  fp.context = enc.context;
  fp.spec = model.flow;
  return fp;
}

}  // namespace pcvae
