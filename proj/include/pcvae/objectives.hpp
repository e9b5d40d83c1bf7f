#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pcvae/flows.hpp"
#include "pcvae/gaussian.hpp"
#include "pcvae/model.hpp"

namespace pcvae {

/// A loss value with its named pieces, all in nats. The total always
/// reconstructs exactly from the parts under the composition rule of the
/// loss that produced it.
struct LossBreakdown {
  double total = 0.0;
  std::map<std::string, double> components;

  double part(const std::string& key) const {
    auto it = components.find(key);
    return it == components.end() ? 0.0 : it->second;
  }
};

/// Tape-level counterpart; values() reads the computed numbers off the tape.
struct LossVars {
  Var total;
  std::vector<std::pair<std::string, Var>> parts;

  void set(const std::string& key, Var v) { parts.emplace_back(key, v); }

  LossBreakdown values() const {
    LossBreakdown out;
    out.total = total.tape->val(total).item();
    for (const auto& [key, var] : parts)
      out.components[key] = var.tape->val(var).item();
    return out;
  }
};

inline GaussianVars standard_normal_vars(Tape& tape, std::size_t dim) {
  return {tape.constant(Tensor({dim})), tape.constant(Tensor({dim}))};
}

/// Encoder output wrapped as either a Gaussian or a flow posterior.
struct Posterior {
  bool flow = false;
  GaussianVars gauss;  // the base when flow == true
  FlowPosterior fp;
};

inline Posterior posterior_of(Bound& bound, const Model& model,
                              const Tensor& x_row, const Tensor& mask_row) {
  Encoded enc = encode(bound, model, x_row, mask_row);
  Posterior post;
  post.gauss = enc.base;
  if (is_flow_family(model.kind)) {
    post.flow = true;
    post.fp = flow_posterior(model, enc);
  }
  return post;
}

struct Latent {
  Var z;
  Var log_q;
};

inline Latent draw_latent(Bound& bound, const Posterior& post,
                          const Tensor& noise) {
  Tape& tape = bound.tape();
  if (post.flow) {
    FlowSample s = flow_sample_and_logprob(bound, post.fp, noise);
    return {s.z, s.log_q};
  }
  Var z = reparam_sample(tape, post.gauss, noise);
  return {z, gaussian_log_density(tape, z, post.gauss)};
}

/// Cells observed under Q but hidden under P. Rejects P not a subset of Q.
inline Tensor pbar_mask(const Tensor& qmask, const Tensor& pmask) {
  require_same_shape(qmask, pmask, "pbar_mask");
  Tensor out = qmask;
  for (std::size_t j = 0; j < out.size(); ++j) {
    if (pmask.v[j] == 1.0 && qmask.v[j] == 0.0)
      throw ContractError("P observes a cell hidden under Q");
    out.v[j] = qmask.v[j] * (1.0 - pmask.v[j]);
  }
  return out;
}

/// log( (1/M) sum_k exp(w_k) ) with a detached max shift. At M = 1 the
/// result equals w_0 exactly.
inline Var log_mean_exp(Tape& tape, const std::vector<Var>& ws) {
  if (ws.empty()) throw ContractError("log_mean_exp: no terms");
  double c = tape.val(ws[0]).item();
  for (Var w : ws) c = std::max(c, tape.val(w).item());
  Var acc = tape.exp(tape.affine(ws[0], 1.0, -c));
  for (std::size_t k = 1; k < ws.size(); ++k)
    acc = acc + tape.exp(tape.affine(ws[k], 1.0, -c));
  Var mean = tape.affine(acc, 1.0 / static_cast<double>(ws.size()), 0.0);
  return tape.affine(tape.log(mean), 1.0, c);
}

/// Sampled KL between two flow posteriors: the average log-likelihood
/// ratio over draws from q_Q. Both densities go through the same inverse
/// path, so identical posteriors give exactly zero.
inline Var flow_kl_estimate(Bound& bound, const FlowPosterior& q_Q,
                            const FlowPosterior& q_P,
                            const std::vector<Tensor>& noises) {
  if (noises.empty()) throw ContractError("flow_kl_estimate: M must be >= 1");
  Tape& tape = bound.tape();
  Var acc;
  for (const Tensor& noise : noises) {
    FlowSample s = flow_sample_and_logprob(bound, q_Q, noise);
    Var ratio = flow_logprob(bound, q_Q, s.z) - flow_logprob(bound, q_P, s.z);
    acc = acc.valid() ? acc + ratio : ratio;
  }
  return tape.affine(acc, 1.0 / static_cast<double>(noises.size()), 0.0);
}

namespace detail {

struct PartialTerm {
  Var value;
  Posterior post;
  Var z_first;
  GaussianVars dist_first;  // decoder output for z_first
};

/// The model family's per-row objective for one view (observation mask):
/// closed-KL ELBO for Gaussian encoders, single-sample ELBO for flows
/// (plus the mask term for the joint MNAR flow), importance-weighted bound
/// for the IW families (plus the self-masking term when present).
inline PartialTerm partial_objective(Bound& bound, const Model& model,
                                     const Tensor& x_row, const Tensor& mask,
                                     const std::vector<Tensor>& noises) {
  if (noises.empty())
    throw ContractError("partial_objective: at least one noise draw needed");
  Tape& tape = bound.tape();
  PartialTerm term;
  term.post = posterior_of(bound, model, x_row, mask);
  if (is_iw_family(model.kind)) {
    std::vector<Var> ws;
    ws.reserve(noises.size());
    for (std::size_t k = 0; k < noises.size(); ++k) {
      Latent lat = draw_latent(bound, term.post, noises[k]);
      GaussianVars dist = decode(bound, model, lat.z);
      Var loglik = masked_log_likelihood(tape, dist, x_row, mask);
      Var prior = gaussian_log_density(
          tape, lat.z, standard_normal_vars(tape, model.latent_dim()));
      Var w = loglik + prior - lat.log_q;
      if (has_mask_head(model.kind)) {
        Var pi = mask_probabilities(bound, model,
                                    complete_sample(tape, x_row, mask, dist));
        w = w + bernoulli_log_mass(tape, mask, pi);
      }
      ws.push_back(w);
      if (k == 0) {
        term.z_first = lat.z;
        term.dist_first = dist;
      }
    }
    term.value = log_mean_exp(tape, ws);
    return term;
  }
  Latent lat = draw_latent(bound, term.post, noises.front());
  term.z_first = lat.z;
  term.dist_first = decode(bound, model, lat.z);
  Var loglik = masked_log_likelihood(tape, term.dist_first, x_row, mask);
  if (term.post.flow) {
    Var prior = gaussian_log_density(
        tape, lat.z, standard_normal_vars(tape, model.latent_dim()));
    term.value = loglik + prior - lat.log_q;
  } else {
    term.value = loglik - kl_to_standard_normal(tape, term.post.gauss);
  }
  if (has_mask_head(model.kind)) {
    Var pi = mask_probabilities(
        bound, model, complete_sample(tape, x_row, mask, term.dist_first));
    term.value = term.value + bernoulli_log_mass(tape, mask, pi);
  }
  return term;
}

}  // namespace detail

/// Partial ELBO for one row: masked reconstruction term minus the prior
/// KL. Gaussian families use the closed-form KL; flow families the
/// single-sample log-ratio, since their KL has no closed form.
inline LossVars elbo_partial(Bound& bound, const Model& model,
                             const Tensor& x_row, const Tensor& qmask,
                             const Tensor& noise) {
  Tape& tape = bound.tape();
  Posterior post = posterior_of(bound, model, x_row, qmask);
  Latent lat = draw_latent(bound, post, noise);
  GaussianVars dist = decode(bound, model, lat.z);
  Var loglik = masked_log_likelihood(tape, dist, x_row, qmask);
  LossVars out;
  if (post.flow) {
    Var prior = gaussian_log_density(
        tape, lat.z, standard_normal_vars(tape, model.latent_dim()));
    out.total = loglik + prior - lat.log_q;
  } else {
    out.total = loglik - kl_to_standard_normal(tape, post.gauss);
  }
  out.set("elbo_q", out.total);
  out.set("loglik_q", loglik);
  return out;
}

/// Single-sample stochastic ELBO estimate log p(x_Q, z) - log q(z | x_Q);
/// the estimator an importance-weighted bound collapses to at M = 1.
inline Var elbo_sample_estimate(Bound& bound, const Model& model,
                                const Tensor& x_row, const Tensor& qmask,
                                const Tensor& noise) {
  Tape& tape = bound.tape();
  Posterior post = posterior_of(bound, model, x_row, qmask);
  Latent lat = draw_latent(bound, post, noise);
  GaussianVars dist = decode(bound, model, lat.z);
  Var loglik = masked_log_likelihood(tape, dist, x_row, qmask);
  Var prior = gaussian_log_density(
      tape, lat.z, standard_normal_vars(tape, model.latent_dim()));
  return loglik + prior - lat.log_q;
}

/// Importance-weighted lower bound over M posterior samples (log-mean-exp
/// of the per-sample log-weights, max-shifted for stability).
inline Var miwae_bound(Bound& bound, const Model& model, const Tensor& x_row,
                       const Tensor& qmask,
                       const std::vector<Tensor>& noises) {
  if (!is_iw_family(model.kind))
    throw ContractError("miwae_bound needs an importance-weighted model");
  return detail::partial_objective(bound, model, x_row, qmask, noises).value;
}

/// MIWAE bound whose log-weights carry the Bernoulli mask term from the
/// self-masking head.
inline Var not_miwae_bound(Bound& bound, const Model& model,
                           const Tensor& x_row, const Tensor& m_row,
                           const std::vector<Tensor>& noises) {
  if (!has_mask_head(model.kind))
    throw ContractError("not_miwae_bound needs a model with a mask head");
  return detail::partial_objective(bound, model, x_row, m_row, noises).value;
}

/// Joint ELBO for data and mask: partial flow ELBO (A) plus the expected
/// Bernoulli log-mass of the mask under the decoder completion (B).
inline LossVars mnar_flow_elbo(Bound& bound, const Model& model,
                               const Tensor& x_row, const Tensor& m_row,
                               const Tensor& noise) {
  Tape& tape = bound.tape();
  Posterior post = posterior_of(bound, model, x_row, m_row);
  Latent lat = draw_latent(bound, post, noise);
  GaussianVars dist = decode(bound, model, lat.z);
  Var loglik = masked_log_likelihood(tape, dist, x_row, m_row);
  Var prior = gaussian_log_density(
      tape, lat.z, standard_normal_vars(tape, model.latent_dim()));
  Var part_a = loglik + prior - lat.log_q;
  Var pi = mask_probabilities(bound, model,
                              complete_sample(tape, x_row, m_row, dist));
  Var part_b = bernoulli_log_mass(tape, m_row, pi);
  LossVars out;
  out.total = part_a + part_b;
  out.set("elbo_q", part_a);
  out.set("mask_loglik", part_b);
  return out;
}

/// Noise bundle for the regularized loss: one stream per posterior, sized
/// M for importance-weighted families and 1 otherwise.
struct RegNoise {
  std::vector<Tensor> q;
  std::vector<Tensor> p;
};

/// Consistency-regularized training objective for one row:
///   total = elbo_Q - lambda * (kl_QP - loglik_Pbar - elbo_P + elbo_Q)
/// with kl_QP the divergence between the Q- and P-view posteriors,
/// loglik_Pbar the log-likelihood of the artificially hidden cells under
/// z_Q, and elbo_* the family's per-view objective. Gradients flow through
/// every term, both elbo_Q occurrences included.
inline LossVars regularized_loss(Bound& bound, const Model& model,
                                 const Tensor& x_row, const Tensor& qmask,
                                 const Tensor& pmask, double lambda,
                                 const RegNoise& noise) {
  Tape& tape = bound.tape();
  Tensor pbar = pbar_mask(qmask, pmask);
  detail::PartialTerm q_term =
      detail::partial_objective(bound, model, x_row, qmask, noise.q);
  detail::PartialTerm p_term =
      detail::partial_objective(bound, model, x_row, pmask, noise.p);

  Var kl_qp;
  if (q_term.post.flow)
    kl_qp = flow_kl_estimate(bound, q_term.post.fp, p_term.post.fp, noise.q);
  else
    kl_qp = diag_gaussian_kl(tape, q_term.post.gauss, p_term.post.gauss);

  Var loglik_pbar =
      masked_log_likelihood(tape, q_term.dist_first, x_row, pbar);

  Var bracket = kl_qp - loglik_pbar - p_term.value + q_term.value;
  LossVars out;
  out.total = q_term.value - tape.affine(bracket, lambda, 0.0);
  out.set("elbo_q", q_term.value);
  out.set("elbo_p", p_term.value);
  out.set("kl_qp", kl_qp);
  out.set("loglik_pbar", loglik_pbar);
  out.set("reg_bracket", bracket);
  return out;
}

}  // namespace pcvae
