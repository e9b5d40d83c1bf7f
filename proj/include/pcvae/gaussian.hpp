#pragma once

#include <cmath>

#include "pcvae/autodiff.hpp"
#include "pcvae/rng.hpp"
#include "pcvae/tensor.hpp"

namespace pcvae {

inline constexpr double kLogTwoPi = 1.8378770664093454836;
inline constexpr double kLogVarMin = -12.0;
inline constexpr double kLogVarMax = 12.0;

inline double clamp_log_var(double lv) {
  return lv < kLogVarMin ? kLogVarMin : (lv > kLogVarMax ? kLogVarMax : lv);
}

/// Axis-aligned Gaussian given by mean and log-variance vectors.
/// Log-variances are kept in [-12, 12] so variances stay positive and
/// likelihoods finite.
struct DiagGaussian {
  Tensor mean;
  Tensor log_var;

  DiagGaussian() = default;
  DiagGaussian(Tensor mu, Tensor lv)
      : mean(std::move(mu)), log_var(std::move(lv)) {
    require_same_shape(mean, log_var, "DiagGaussian");
    for (double& e : log_var.v) e = clamp_log_var(e);
  }

  static DiagGaussian standard(std::size_t dim) {
    return DiagGaussian(Tensor({dim}), Tensor({dim}));
  }

  std::size_t dim() const { return mean.size(); }

  Tensor sample(Rng& rng) const {
    Tensor z({dim()});
    for (std::size_t i = 0; i < dim(); ++i)
      z.v[i] = mean.v[i] + std::exp(0.5 * log_var.v[i]) * rng.normal();
    return z;
  }
};

/// Same distribution as tape nodes (encoder / decoder outputs).
struct GaussianVars {
  Var mean;
  Var log_var;

  std::size_t dim() const { return mean.tape->val(mean).size(); }

  DiagGaussian detach() const {
    return DiagGaussian(mean.tape->val(mean), log_var.tape->val(log_var));
  }
};

// ----- value-level --------------------------------------------------------

inline double gaussian_log_density(const Tensor& x, const DiagGaussian& g) {
  require_same_shape(x, g.mean, "gaussian_log_density");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double d = x.v[i] - g.mean.v[i];
    s += kLogTwoPi + g.log_var.v[i] + d * d * std::exp(-g.log_var.v[i]);
  }
  return -0.5 * s;
}

inline double diag_gaussian_kl(const DiagGaussian& q, const DiagGaussian& p) {
  require_same_shape(q.mean, p.mean, "diag_gaussian_kl");
  double s = 0.0;
  for (std::size_t i = 0; i < q.dim(); ++i) {
    double dl = q.log_var.v[i] - p.log_var.v[i];
    double dm = q.mean.v[i] - p.mean.v[i];
    s += std::exp(dl) + dm * dm * std::exp(-p.log_var.v[i]) - 1.0 - dl;
  }
  return 0.5 * s;
}

inline double bernoulli_log_mass(const Tensor& m, const Tensor& pi) {
  require_same_shape(m, pi, "bernoulli_log_mass");
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    double p = pi.v[i];
    p = p < 1e-6 ? 1e-6 : (p > 1.0 - 1e-6 ? 1.0 - 1e-6 : p);
    s += m.v[i] * std::log(p) + (1.0 - m.v[i]) * std::log(1.0 - p);
  }
  return s;
}

// ----- tape-level ---------------------------------------------------------

/// z = mean + exp(log_var/2) * noise. Exact affine in the noise.
inline Var reparam_sample(Tape& tape, const GaussianVars& q,
                          const Tensor& noise) {
  if (noise.size() != q.dim())
    throw DimensionError("reparam_sample: noise length " +
                         std::to_string(noise.size()) + " vs dim " +
                         std::to_string(q.dim()));
  Var std_dev = tape.exp(tape.affine(q.log_var, 0.5, 0.0));
  return q.mean + std_dev * tape.constant(noise);
}

inline Var gaussian_log_density(Tape& tape, Var x, const GaussianVars& g) {
  require_same_shape(tape.val(x), tape.val(g.mean), "gaussian_log_density");
  Var d = x - g.mean;
  Var quad = d * d * tape.exp(-g.log_var);
  Var per_dim = tape.affine(g.log_var, 1.0, kLogTwoPi) + quad;
  return tape.affine(tape.sum(per_dim), -0.5, 0.0);
}

/// Log density summed over cells where weight is 1; an all-zero weight
/// vector gives exactly 0.
inline Var weighted_gaussian_log_density(Tape& tape, const Tensor& x,
                                         const Tensor& weights,
                                         const GaussianVars& g) {
  require_same_shape(x, tape.val(g.mean), "weighted_gaussian_log_density");
  require_same_shape(x, weights, "weighted_gaussian_log_density");
  Var d = tape.constant(x) - g.mean;
  Var quad = d * d * tape.exp(-g.log_var);
  Var per_dim = tape.affine(g.log_var, 1.0, kLogTwoPi) + quad;
  Var masked = per_dim * tape.constant(weights);
  return tape.affine(tape.sum(masked), -0.5, 0.0);
}

/// Closed-form KL(q || p) for two diagonal Gaussians, in nats.
inline Var diag_gaussian_kl(Tape& tape, const GaussianVars& q,
                            const GaussianVars& p) {
  require_same_shape(tape.val(q.mean), tape.val(p.mean), "diag_gaussian_kl");
  Var dl = q.log_var - p.log_var;
  Var dm = q.mean - p.mean;
  Var terms = tape.exp(dl) + dm * dm * tape.exp(-p.log_var) - dl;
  double k = static_cast<double>(q.dim());
  return tape.affine(tape.sum(terms), 0.5, -0.5 * k);
}

/// KL(q || N(0, I)).
inline Var kl_to_standard_normal(Tape& tape, const GaussianVars& q) {
  Var terms = tape.exp(q.log_var) + q.mean * q.mean - q.log_var;
  double k = static_cast<double>(q.dim());
  return tape.affine(tape.sum(terms), 0.5, -0.5 * k);
}

/// Sum_j m_j log pi_j + (1-m_j) log(1-pi_j), with pi clamped away from 0/1.
inline Var bernoulli_log_mass(Tape& tape, const Tensor& m, Var pi) {
  require_same_shape(m, tape.val(pi), "bernoulli_log_mass");
  Var pc = tape.clamp(pi, 1e-6, 1.0 - 1e-6);
  Var on = tape.log(pc) * tape.constant(m);
  Tensor m_off = m;
  for (double& e : m_off.v) e = 1.0 - e;
  Var off = tape.log(tape.affine(pc, -1.0, 1.0)) * tape.constant(m_off);
  return tape.sum(on + off);
}

}  // namespace pcvae
