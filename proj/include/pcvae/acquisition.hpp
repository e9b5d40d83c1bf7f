#pragma once

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "pcvae/evalkit.hpp"
#include "pcvae/objectives.hpp"

namespace pcvae {

/// Greedy acquisition state for one row: observed features with their
/// revealed values, remaining candidates and the prediction target.
struct AcquisitionState {
  std::size_t data_dim = 0;
  std::size_t target = 0;
  Tensor values;                 // revealed values (zeros elsewhere)
  Tensor mask;                   // 1 at observed (acquired) features
  std::vector<std::size_t> unobserved;
  std::vector<double> step_sq_errors;

  static AcquisitionState fresh(std::size_t d, std::size_t target) {
    if (target >= d) throw ContractError("acquisition target out of range");
    AcquisitionState s;
    s.data_dim = d;
    s.target = target;
    s.values = Tensor({d});
    s.mask = Tensor({d});
    for (std::size_t j = 0; j < d; ++j)
      if (j != target) s.unobserved.push_back(j);
    return s;
  }

  bool observed(std::size_t j) const { return mask.v[j] == 1.0; }

  void acquire(std::size_t j, double value) {
    auto it = std::find(unobserved.begin(), unobserved.end(), j);
    if (it == unobserved.end())
      throw ContractError("feature already acquired or not acquirable");
    unobserved.erase(it);
    values.v[j] = value;
    mask.v[j] = 1.0;
  }
};

/// S joint decoder draws of the features in F given the observed values:
/// one posterior sample z per draw, then one decoder sample per feature.
inline std::vector<std::vector<double>> sample_predictive(
    const Model& model, const Tensor& obs_values, const Tensor& obs_mask,
    const std::vector<std::size_t>& features, std::size_t samples, Rng& rng) {
  for (std::size_t f : features)
    if (obs_mask.v.at(f) != 0.0)
      throw ContractError("sample_predictive: feature already observed");
  std::vector<std::vector<double>> draws(samples);
  Tape tape;
  Bound bound(tape, model.params);
  Posterior post = posterior_of(bound, model, obs_values, obs_mask);
  for (std::size_t s = 0; s < samples; ++s) {
    Latent lat =
        draw_latent(bound, post, rng.normal_vector(model.latent_dim()));
    GaussianVars dist = decode(bound, model, lat.z);
    draws[s].reserve(features.size());
    for (std::size_t f : features) {
      double mu = tape.val(dist.mean).v[f];
      double sd = std::exp(0.5 * tape.val(dist.log_var).v[f]);
      draws[s].push_back(mu + sd * rng.normal());
    }
  }
  return draws;
}

namespace detail {

/// KL between the posteriors for two observation patterns of the same row;
/// closed form for Gaussian encoders, single-sample log-ratio for flows.
inline double posterior_kl(const Model& model, const Tensor& values_a,
                           const Tensor& mask_a, const Tensor& values_b,
                           const Tensor& mask_b, Rng& rng) {
  Tape tape;
  Bound bound(tape, model.params);
  Posterior pa = posterior_of(bound, model, values_a, mask_a);
  Posterior pb = posterior_of(bound, model, values_b, mask_b);
  if (!pa.flow)
    return tape.val(diag_gaussian_kl(tape, pa.gauss, pb.gauss)).item();
  return tape
      .val(flow_kl_estimate(bound, pa.fp, pb.fp,
                            {rng.normal_vector(model.latent_dim())}))
      .item();
}

}  // namespace detail

/// Estimated information reward of acquiring candidate feature i:
/// the expected posterior shift it causes, minus the part explained away
/// once the target is known.
inline double information_reward(const Model& model,
                                 const AcquisitionState& state,
                                 std::size_t candidate, std::size_t s_outer,
                                 Rng& rng) {
  if (state.observed(candidate) || candidate == state.target)
    throw ContractError("information_reward: candidate not acquirable");
  if (s_outer == 0) throw ContractError("information_reward: s_outer >= 1");

  double term1 = 0.0;
  {
    auto draws = sample_predictive(model, state.values, state.mask,
                                   {candidate}, s_outer, rng);
    for (const auto& draw : draws) {
      Tensor values = state.values;
      Tensor mask = state.mask;
      values.v[candidate] = draw[0];
      mask.v[candidate] = 1.0;
      term1 += detail::posterior_kl(model, values, mask, state.values,
                                    state.mask, rng);
    }
    term1 /= static_cast<double>(s_outer);
  }

  double term2 = 0.0;
  {
    auto draws = sample_predictive(model, state.values, state.mask,
                                   {state.target, candidate}, s_outer, rng);
    for (const auto& draw : draws) {
      Tensor with_t = state.values;
      Tensor mask_t = state.mask;
      with_t.v[state.target] = draw[0];
      mask_t.v[state.target] = 1.0;
      Tensor with_ti = with_t;
      Tensor mask_ti = mask_t;
      with_ti.v[candidate] = draw[1];
      mask_ti.v[candidate] = 1.0;
      term2 +=
          detail::posterior_kl(model, with_ti, mask_ti, with_t, mask_t, rng);
    }
    term2 /= static_cast<double>(s_outer);
  }
  return term1 - term2;
}

/// Argmax of the information reward over the remaining candidates, ties
/// broken towards the lowest feature index.
inline std::size_t select_next(const Model& model,
                               const AcquisitionState& state,
                               std::size_t s_outer, std::uint64_t seed) {
  if (state.unobserved.empty())
    throw ContractError("select_next: no candidates left");
  std::size_t best = state.unobserved.front();
  double best_reward = -std::numeric_limits<double>::infinity();
  for (std::size_t candidate : state.unobserved) {
    Rng rng(derive_seed(seed, 0x726577ULL, candidate));  // per-candidate
    double reward = information_reward(model, state, candidate, s_outer, rng);
    if (reward > best_reward) {
      best_reward = reward;
      best = candidate;
    }
  }
  return best;
}

struct InformationCurve {
  std::vector<double> mean_sq_error;  // per step, length max_steps + 1
  std::vector<double> std_error;      // standard error of the row mean
  std::vector<double> rmse;           // sqrt of the mean squared error

  std::size_t steps() const { return mean_sq_error.size(); }
};

/// Greedy per-row acquisition curve against ground truth. Step 0 is the
/// target error with nothing observed; each later step reveals the selected
/// feature's true value and re-predicts the target.
inline InformationCurve information_curve(const Model& model,
                                          const Dataset& truth,
                                          std::size_t target,
                                          std::size_t max_steps,
                                          std::size_t s_outer,
                                          std::size_t s_impute,
                                          std::uint64_t seed,
                                          std::size_t jobs = 1) {
  std::size_t d = truth.d();
  if (target >= d) throw ContractError("information_curve: target range");
  if (max_steps > d - 1) max_steps = d - 1;
  std::size_t n = truth.n();
  std::vector<std::vector<double>> sq(max_steps + 1,
                                      std::vector<double>(n, 0.0));

  parallel_rows(n, jobs, [&](std::size_t row) {
    std::uint64_t row_seed = derive_seed(seed, 0x696377ULL, row);
    AcquisitionState state = AcquisitionState::fresh(d, target);
    for (std::size_t step = 0; step <= max_steps; ++step) {
      if (step > 0) {
        std::size_t pick =
            select_next(model, state, s_outer,
                        derive_seed(row_seed, 0x73656cULL, step));
        state.acquire(pick, truth.values.at(row, pick));
      }
      Rng imp_rng(derive_seed(row_seed, 0x696d70ULL, step));
      Tensor completed =
          impute(model, state.values, state.mask, s_impute, imp_rng);
      double err = completed.v[target] - truth.values.at(row, target);
      sq[step][row] = err * err;
      state.step_sq_errors.push_back(err * err);
    }
  });

  InformationCurve curve;
  for (std::size_t step = 0; step <= max_steps; ++step) {
    double mean = 0.0;
    for (double e : sq[step]) mean += e;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double e : sq[step]) var += (e - mean) * (e - mean);
    double se = n > 1 ? std::sqrt(var / (static_cast<double>(n) *
                                         static_cast<double>(n - 1)))
                      : 0.0;
    curve.mean_sq_error.push_back(mean);
    curve.std_error.push_back(se);
    curve.rmse.push_back(std::sqrt(mean));
  }
  return curve;
}

}  // namespace pcvae
