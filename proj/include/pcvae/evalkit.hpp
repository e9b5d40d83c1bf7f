#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "pcvae/dataio.hpp"
#include "pcvae/missingness.hpp"
#include "pcvae/objectives.hpp"

namespace pcvae {

/// Runs fn(row) for every row, optionally across threads. Rows must be
/// independent (each writes its own output slot).
inline void parallel_rows(std::size_t n, std::size_t jobs,
                          const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::size_t workers = std::min(jobs, n);
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < n; i += workers) fn(i);
    });
  for (std::thread& t : pool) t.join();
}

/// Posterior-mean imputation. Observed cells are copied bit for bit;
/// missing cells average the decoder means over S posterior samples, with
/// self-normalized importance weights for the IW families.
inline Tensor impute(const Model& model, const Tensor& x_row,
                     const Tensor& mask_row, std::size_t samples, Rng& rng) {
  if (samples == 0) throw ContractError("impute: samples must be >= 1");
  std::size_t d = model.data_dim();
  std::vector<double> mean_acc(d, 0.0);
  std::vector<double> means(samples * d);
  std::vector<double> logw(samples, 0.0);
  bool weighted = is_iw_family(model.kind);

  Tape tape;
  Bound bound(tape, model.params);
  Posterior post = posterior_of(bound, model, x_row, mask_row);
  for (std::size_t s = 0; s < samples; ++s) {
    Tensor noise = rng.normal_vector(model.latent_dim());
    Latent lat = draw_latent(bound, post, noise);
    GaussianVars dist = decode(bound, model, lat.z);
    for (std::size_t j = 0; j < d; ++j)
      means[s * d + j] = tape.val(dist.mean).v[j];
    if (weighted) {
      Var loglik = masked_log_likelihood(tape, dist, x_row, mask_row);
      Var prior = gaussian_log_density(
          tape, lat.z, standard_normal_vars(tape, model.latent_dim()));
      Var w = loglik + prior - lat.log_q;
      if (has_mask_head(model.kind)) {
        Var pi = mask_probabilities(
            bound, model, complete_sample(tape, x_row, mask_row, dist));
        w = w + bernoulli_log_mass(tape, mask_row, pi);
      }
      logw[s] = tape.val(w).item();
    }
  }

  if (weighted) {
    double mx = logw[0];
    for (double w : logw) mx = std::max(mx, w);
    double z = 0.0;
    std::vector<double> weight(samples);
    for (std::size_t s = 0; s < samples; ++s) {
      weight[s] = std::exp(logw[s] - mx);
      z += weight[s];
    }
    for (std::size_t s = 0; s < samples; ++s)
      for (std::size_t j = 0; j < d; ++j)
        mean_acc[j] += (weight[s] / z) * means[s * d + j];
  } else {
    for (std::size_t s = 0; s < samples; ++s)
      for (std::size_t j = 0; j < d; ++j) mean_acc[j] += means[s * d + j];
    for (double& e : mean_acc) e /= static_cast<double>(samples);
  }

  Tensor out = x_row;
  for (std::size_t j = 0; j < d; ++j)
    if (mask_row.v[j] == 0.0) out.v[j] = mean_acc[j];
  return out;
}

inline Tensor impute_all(const Model& model, const Dataset& ds,
                         const MaskPattern& mask, std::size_t samples,
                         std::uint64_t seed, std::size_t jobs = 1) {
  Tensor out({ds.n(), ds.d()});
  parallel_rows(ds.n(), jobs, [&](std::size_t i) {
    Rng rng(derive_seed(seed, 0x696d70ULL, i));  // per-row stream
    Tensor row = impute(model, ds.row(i), mask.row(i), samples, rng);
    for (std::size_t j = 0; j < ds.d(); ++j) out.at(i, j) = row.v[j];
  });
  return out;
}

/// Root-mean-square error over missing cells: per-row sum of squared errors
/// at hidden cells, averaged over rows, square root last. Rows without
/// missing cells contribute zero to the sum but still count.
inline double rmse_missing(const Tensor& imputed, const Tensor& truth,
                           const MaskPattern& q_mask) {
  require_same_shape(imputed, truth, "rmse_missing");
  if (!imputed.same_shape(q_mask.m))
    throw DimensionError("rmse_missing: mask shape mismatch");
  std::size_t n = imputed.rows();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < imputed.cols(); ++j)
      if (!q_mask.observed(i, j)) {
        double e = imputed.at(i, j) - truth.at(i, j);
        acc += e * e;
      }
  return std::sqrt(acc / static_cast<double>(n));
}

/// Monte Carlo negative expected log-likelihood of the hidden ground-truth
/// cells under the decoder, S posterior samples.
inline double neg_expected_llh(const Model& model, const Tensor& x_row,
                               const Tensor& mask_row, const Tensor& truth_row,
                               std::size_t samples, Rng& rng) {
  if (samples == 0) throw ContractError("neg_expected_llh: samples >= 1");
  Tensor hidden = mask_row;
  for (double& e : hidden.v) e = 1.0 - e;
  bool any_hidden = false;
  for (double e : hidden.v) any_hidden = any_hidden || e == 1.0;
  if (!any_hidden) return 0.0;

  Tape tape;
  Bound bound(tape, model.params);
  Posterior post = posterior_of(bound, model, x_row, mask_row);
  double acc = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    Latent lat =
        draw_latent(bound, post, rng.normal_vector(model.latent_dim()));
    GaussianVars dist = decode(bound, model, lat.z);
    acc += tape.val(masked_log_likelihood(tape, dist, truth_row, hidden))
               .item();
  }
  return -acc / static_cast<double>(samples);
}

/// Mean per-row partial-ELBO estimate over S posterior samples.
inline double test_elbo(const Model& model, const Dataset& ds,
                        const MaskPattern& q_mask, std::size_t samples,
                        std::uint64_t seed) {
  if (samples == 0) throw ContractError("test_elbo: samples >= 1");
  double acc = 0.0;
  for (std::size_t i = 0; i < ds.n(); ++i) {
    Rng rng(derive_seed(seed, 0x656c626fULL, i));  // "elbo"
    Tape tape;
    Bound bound(tape, model.params);
    double row_acc = 0.0;
    for (std::size_t s = 0; s < samples; ++s)
      row_acc += elbo_partial(bound, model, ds.row(i), q_mask.row(i),
                              rng.normal_vector(model.latent_dim()))
                     .values()
                     .total;
    acc += row_acc / static_cast<double>(samples);
  }
  return acc / static_cast<double>(ds.n());
}

/// One evaluated run; optional metrics stay empty when skipped.
struct MetricsRecord {
  std::string dataset;
  std::string model;
  bool reg = false;
  double lambda = 0.0;
  double p_remove = 0.0;
  double missing_rate = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> rmse;
  std::optional<double> neg_llh;
  std::optional<double> elbo;

  static const char* csv_header() {
    return "dataset,model,reg,lambda,p_remove,missing_rate,seed,rmse,"
           "neg_llh,elbo";
  }

  std::string to_csv_row() const {
    std::ostringstream os;
    os << dataset << ',' << model << ',' << (reg ? 1 : 0) << ','
       << format_double(lambda) << ',' << format_double(p_remove) << ','
       << format_double(missing_rate) << ',' << seed << ','
       << (rmse ? format_double(*rmse) : "") << ','
       << (neg_llh ? format_double(*neg_llh) : "") << ','
       << (elbo ? format_double(*elbo) : "");
    return os.str();
  }
};

/// Appends one record, creating the file with comments + header first.
inline void append_metrics_csv(const std::string& path,
                               const MetricsRecord& record,
                               const std::vector<std::string>& comments = {}) {
  bool fresh = true;
  {
    std::ifstream probe(path);
    fresh = !probe.good() || probe.peek() == std::ifstream::traits_type::eof();
  }
  std::ofstream out(path, std::ios::app);
  if (!out) throw DataError("cannot write " + path);
  if (fresh) {
    for (const std::string& c : comments) out << "# " << c << '\n';
    out << MetricsRecord::csv_header() << '\n';
  }
  out << record.to_csv_row() << '\n';
}

}  // namespace pcvae
