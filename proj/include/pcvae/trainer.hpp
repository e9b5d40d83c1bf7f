#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pcvae/adam.hpp"
#include "pcvae/dataio.hpp"
#include "pcvae/missingness.hpp"
#include "pcvae/model.hpp"
#include "pcvae/objectives.hpp"

namespace pcvae {

struct RegSettings {
  bool enabled = false;
  double lambda = 0.0;
  MechanismSpec mechanism = MechanismSpec::uniform(0.3);
  std::size_t samples = 1;  // z draws per expectation
};

struct AmSettings {
  bool enabled = false;
};

struct TrainConfig {
  ModelKind model = ModelKind::Pnp;
  ArchConfig arch;
  RegSettings reg;
  AmSettings am;
  std::size_t epochs = 3000;
  double lr = 0.001;
  std::size_t batch = 64;
  std::size_t m_samples = 5;  // importance samples for IW families
  std::uint64_t seed = 1;
  std::size_t eval_cadence = 0;  // 0 = checkpoint only at the end
  bool record_timing = true;

  /// Throws on contradictions; returns soft warnings (tuning-range checks).
  std::vector<std::string> validate() const {
    if (reg.enabled && am.enabled)
      throw ConfigError(
          "reg and am are mutually exclusive training configurations");
    if (am.enabled && model != ModelKind::Zi && model != ModelKind::MaskZi &&
        model != ModelKind::Pnp)
      throw ConfigError("am applies to zi, mask_zi and pnp models only");
    if (batch == 0) throw ConfigError("batch size must be positive");
    if (lr <= 0.0) throw ConfigError("learning rate must be positive");
    if (is_iw_family(model) && m_samples == 0)
      throw ConfigError("importance-weighted models need m_samples >= 1");
    if (reg.enabled && reg.samples == 0)
      throw ConfigError("reg.samples must be >= 1");
    std::vector<std::string> warnings;
    if (reg.enabled && (reg.lambda < 0.0 || reg.lambda > 1.5))
      warnings.push_back("lambda " + std::to_string(reg.lambda) +
                         " is outside the tuning range [0, 1.5]");
    if (reg.enabled && reg.mechanism.kind == MechanismKind::Uniform &&
        (reg.mechanism.p_remove < 0.01 || reg.mechanism.p_remove > 0.8))
      warnings.push_back("p_remove " +
                         std::to_string(reg.mechanism.p_remove) +
                         " is outside the tuning range [0.01, 0.8]");
    return warnings;
  }
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // minimized quantity: minus the mean objective
  std::map<std::string, double> components;
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;

  static const std::vector<std::string>& csv_components() {
    static const std::vector<std::string> cols{"elbo_q", "elbo_p", "kl_qp",
                                               "loglik_pbar"};
    return cols;
  }

  std::string to_csv(const std::vector<std::string>& comments = {}) const {
    std::ostringstream out;
    for (const std::string& c : comments) out << "# " << c << '\n';
    out << "epoch,loss";
    for (const std::string& c : csv_components()) out << ',' << c;
    out << ",seconds\n";
    for (const EpochRecord& r : epochs) {
      out << r.epoch << ',' << format_double(r.loss);
      for (const std::string& c : csv_components()) {
        auto it = r.components.find(c);
        out << ',' << format_double(it == r.components.end() ? 0.0
                                                             : it->second);
      }
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.3f", r.seconds);
      out << ',' << buf << '\n';
    }
    return out.str();
  }
};

/// Epoch-seeded minibatch order: every index exactly once, short final
/// batch kept, order varying across epochs of the same run.
inline std::vector<std::vector<std::size_t>> minibatch_iter(
    std::size_t n, std::size_t batch, std::uint64_t seed, std::size_t epoch) {
  if (batch == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x7368756666ULL, epoch));  // "shuff"
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch) {
    std::size_t stop = std::min(n, start + batch);
    batches.emplace_back(order.begin() + start, order.begin() + stop);
  }
  return batches;
}

/// One AM step: drop observed cells at a freshly drawn rate in [0, 0.7].
/// The reduced mask is what the model sees for this step.
inline MaskPattern train_am_step(const MaskPattern& q_mask, Rng& rng) {
  double rate = am_rate(rng);
  MaskPattern reduced = q_mask;
  if (rate > 0.0)
    for (double& e : reduced.m.v)
      if (e == 1.0 && rng.uniform() < rate) e = 0.0;
  return reduced;
}

struct TrainResult {
  Model model;
  TrainLog log;
};

using CheckpointSink =
    std::function<void(std::size_t epoch, const Model&, const TrainLog&)>;

namespace detail {

inline std::vector<Tensor> draw_noises(Rng& rng, std::size_t count,
                                       std::size_t dim) {
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) out.push_back(rng.normal_vector(dim));
  return out;
}

inline std::vector<double> observed_column_means(const Dataset& ds,
                                                 const MaskPattern& mask) {
  std::vector<double> mean(ds.d(), 0.0);
  std::vector<std::size_t> cnt(ds.d(), 0);
  for (std::size_t i = 0; i < ds.n(); ++i)
    for (std::size_t j = 0; j < ds.d(); ++j)
      if (mask.observed(i, j)) {
        mean[j] += ds.values.at(i, j);
        ++cnt[j];
      }
  for (std::size_t j = 0; j < ds.d(); ++j)
    if (cnt[j])
      mean[j] /= static_cast<double>(cnt[j]);
    else
      mean[j] = 0.5;
  return mean;
}

}  // namespace detail

/// Runs the training loop: per batch, draw the artificial subset P of Q,
/// sample the latents, assemble the configured loss and take one ADAM step
/// on its negation. Identical (config, data, mask) inputs give identical
/// checkpoints.
inline TrainResult train(const TrainConfig& cfg, const Dataset& ds,
                         const MaskPattern& q_mask,
                         const CheckpointSink& sink = {}) {
  cfg.validate();
  if (!ds.values.same_shape(q_mask.m))
    throw DimensionError("train: mask shape does not match data");
  for (double v : ds.values.v)
    if (v < -1e-9 || v > 1.0 + 1e-9)
      throw DataError("train expects data scaled to [0,1]");

  Rng init_rng(derive_seed(cfg.seed, 0x696e6974ULL));    // "init"
  Rng noise_rng(derive_seed(cfg.seed, 0x6e6f697365ULL)); // "noise"
  Rng pmask_rng(derive_seed(cfg.seed, 0x706d61736bULL)); // "pmask"
  Rng am_rng(derive_seed(cfg.seed, 0x616dULL));          // "am"

  TrainResult result;
  result.model = Model::create(cfg.model, ds.d(), cfg.arch, init_rng,
                               detail::observed_column_means(ds, q_mask));
  result.model.scale = ds.scale;
  Model& model = result.model;

  AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  AdamState adam(model.params, adam_cfg);

  std::size_t latent = model.latent_dim();
  std::size_t reg_draws = is_iw_family(cfg.model) ? cfg.m_samples
                                                  : cfg.reg.samples;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    std::map<std::string, double> comp_sums;
    std::size_t rows_seen = 0;

    auto batches = minibatch_iter(ds.n(), cfg.batch, cfg.seed, epoch);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];

      MaskPattern step_mask = q_mask;
      if (cfg.am.enabled) step_mask = train_am_step(q_mask, am_rng);

      MaskPattern p_full;
      if (cfg.reg.enabled) {
        p_full = artificial_subset(q_mask, ds.values, cfg.reg.mechanism,
                                   pmask_rng);
        if (!p_full.subset_of(q_mask))
          throw ContractError("artificial subset violated P within Q");
      }

      Tape tape;
      Bound bound(tape, model.params);
      Var total_sum;
      std::vector<std::pair<std::string, Var>> part_vars;
      for (std::size_t row : batch) {
        Tensor x = ds.row(row);
        Tensor qrow = step_mask.row(row);
        LossVars row_loss;
        if (cfg.reg.enabled) {
          RegNoise noise;
          noise.q = detail::draw_noises(noise_rng, reg_draws, latent);
          noise.p = detail::draw_noises(noise_rng, reg_draws, latent);
          row_loss = regularized_loss(bound, model, x, qrow,
                                      p_full.row(row), cfg.reg.lambda, noise);
        } else if (is_iw_family(cfg.model)) {
          LossVars lv;
          lv.total = miwae_bound(
              bound, model, x, qrow,
              detail::draw_noises(noise_rng, cfg.m_samples, latent));
          lv.set("elbo_q", lv.total);
          row_loss = lv;
        } else if (cfg.model == ModelKind::FlowMnar) {
          row_loss =
              mnar_flow_elbo(bound, model, x, qrow,
                             noise_rng.normal_vector(latent));
        } else {
          row_loss = elbo_partial(bound, model, x, qrow,
                                  noise_rng.normal_vector(latent));
        }
        total_sum = total_sum.valid() ? total_sum + row_loss.total
                                      : row_loss.total;
        for (auto& [key, var] : row_loss.parts)
          part_vars.emplace_back(key, var);
      }
      double inv = 1.0 / static_cast<double>(batch.size());
      Var objective = tape.affine(total_sum, inv, 0.0);
      Var loss = tape.neg(objective);
      double loss_val = tape.val(loss).item();
      if (!std::isfinite(loss_val)) {
        std::ostringstream os;
        os << "non-finite loss at epoch " << epoch << ", batch " << bi;
        std::map<std::string, double> comps;
        for (auto& [key, var] : part_vars) comps[key] += tape.val(var).item();
        os << "; components:";
        for (auto& [key, v] : comps) os << ' ' << key << '=' << v;
        throw NumericError(os.str());
      }

      tape.backward(loss);
      std::vector<Tensor> grads;
      grads.reserve(model.params.count());
      for (std::size_t i = 0; i < model.params.count(); ++i)
        grads.push_back(bound.grad_of(i));
      adam_step(model.params, grads, adam);

      loss_sum += loss_val * static_cast<double>(batch.size());
      for (auto& [key, var] : part_vars)
        comp_sums[key] += tape.val(var).item();
      rows_seen += batch.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = rows_seen ? loss_sum / static_cast<double>(rows_seen) : 0.0;
    for (auto& [key, v] : comp_sums)
      rec.components[key] = v / static_cast<double>(rows_seen);
    if (cfg.record_timing) {
      auto t1 = std::chrono::steady_clock::now();
      rec.seconds = std::chrono::duration<double>(t1 - t0).count();
    }
    result.log.epochs.push_back(std::move(rec));

    if (sink && cfg.eval_cadence > 0 && epoch % cfg.eval_cadence == 0 &&
        epoch != cfg.epochs)
      sink(epoch, model, result.log);
  }
  if (sink) sink(cfg.epochs, model, result.log);
  return result;
}

}  // namespace pcvae
