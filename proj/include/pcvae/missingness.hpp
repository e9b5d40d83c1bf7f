#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pcvae/error.hpp"
#include "pcvae/rng.hpp"
#include "pcvae/tensor.hpp"

namespace pcvae {

/// Boolean observation mask over an n x d table; 1 = observed everywhere in
/// this codebase.
struct MaskPattern {
  Tensor m;  // [n,d], entries 0 or 1

  MaskPattern() = default;
  explicit MaskPattern(std::size_t n, std::size_t d) : m({n, d}) {}
  explicit MaskPattern(Tensor t) : m(std::move(t)) {
    if (m.rank() != 2) throw DimensionError("mask must be a matrix");
    for (double e : m.v)
      if (e != 0.0 && e != 1.0)
        throw ParseError("mask cells must be 0 or 1");
  }

  std::size_t rows() const { return m.rows(); }
  std::size_t cols() const { return m.cols(); }

  bool observed(std::size_t i, std::size_t j) const {
    return m.at(i, j) != 0.0;
  }
  void set(std::size_t i, std::size_t j, bool obs) {
    m.at(i, j) = obs ? 1.0 : 0.0;
  }

  Tensor row(std::size_t i) const {
    Tensor r({cols()});
    for (std::size_t j = 0; j < cols(); ++j) r.v[j] = m.at(i, j);
    return r;
  }

  static MaskPattern all_observed(std::size_t n, std::size_t d) {
    MaskPattern p(n, d);
    for (double& e : p.m.v) e = 1.0;
    return p;
  }

  /// Cellwise subset law: this observed implies other observed.
  bool subset_of(const MaskPattern& q) const {
    if (!m.same_shape(q.m)) return false;
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m.v[i] == 1.0 && q.m.v[i] == 0.0) return false;
    return true;
  }

  std::size_t observed_count() const {
    std::size_t c = 0;
    for (double e : m.v) c += e != 0.0;
    return c;
  }

  double observed_fraction() const {
    return m.size() == 0 ? 0.0
                         : static_cast<double>(observed_count()) / m.size();
  }
};

enum class MechanismKind {
  Uniform,
  HalfFeatureMean,
  AllFeatureMean,
  HalfFeatureVariance,
  AllFeatureVariance,
};

inline MechanismKind mechanism_from_string(const std::string& s) {
  if (s == "uniform") return MechanismKind::Uniform;
  if (s == "half_feature_mean") return MechanismKind::HalfFeatureMean;
  if (s == "all_feature_mean") return MechanismKind::AllFeatureMean;
  if (s == "half_feature_variance") return MechanismKind::HalfFeatureVariance;
  if (s == "all_feature_variance") return MechanismKind::AllFeatureVariance;
  throw ConfigError("unknown artificial-missingness mechanism: " + s);
}

inline const char* to_string(MechanismKind k) {
  switch (k) {
    case MechanismKind::Uniform: return "uniform";
    case MechanismKind::HalfFeatureMean: return "half_feature_mean";
    case MechanismKind::AllFeatureMean: return "all_feature_mean";
    case MechanismKind::HalfFeatureVariance: return "half_feature_variance";
    case MechanismKind::AllFeatureVariance: return "all_feature_variance";
  }
  return "uniform";
}

/// How the artificial subset P is carved out of Q. p_remove applies to the
/// uniform kind only.
struct MechanismSpec {
  MechanismKind kind = MechanismKind::Uniform;
  double p_remove = 0.0;

  static MechanismSpec uniform(double p) {
    if (p < 0.0 || p > 1.0)
      throw ConfigError("removal probability must lie in [0,1]");
    return MechanismSpec{MechanismKind::Uniform, p};
  }
};

/// Every cell goes missing independently with the given rate.
inline MaskPattern sample_mcar_mask(std::size_t n, std::size_t d, double rate,
                                    Rng& rng) {
  if (rate < 0.0 || rate > 1.0)
    throw ConfigError("missingness rate must lie in [0,1]");
  MaskPattern p(n, d);
  for (double& e : p.m.v) e = rng.uniform() < rate ? 0.0 : 1.0;
  return p;
}

/// Self-censoring MNAR: a cell is missing iff its value is strictly above
/// its column mean over the complete (pre-masking) data. Deterministic.
inline MaskPattern self_censoring_mask(const Tensor& raw) {
  if (raw.rank() != 2) throw DimensionError("self_censoring_mask: matrix");
  std::size_t n = raw.rows(), d = raw.cols();
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) mean[j] += raw.at(i, j);
  for (double& e : mean) e /= static_cast<double>(n);
  MaskPattern p(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      p.set(i, j, !(raw.at(i, j) > mean[j]));
  return p;
}

namespace detail {

/// Per-column mean/variance over cells observed in q. Columns with no
/// observed cell get mean 0 / variance 0 (no cell can be dropped there).
inline void observed_column_stats(const Tensor& values, const MaskPattern& q,
                                  std::vector<double>& mean,
                                  std::vector<double>& variance) {
  std::size_t n = values.rows(), d = values.cols();
  mean.assign(d, 0.0);
  variance.assign(d, 0.0);
  std::vector<std::size_t> cnt(d, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (q.observed(i, j)) {
        mean[j] += values.at(i, j);
        ++cnt[j];
      }
  for (std::size_t j = 0; j < d; ++j)
    if (cnt[j]) mean[j] /= static_cast<double>(cnt[j]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j)
      if (q.observed(i, j)) {
        double delta = values.at(i, j) - mean[j];
        variance[j] += delta * delta;
      }
  for (std::size_t j = 0; j < d; ++j)
    if (cnt[j]) variance[j] /= static_cast<double>(cnt[j]);
}

}  // namespace detail

/// Draw P as a subset of Q. Uniform: observed cells drop independently with
/// probability spec.p_remove. Mean/variance kinds: an observed cell drops
/// iff its value strictly exceeds the column statistic computed over the
/// currently observed cells; half_* kinds touch only the first
/// ceil(d/2) columns.
inline MaskPattern artificial_subset(const MaskPattern& q, const Tensor& values,
                                     const MechanismSpec& spec, Rng& rng) {
  if (!values.same_shape(q.m))
    throw DimensionError("artificial_subset: values/mask shape mismatch");
  std::size_t n = q.rows(), d = q.cols();
  MaskPattern p = q;
  if (spec.kind == MechanismKind::Uniform) {
    for (std::size_t i = 0; i < p.m.size(); ++i)
      if (p.m.v[i] == 1.0 && rng.uniform() < spec.p_remove) p.m.v[i] = 0.0;
    return p;
  }
  std::vector<double> mean, variance;
  detail::observed_column_stats(values, q, mean, variance);
  bool use_mean = spec.kind == MechanismKind::HalfFeatureMean ||
                  spec.kind == MechanismKind::AllFeatureMean;
  bool half = spec.kind == MechanismKind::HalfFeatureMean ||
              spec.kind == MechanismKind::HalfFeatureVariance;
  std::size_t limit = half ? (d + 1) / 2 : d;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < limit; ++j)
      if (q.observed(i, j)) {
        double threshold = use_mean ? mean[j] : variance[j];
        if (values.at(i, j) > threshold) p.set(i, j, false);
      }
  return p;
}

/// Fresh artificial-missingness rate for AM training.
inline double am_rate(Rng& rng) { return rng.uniform(0.0, 0.7); }

}  // namespace pcvae
