#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "gmmem/core_model.hpp"
#include "gmmem/error.hpp"
#include "gmmem/rng.hpp"

namespace gmmem {

/// Mixing-weight profile: uniform, geometric (w_i proportional to ratio^i),
/// or an explicit list normalized to sum 1.
struct WeightProfile {
  enum class Kind { uniform, geometric, explicit_values };
  Kind kind = Kind::uniform;
  double ratio = 1.0;
  std::vector<double> values;

  static WeightProfile uniform() { return {}; }
  static WeightProfile geometric(double r) { return {Kind::geometric, r, {}}; }
  static WeightProfile explicit_weights(std::vector<double> w) {
    return {Kind::explicit_values, 1.0, std::move(w)};
  }

  std::vector<double> resolve(std::size_t k) const {
    std::vector<double> w(k, 1.0);
    switch (kind) {
      case Kind::uniform:
        break;
      case Kind::geometric:
        if (!(ratio > 0.0) || !std::isfinite(ratio)) {
          throw Error(ErrorKind::invalid_argument, "geometric weight ratio must be positive");
        }
        for (std::size_t i = 1; i < k; ++i) w[i] = w[i - 1] * ratio;
        break;
      case Kind::explicit_values:
        if (values.size() != k) {
          throw Error(ErrorKind::invalid_argument, "explicit weight profile needs exactly k entries");
        }
        w = values;
        break;
    }
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (!(w[i] > 0.0) || !std::isfinite(w[i])) {
        throw Error(ErrorKind::invalid_argument, "weight profile entries must be positive", i);
      }
      total += w[i];
    }
    for (auto& x : w) x /= total;
    return w;
  }
};

/// Variance profile: unit, geometric (sigma_i^2 = ratio^i), or explicit.
struct VarianceProfile {
  enum class Kind { unit, geometric, explicit_values };
  Kind kind = Kind::unit;
  double ratio = 1.0;
  std::vector<double> values;

  static VarianceProfile unit() { return {}; }
  static VarianceProfile geometric(double r) { return {Kind::geometric, r, {}}; }
  static VarianceProfile explicit_variances(std::vector<double> v) {
    return {Kind::explicit_values, 1.0, std::move(v)};
  }

  std::vector<double> resolve(std::size_t k) const {
    std::vector<double> v(k, 1.0);
    switch (kind) {
      case Kind::unit:
        break;
      case Kind::geometric:
        if (!(ratio > 0.0) || !std::isfinite(ratio)) {
          throw Error(ErrorKind::invalid_argument, "geometric variance ratio must be positive");
        }
        for (std::size_t i = 1; i < k; ++i) v[i] = v[i - 1] * ratio;
        break;
      case Kind::explicit_values:
        if (values.size() != k) {
          throw Error(ErrorKind::invalid_argument, "explicit variance profile needs exactly k entries");
        }
        v = values;
        break;
    }
    for (std::size_t i = 0; i < k; ++i) {
      if (!(v[i] > 0.0) || !std::isfinite(v[i])) {
        throw Error(ErrorKind::invalid_argument, "variance profile entries must be positive", i);
      }
    }
    return v;
  }
};

/// The separation constant used by the generators.
inline constexpr double kSeparationConstant = 64.0;

/// Draws n labeled samples: component i with probability pi_i, then
/// N(mu_i, sigma_i^2 I_d).
inline Dataset sample_dataset(const GmmSpec& spec, std::size_t n, SeededRng& rng) {
  if (n == 0) throw Error(ErrorKind::invalid_argument, "sample count n must be at least 1");
  const std::size_t k = spec.k(), d = spec.d();
  std::vector<double> cumulative(k);
  double acc = 0.0;
  for (std::size_t i = 0; i < k; ++i) cumulative[i] = (acc += spec.weight(i));

  std::vector<double> sigmas(k);
  for (std::size_t i = 0; i < k; ++i) sigmas[i] = spec.sigma(i);

  std::vector<double> values(n * d);
  std::vector<std::size_t> labels(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double u = rng.uniform() * acc;
    std::size_t label = k - 1;
    for (std::size_t i = 0; i + 1 < k; ++i) {
      if (u < cumulative[i]) {
        label = i;
        break;
      }
    }
    labels[j] = label;
    const auto mean = spec.mean(label);
    double* row = values.data() + j * d;
    for (std::size_t c = 0; c < d; ++c) row[c] = mean[c] + sigmas[label] * rng.normal();
  }
  return Dataset(d, std::move(values), std::move(labels));
}

/// Generates a spec whose separation margin is at least
/// margin_multiple * 64. Means are i.i.d. N(0, I_d) draws rescaled jointly
/// so the closest pair sits at the requested margin.
inline GmmSpec make_separated_spec(std::size_t k, std::size_t d, double margin_multiple,
                                   const WeightProfile& weight_profile,
                                   const VarianceProfile& variance_profile, SeededRng& rng) {
  if (k == 0) throw Error(ErrorKind::invalid_argument, "k must be at least 1");
  if (d == 0) throw Error(ErrorKind::invalid_argument, "d must be at least 1");
  if (!(margin_multiple >= 1.0) || !std::isfinite(margin_multiple)) {
    throw Error(ErrorKind::invalid_argument, "margin_multiple must be a finite value >= 1");
  }
  const std::vector<double> weights = weight_profile.resolve(k);
  const std::vector<double> variances = variance_profile.resolve(k);
  const double target = margin_multiple * kSeparationConstant;

  auto build = [&](const std::vector<std::vector<double>>& means, double scale) {
    std::vector<Component> comps;
    comps.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      std::vector<double> m = means[i];
      for (auto& x : m) x *= scale;
      comps.push_back({weights[i], std::move(m), variances[i]});
    }
    return GmmSpec(d, std::move(comps));
  };

  for (;;) {
    std::vector<std::vector<double>> raw(k, std::vector<double>(d));
    for (auto& m : raw) {
      for (auto& x : m) x = rng.normal();
    }
    if (k == 1) return build(raw, 1.0);
    const double margin = check_separation(build(raw, 1.0), target).margin;
    if (!(margin > 0.0) || !std::isfinite(margin)) continue;
    double scale = target / margin;
    GmmSpec spec = build(raw, scale);
    // Rounding can leave the margin a few ulps short of the target.
    while (!check_separation(spec, target).holds) {
      scale *= 1.0 + 1e-14;
      spec = build(raw, scale);
    }
    return spec;
  }
}

/// Radius of the mean-initialization ball around component i:
/// (sigma_i / 16) * min_{j != i} ||mu_i - mu_j|| / (sigma_i v sigma_j).
/// Zero for a single-component mixture.
inline double mean_init_radius(const GmmSpec& truth, std::size_t i) {
  if (truth.k() == 1) return 0.0;
  double ratio = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < truth.k(); ++j) {
    if (j == i) continue;
    const double r = detail::distance(truth.mean(i), truth.mean(j));
    ratio = std::min(ratio, r / std::max(truth.sigma(i), truth.sigma(j)));
  }
  return truth.sigma(i) / 16.0 * ratio;
}

/// True when `init` lies inside the initialization basin around `truth`:
/// means within mean_init_radius, |pi - pi*| <= pi*/2, and
/// |sigma^2 - sigma*^2| <= 0.5 sigma*^2 / sqrt(d). Components are compared
/// index by index. `rel_tol` absorbs rounding on the boundary.
inline bool in_init_basin(const GmmSpec& init, const GmmSpec& truth, double rel_tol = 1e-12) {
  detail::require_same_shape(init, truth);
  const double sqrt_d = std::sqrt(static_cast<double>(truth.d()));
  for (std::size_t i = 0; i < truth.k(); ++i) {
    const double radius = mean_init_radius(truth, i);
    if (detail::distance(init.mean(i), truth.mean(i)) > radius * (1.0 + rel_tol) + 1e-300) return false;
    if (std::abs(init.weight(i) - truth.weight(i)) > truth.weight(i) / 2.0 * (1.0 + rel_tol)) return false;
    if (std::abs(init.variance(i) - truth.variance(i)) > 0.5 * truth.variance(i) / sqrt_d * (1.0 + rel_tol)) {
      return false;
    }
  }
  return true;
}

/// Random initialization at controlled distance from `truth`. With all
/// fractions 1 each mean sits on the boundary of its initialization ball,
/// each weight is scaled by 1 +/- 0.5 before renormalization, and each
/// variance by 1 +/- 0.5/sqrt(d). Draws that leave the basin after weight
/// renormalization are rejected (up to 100 attempts).
inline GmmSpec perturb_params(const GmmSpec& truth, double mean_frac, double weight_frac,
                              double var_frac, SeededRng& rng) {
  for (double f : {mean_frac, weight_frac, var_frac}) {
    if (!(f >= 0.0 && f <= 1.0)) {
      throw Error(ErrorKind::invalid_argument, "perturbation fractions must lie in [0, 1]");
    }
  }
  const std::size_t k = truth.k(), d = truth.d();
  const double sqrt_d = std::sqrt(static_cast<double>(d));
  constexpr int kMaxAttempts = 100;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<Component> comps;
    comps.reserve(k);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      Component c = truth.component(i);
      const double radius = mean_frac * mean_init_radius(truth, i);
      const std::vector<double> dir = rng.unit_vector(d);
      for (std::size_t a = 0; a < d; ++a) c.mean[a] += radius * dir[a];
      c.weight *= 1.0 + rng.sign() * weight_frac * 0.5;
      c.variance *= 1.0 + rng.sign() * var_frac * 0.5 / sqrt_d;
      total += c.weight;
      comps.push_back(std::move(c));
    }
    for (auto& c : comps) c.weight /= total;
    GmmSpec out(d, std::move(comps));
    if (in_init_basin(out, truth)) return out;
  }
  throw Error(ErrorKind::invalid_argument,
              "could not draw a perturbation inside the initialization basin in 100 attempts");
}

/// Moves every mean by exactly `fraction` of the minimum pairwise mean
/// distance in an independent uniformly random direction.
inline std::vector<std::vector<double>> displace_means(const GmmSpec& truth, double fraction,
                                                       SeededRng& rng) {
  double min_dist = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < truth.k(); ++i) {
    for (std::size_t j = i + 1; j < truth.k(); ++j) {
      min_dist = std::min(min_dist, detail::distance(truth.mean(i), truth.mean(j)));
    }
  }
  if (!std::isfinite(min_dist)) min_dist = 0.0;
  std::vector<std::vector<double>> out;
  for (std::size_t i = 0; i < truth.k(); ++i) {
    std::vector<double> m(truth.mean(i).begin(), truth.mean(i).end());
    const std::vector<double> dir = rng.unit_vector(truth.d());
    for (std::size_t a = 0; a < truth.d(); ++a) m[a] += fraction * min_dist * dir[a];
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace gmmem
