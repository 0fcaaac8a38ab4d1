#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gmmem/error.hpp"

namespace gmmem {

/// One spherical Gaussian component: weight, mean, and variance sigma^2
/// (covariance is variance * I_d).
struct Component {
  double weight = 0.0;
  std::vector<double> mean;
  double variance = 1.0;

  bool operator==(const Component&) const = default;
};

/// Parameters of a mixture of k spherical Gaussians in R^d.
///
/// Construction validates the invariants: k >= 1, every mean has d
/// coordinates, weights are positive and sum to one within 1e-12, and
/// variances are positive. Instances are immutable after construction.
class GmmSpec {
 public:
  static constexpr double kWeightSumTolerance = 1e-12;

  GmmSpec(std::size_t d, std::vector<Component> components)
      : d_(d), components_(std::move(components)) {
    validate();
  }

  std::size_t k() const noexcept { return components_.size(); }
  std::size_t d() const noexcept { return d_; }

  const std::vector<Component>& components() const noexcept { return components_; }
  const Component& component(std::size_t i) const { return components_.at(i); }

  double weight(std::size_t i) const { return components_.at(i).weight; }
  std::span<const double> mean(std::size_t i) const { return components_.at(i).mean; }
  double variance(std::size_t i) const { return components_.at(i).variance; }
  double sigma(std::size_t i) const { return std::sqrt(components_.at(i).variance); }

  std::vector<double> weights() const {
    std::vector<double> out;
    out.reserve(k());
    for (const auto& c : components_) out.push_back(c.weight);
    return out;
  }

  /// Returns a spec whose component i is this spec's component order[i].
  GmmSpec permuted(std::span<const std::size_t> order) const {
    if (order.size() != k()) {
      throw Error(ErrorKind::invalid_argument, "permutation length does not match k");
    }
    std::vector<bool> seen(k(), false);
    std::vector<Component> out;
    out.reserve(k());
    for (std::size_t idx : order) {
      if (idx >= k() || seen[idx]) {
        throw Error(ErrorKind::invalid_argument, "order is not a permutation of [0, k)");
      }
      seen[idx] = true;
      out.push_back(components_[idx]);
    }
    return GmmSpec(d_, std::move(out));
  }

  bool operator==(const GmmSpec&) const = default;

 private:
  void validate() const {
    if (d_ == 0) throw Error(ErrorKind::invalid_spec, "dimension d must be positive");
    if (components_.empty()) throw Error(ErrorKind::invalid_spec, "k must be at least 1");
    double total = 0.0;
    for (std::size_t i = 0; i < components_.size(); ++i) {
      const auto& c = components_[i];
      if (!(c.weight > 0.0) || !std::isfinite(c.weight)) {
        throw Error(ErrorKind::invalid_spec, "weight must be positive and finite", i);
      }
      if (!(c.variance > 0.0) || !std::isfinite(c.variance)) {
        throw Error(ErrorKind::invalid_spec, "variance must be positive and finite", i);
      }
      if (c.mean.size() != d_) {
        throw Error(ErrorKind::invalid_spec,
                    "mean has " + std::to_string(c.mean.size()) + " coordinates, expected " +
                        std::to_string(d_),
                    i);
      }
      for (double x : c.mean) {
        if (!std::isfinite(x)) throw Error(ErrorKind::invalid_spec, "mean is not finite", i);
      }
      total += c.weight;
    }
    if (std::abs(total - 1.0) > kWeightSumTolerance) {
      throw Error(ErrorKind::invalid_spec, "weights must sum to 1 (got " + std::to_string(total) + ")");
    }
  }

  std::size_t d_;
  std::vector<Component> components_;
};

/// n samples in R^d stored row-major, with optional ground-truth labels.
class Dataset {
 public:
  Dataset(std::size_t d, std::vector<double> values,
          std::optional<std::vector<std::size_t>> labels = std::nullopt)
      : d_(d), values_(std::move(values)), labels_(std::move(labels)) {
    if (d_ == 0) throw Error(ErrorKind::invalid_argument, "dataset dimension must be positive");
    if (values_.size() % d_ != 0) {
      throw Error(ErrorKind::dimension_mismatch, "value count is not a multiple of d");
    }
    if (labels_ && labels_->size() != n()) {
      throw Error(ErrorKind::dimension_mismatch, "label count does not match sample count");
    }
  }

  std::size_t n() const noexcept { return values_.size() / d_; }
  std::size_t d() const noexcept { return d_; }

  std::span<const double> row(std::size_t j) const {
    return std::span<const double>(values_).subspan(j * d_, d_);
  }
  std::span<const double> values() const noexcept { return values_; }

  bool has_labels() const noexcept { return labels_.has_value(); }
  const std::optional<std::vector<std::size_t>>& labels() const noexcept { return labels_; }

  /// Checks every label lies in [0, k).
  void validate_labels(std::size_t k) const {
    if (!labels_) return;
    for (std::size_t j = 0; j < labels_->size(); ++j) {
      if ((*labels_)[j] >= k) {
        throw Error(ErrorKind::invalid_argument,
                    "label " + std::to_string((*labels_)[j]) + " at row " + std::to_string(j) +
                        " is outside [0, " + std::to_string(k) + ")");
      }
    }
  }

  /// Contiguous rows [begin, end) as a new dataset.
  Dataset slice(std::size_t begin, std::size_t end) const {
    if (begin > end || end > n()) throw Error(ErrorKind::invalid_argument, "slice out of range");
    std::vector<double> vals(values_.begin() + static_cast<std::ptrdiff_t>(begin * d_),
                             values_.begin() + static_cast<std::ptrdiff_t>(end * d_));
    std::optional<std::vector<std::size_t>> labs;
    if (labels_) {
      labs.emplace(labels_->begin() + static_cast<std::ptrdiff_t>(begin),
                   labels_->begin() + static_cast<std::ptrdiff_t>(end));
    }
    return Dataset(d_, std::move(vals), std::move(labs));
  }

  /// Adds `shift` to every sample.
  Dataset translated(std::span<const double> shift) const {
    if (shift.size() != d_) throw Error(ErrorKind::dimension_mismatch, "shift has wrong dimension");
    std::vector<double> vals = values_;
    for (std::size_t j = 0; j < n(); ++j) {
      for (std::size_t c = 0; c < d_; ++c) vals[j * d_ + c] += shift[c];
    }
    return Dataset(d_, std::move(vals), labels_);
  }

  bool operator==(const Dataset&) const = default;

 private:
  std::size_t d_;
  std::vector<double> values_;
  std::optional<std::vector<std::size_t>> labels_;
};

namespace detail {

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t c = 0; c < a.size(); ++c) {
    const double diff = a[c] - b[c];
    s += diff * diff;
  }
  return s;
}

inline double distance(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(squared_distance(a, b));
}

inline void require_same_shape(const GmmSpec& a, const GmmSpec& b) {
  if (a.k() != b.k()) {
    throw Error(ErrorKind::dimension_mismatch,
                "component count mismatch: " + std::to_string(a.k()) + " vs " + std::to_string(b.k()));
  }
  if (a.d() != b.d()) {
    throw Error(ErrorKind::dimension_mismatch,
                "dimension mismatch: " + std::to_string(a.d()) + " vs " + std::to_string(b.d()));
  }
}

}  // namespace detail

struct DerivedStats {
  double pi_min = 0.0;
  double rho_pi = 1.0;
  double rho_sigma = 1.0;  // ratio of standard deviations, not variances
  std::vector<std::vector<double>> pairwise_distances;
};

inline DerivedStats derived_stats(const GmmSpec& spec) {
  DerivedStats out;
  const std::size_t k = spec.k();
  double w_min = spec.weight(0), w_max = spec.weight(0);
  double s_min = spec.sigma(0), s_max = spec.sigma(0);
  for (std::size_t i = 1; i < k; ++i) {
    w_min = std::min(w_min, spec.weight(i));
    w_max = std::max(w_max, spec.weight(i));
    s_min = std::min(s_min, spec.sigma(i));
    s_max = std::max(s_max, spec.sigma(i));
  }
  out.pi_min = w_min;
  out.rho_pi = w_max / w_min;
  out.rho_sigma = s_max / s_min;
  out.pairwise_distances.assign(k, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double r = detail::distance(spec.mean(i), spec.mean(j));
      out.pairwise_distances[i][j] = r;
      out.pairwise_distances[j][i] = r;
    }
  }
  return out;
}

struct SeparationCheck {
  bool holds = true;
  double margin = std::numeric_limits<double>::infinity();
};

/// Separation margin: min over pairs of ||mu_i - mu_j|| divided by
/// (sigma_i v sigma_j) * sqrt(log k + log(rho_sigma * rho_pi)).
/// The condition holds when margin >= C. A single component always holds.
inline SeparationCheck check_separation(const GmmSpec& spec, double C) {
  if (!(C > 0.0)) throw Error(ErrorKind::invalid_argument, "separation constant C must be positive");
  SeparationCheck out;
  const std::size_t k = spec.k();
  if (k == 1) return out;
  const DerivedStats stats = derived_stats(spec);
  const double log_term = std::sqrt(std::log(static_cast<double>(k)) + std::log(stats.rho_sigma * stats.rho_pi));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i + 1; j < k; ++j) {
      const double scale = std::max(spec.sigma(i), spec.sigma(j)) * log_term;
      out.margin = std::min(out.margin, stats.pairwise_distances[i][j] / scale);
    }
  }
  out.holds = out.margin >= C;
  return out;
}

/// Normalized per-component errors of an estimate against a reference.
/// `est_of_true[i]` is the estimated component paired with true component i.
struct ComponentErrors {
  std::vector<double> mean_err;
  std::vector<double> weight_err;
  std::vector<double> var_err;
};

inline ComponentErrors component_errors(const GmmSpec& estimate, const GmmSpec& truth,
                                        std::span<const std::size_t> est_of_true) {
  detail::require_same_shape(estimate, truth);
  if (est_of_true.size() != truth.k()) {
    throw Error(ErrorKind::invalid_argument, "permutation length does not match k");
  }
  const double sqrt_d = std::sqrt(static_cast<double>(truth.d()));
  ComponentErrors out;
  for (std::size_t i = 0; i < truth.k(); ++i) {
    const std::size_t e = est_of_true[i];
    if (e >= estimate.k()) throw Error(ErrorKind::invalid_argument, "permutation index out of range");
    const double var_true = truth.variance(i);
    out.mean_err.push_back(detail::distance(estimate.mean(e), truth.mean(i)) / truth.sigma(i));
    out.weight_err.push_back(std::abs(estimate.weight(e) - truth.weight(i)) / truth.weight(i));
    out.var_err.push_back(sqrt_d * std::abs(estimate.variance(e) - var_true) / var_true);
  }
  return out;
}

/// Pairing of estimated to true components and the error terms under it.
struct MatchResult {
  std::vector<std::size_t> est_of_true;  // estimated index matched to each true index
  std::vector<std::size_t> true_of_est;  // inverse of est_of_true
  std::vector<double> mean_err;
  std::vector<double> weight_err;
  std::vector<double> var_err;

  static MatchResult identity(std::size_t k) {
    MatchResult m;
    m.est_of_true.resize(k);
    std::iota(m.est_of_true.begin(), m.est_of_true.end(), std::size_t{0});
    m.true_of_est = m.est_of_true;
    return m;
  }
};

namespace detail {

/// Minimum-cost perfect assignment on a square cost matrix (Hungarian method
/// with row/column potentials, O(k^3)). Returns col_of_row.
inline std::vector<std::size_t> hungarian(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  if (n == 0) return {};
  constexpr double inf = std::numeric_limits<double>::infinity();
  // 1-based indexing; index 0 is a virtual column.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<bool> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col_of_row(n);
  for (std::size_t j = 1; j <= n; ++j) col_of_row[p[j] - 1] = j - 1;
  return col_of_row;
}

inline double assignment_cost(const std::vector<std::vector<double>>& cost,
                              std::span<const std::size_t> col_of_row) {
  double total = 0.0;
  for (std::size_t i = 0; i < col_of_row.size(); ++i) total += cost[i][col_of_row[i]];
  return total;
}

/// Optimal assignment with ties resolved toward the lexicographically smallest
/// col_of_row: row 0 takes the lowest column compatible with an optimum, then
/// row 1, and so on.
inline std::vector<std::size_t> canonical_assignment(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  const double optimum = assignment_cost(cost, hungarian(cost));
  const double tol = 1e-12 * std::max(1.0, std::abs(optimum));

  std::vector<std::size_t> result(n);
  std::vector<bool> col_taken(n, false);
  double fixed_cost = 0.0;
  for (std::size_t row = 0; row < n; ++row) {
    bool placed = false;
    for (std::size_t col = 0; col < n && !placed; ++col) {
      if (col_taken[col]) continue;
      // Optimum over the remaining rows/columns once (row, col) is fixed.
      std::vector<std::size_t> rest_rows, rest_cols;
      for (std::size_t r = row + 1; r < n; ++r) rest_rows.push_back(r);
      for (std::size_t c = 0; c < n; ++c) {
        if (!col_taken[c] && c != col) rest_cols.push_back(c);
      }
      std::vector<std::vector<double>> sub(rest_rows.size(), std::vector<double>(rest_cols.size()));
      for (std::size_t a = 0; a < rest_rows.size(); ++a) {
        for (std::size_t b = 0; b < rest_cols.size(); ++b) sub[a][b] = cost[rest_rows[a]][rest_cols[b]];
      }
      const double rest = sub.empty() ? 0.0 : assignment_cost(sub, hungarian(sub));
      if (fixed_cost + cost[row][col] + rest <= optimum + tol) {
        result[row] = col;
        col_taken[col] = true;
        fixed_cost += cost[row][col];
        placed = true;
      }
    }
    if (!placed) {
      // Only reachable through non-finite costs; fall back to the raw optimum.
      return hungarian(cost);
    }
  }
  return result;
}

inline MatchResult make_match(const GmmSpec& estimate, const GmmSpec& truth,
                              std::vector<std::size_t> est_of_true) {
  MatchResult m;
  m.true_of_est.assign(est_of_true.size(), 0);
  for (std::size_t i = 0; i < est_of_true.size(); ++i) m.true_of_est[est_of_true[i]] = i;
  ComponentErrors errs = component_errors(estimate, truth, est_of_true);
  m.est_of_true = std::move(est_of_true);
  m.mean_err = std::move(errs.mean_err);
  m.weight_err = std::move(errs.weight_err);
  m.var_err = std::move(errs.var_err);
  return m;
}

}  // namespace detail

/// Pairs estimated components with true components by minimizing
/// sum_i ||mu_hat_{perm(i)} - mu_i*|| / sigma_i* exactly. Among optimal
/// pairings, lower true indices receive lower estimated indices.
inline MatchResult match_components(const GmmSpec& estimate, const GmmSpec& truth) {
  detail::require_same_shape(estimate, truth);
  const std::size_t k = truth.k();
  std::vector<std::vector<double>> cost(k, std::vector<double>(k));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t e = 0; e < k; ++e) {
      cost[i][e] = detail::distance(estimate.mean(e), truth.mean(i)) / truth.sigma(i);
    }
  }
  return detail::make_match(estimate, truth, detail::canonical_assignment(cost));
}

/// Worst normalized parameter error:
/// max_i max(||mu_i - mu_i*|| / sigma_i*, |pi_i - pi_i*| / pi_i*,
///           sqrt(d) |sigma_i^2 - sigma_i*^2| / sigma_i*^2).
inline double d_m(const GmmSpec& estimate, const GmmSpec& truth, const MatchResult& match) {
  const ComponentErrors errs = component_errors(estimate, truth, match.est_of_true);
  double worst = 0.0;
  for (std::size_t i = 0; i < truth.k(); ++i) {
    worst = std::max({worst, errs.mean_err[i], errs.weight_err[i], errs.var_err[i]});
  }
  return worst;
}

/// d_m after matching.
inline double matched_d_m(const GmmSpec& estimate, const GmmSpec& truth) {
  return d_m(estimate, truth, match_components(estimate, truth));
}

}  // namespace gmmem
