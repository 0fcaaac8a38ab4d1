#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmmem/core_model.hpp"
#include "gmmem/error.hpp"
#include "gmmem/parallel.hpp"

namespace gmmem {

/// n x k matrix of E-step posteriors, row-major.
class Responsibilities {
 public:
  Responsibilities(std::size_t n, std::size_t k) : n_(n), k_(k), values_(n * k, 0.0) {}
  Responsibilities(std::size_t n, std::size_t k, std::vector<double> values)
      : n_(n), k_(k), values_(std::move(values)) {
    if (values_.size() != n_ * k_) {
      throw Error(ErrorKind::dimension_mismatch, "responsibility matrix has wrong size");
    }
  }

  std::size_t n() const noexcept { return n_; }
  std::size_t k() const noexcept { return k_; }

  double operator()(std::size_t j, std::size_t i) const { return values_[j * k_ + i]; }
  double& operator()(std::size_t j, std::size_t i) { return values_[j * k_ + i]; }

  std::span<const double> row(std::size_t j) const {
    return std::span<const double>(values_).subspan(j * k_, k_);
  }
  std::span<double> row(std::size_t j) { return std::span<double>(values_).subspan(j * k_, k_); }

 private:
  std::size_t n_;
  std::size_t k_;
  std::vector<double> values_;
};

enum class EmMode { plain, sample_split };

struct EmConfig {
  std::size_t max_iters = 50;
  double tol = 1e-8;
  EmMode mode = EmMode::plain;
  std::size_t batches = 1;  // equals max_iters in sample_split mode
  std::optional<double> variance_floor;  // default: 1e-12 * data second moment

  /// Default iteration budget for a tolerance: ceil(log2(1/tol)) + 5.
  static std::size_t default_max_iters(double tol) {
    if (!(tol > 0.0) || !std::isfinite(tol) || tol >= 1.0) return 5;
    return static_cast<std::size_t>(std::ceil(std::log2(1.0 / tol))) + 5;
  }

  static EmConfig plain(double tol, std::optional<std::size_t> max_iters = std::nullopt) {
    EmConfig cfg;
    cfg.tol = tol;
    cfg.max_iters = max_iters.value_or(default_max_iters(tol));
    cfg.batches = cfg.max_iters;
    return cfg;
  }

  static EmConfig split(std::size_t batches, double tol = 0.0) {
    EmConfig cfg;
    cfg.mode = EmMode::sample_split;
    cfg.tol = tol;
    cfg.max_iters = batches;
    cfg.batches = batches;
    return cfg;
  }

  void validate() const {
    if (max_iters == 0) throw Error(ErrorKind::invalid_argument, "max_iters must be positive");
    if (std::isnan(tol) || tol < 0.0) throw Error(ErrorKind::invalid_argument, "tol must be nonnegative");
    if (mode == EmMode::sample_split) {
      if (batches == 0) throw Error(ErrorKind::invalid_argument, "batches must be positive");
      if (batches != max_iters) {
        throw Error(ErrorKind::invalid_argument,
                    "sample_split mode requires batches == max_iters (got " + std::to_string(batches) +
                        " and " + std::to_string(max_iters) + ")");
      }
    }
    if (variance_floor && !(*variance_floor > 0.0)) {
      throw Error(ErrorKind::invalid_argument, "variance_floor must be positive");
    }
  }
};

namespace detail {

inline void require_dims(const GmmSpec& params, const Dataset& data) {
  if (params.d() != data.d()) {
    throw Error(ErrorKind::dimension_mismatch, "parameters have d=" + std::to_string(params.d()) +
                                                   " but data has d=" + std::to_string(data.d()));
  }
}

// Per-component constant log pi_i - (d/2) log sigma_i^2 and 1 / (2 sigma_i^2).
struct LogTerms {
  std::vector<double> offset;
  std::vector<double> inv_two_var;
};

inline LogTerms log_terms(const GmmSpec& params) {
  LogTerms t;
  const double half_d = 0.5 * static_cast<double>(params.d());
  for (std::size_t i = 0; i < params.k(); ++i) {
    t.offset.push_back(std::log(params.weight(i)) - half_d * std::log(params.variance(i)));
    t.inv_two_var.push_back(0.5 / params.variance(i));
  }
  return t;
}

// Fills `scores` with the unnormalized log posteriors of x and returns their
// log-sum-exp.
inline double log_scores(const GmmSpec& params, const LogTerms& terms, std::span<const double> x,
                         std::span<double> scores) {
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < params.k(); ++i) {
    scores[i] = terms.offset[i] - squared_distance(x, params.mean(i)) * terms.inv_two_var[i];
    best = std::max(best, scores[i]);
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < params.k(); ++i) sum += std::exp(scores[i] - best);
  return best + std::log(sum);
}

inline constexpr std::size_t kRowChunk = 16384;

}  // namespace detail

/// E-step: w_i(x) proportional to pi_i exp(-||x - mu_i||^2 / (2 sigma_i^2)
/// - d log(sigma_i^2) / 2), normalized in the log domain.
inline Responsibilities e_step(const GmmSpec& params, const Dataset& data) {
  detail::require_dims(params, data);
  const std::size_t n = data.n(), k = params.k();
  const detail::LogTerms terms = detail::log_terms(params);
  Responsibilities resp(n, k);
  parallel_for(n, detail::kRowChunk, [&](std::size_t begin, std::size_t end) {
    std::vector<double> scores(k);
    for (std::size_t j = begin; j < end; ++j) {
      const double lse = detail::log_scores(params, terms, data.row(j), scores);
      auto out = resp.row(j);
      for (std::size_t i = 0; i < k; ++i) out[i] = std::exp(scores[i] - lse);
    }
  });
  return resp;
}

/// Empirical M-step. Weights are column sums over n, means are
/// responsibility-weighted averages, and variances use the updated means:
/// sigma_i^2 = max(floor, sum_j w_ij ||x_j - mu_i+||^2 / (d sum_j w_ij)).
/// Sums run sequentially in row order.
inline GmmSpec m_step(const Dataset& data, const Responsibilities& resp, double variance_floor) {
  if (resp.n() != data.n()) {
    throw Error(ErrorKind::dimension_mismatch, "responsibilities have " + std::to_string(resp.n()) +
                                                   " rows but data has " + std::to_string(data.n()));
  }
  if (!(variance_floor > 0.0)) throw Error(ErrorKind::invalid_argument, "variance_floor must be positive");
  const std::size_t n = data.n(), d = data.d(), k = resp.k();
  if (n == 0 || k == 0) throw Error(ErrorKind::invalid_argument, "m_step needs n >= 1 and k >= 1");

  std::vector<double> mass(k, 0.0);
  std::vector<std::vector<double>> sums(k, std::vector<double>(d, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    const auto x = data.row(j);
    const auto w = resp.row(j);
    for (std::size_t i = 0; i < k; ++i) {
      mass[i] += w[i];
      for (std::size_t c = 0; c < d; ++c) sums[i][c] += w[i] * x[c];
    }
  }
  double total_mass = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(mass[i] > 0.0)) {
      throw Error(ErrorKind::empty_component,
                  "component " + std::to_string(i) + " received zero total responsibility", i);
    }
    total_mass += mass[i];
    for (auto& s : sums[i]) s /= mass[i];
    for (double s : sums[i]) {
      if (!std::isfinite(s)) {
        throw Error(ErrorKind::empty_component,
                    "component " + std::to_string(i) + " mean is not finite (vanishing responsibility)", i);
      }
    }
  }

  std::vector<double> scatter(k, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const auto x = data.row(j);
    const auto w = resp.row(j);
    for (std::size_t i = 0; i < k; ++i) scatter[i] += w[i] * detail::squared_distance(x, sums[i]);
  }

  std::vector<Component> comps;
  comps.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    const double var = scatter[i] / (static_cast<double>(d) * mass[i]);
    // Rows sum to one, so total_mass equals n up to rounding.
    comps.push_back({mass[i] / total_mass, std::move(sums[i]), std::max(variance_floor, var)});
  }
  return GmmSpec(d, std::move(comps));
}

/// 1e-12 times the mean squared coordinate of the data, kept positive.
inline double default_variance_floor(const Dataset& data) {
  double s = 0.0;
  for (double v : data.values()) s += v * v;
  const double second_moment = s / static_cast<double>(std::max<std::size_t>(1, data.values().size()));
  return std::max(1e-12 * second_moment, std::numeric_limits<double>::min());
}

inline GmmSpec em_step(const GmmSpec& params, const Dataset& data, const EmConfig& cfg) {
  const double floor = cfg.variance_floor.value_or(default_variance_floor(data));
  return m_step(data, e_step(params, data), floor);
}

/// Average per-sample log density (1/n) sum_j log sum_i pi_i phi(x_j).
inline double log_likelihood(const GmmSpec& params, const Dataset& data) {
  detail::require_dims(params, data);
  const std::size_t n = data.n(), k = params.k();
  if (n == 0) throw Error(ErrorKind::invalid_argument, "log_likelihood needs at least one sample");
  const detail::LogTerms terms = detail::log_terms(params);
  std::vector<double> per_row(n);
  parallel_for(n, detail::kRowChunk, [&](std::size_t begin, std::size_t end) {
    std::vector<double> scores(k);
    for (std::size_t j = begin; j < end; ++j) per_row[j] = detail::log_scores(params, terms, data.row(j), scores);
  });
  double total = 0.0;
  for (double v : per_row) total += v;
  const double normalizer = 0.5 * static_cast<double>(params.d()) * std::log(2.0 * std::numbers::pi);
  return total / static_cast<double>(n) - normalizer;
}

/// Largest normalized change from `previous` to `next`, index by index, in
/// the units of `previous`.
inline double parameter_change(const GmmSpec& next, const GmmSpec& previous) {
  return d_m(next, previous, MatchResult::identity(previous.k()));
}

struct TraceEntry {
  GmmSpec estimate;
  std::optional<double> d_m;  // matched against truth when known
  double loglik = 0.0;        // on the data (plain) or batch (split) used
};

struct FitTrace {
  std::vector<TraceEntry> entries;  // entries[0] is the initialization
  bool converged = false;

  const GmmSpec& final_estimate() const { return entries.back().estimate; }
  std::size_t iterations() const { return entries.empty() ? 0 : entries.size() - 1; }
};

/// EM from `init`. Plain mode updates on the full dataset every iteration;
/// sample_split mode runs iteration t on the t-th contiguous batch of size
/// floor(n / batches). Stops after max_iters or once the parameter change
/// between successive iterates falls below tol.
inline FitTrace fit(const GmmSpec& init, const Dataset& data, const EmConfig& cfg,
                    const std::optional<GmmSpec>& truth = std::nullopt) {
  cfg.validate();
  detail::require_dims(init, data);
  if (truth) detail::require_same_shape(init, *truth);

  const bool split = cfg.mode == EmMode::sample_split;
  std::size_t batch_size = data.n();
  if (split) {
    batch_size = data.n() / cfg.batches;
    if (batch_size == 0) {
      throw Error(ErrorKind::empty_batch, "n=" + std::to_string(data.n()) + " is smaller than batches=" +
                                              std::to_string(cfg.batches));
    }
  }
  const double floor = cfg.variance_floor.value_or(default_variance_floor(data));
  auto batch = [&](std::size_t t) { return data.slice(t * batch_size, (t + 1) * batch_size); };

  auto score = [&](const GmmSpec& est) -> std::optional<double> {
    if (!truth) return std::nullopt;
    return matched_d_m(est, *truth);
  };

  FitTrace trace;
  {
    const double ll = split ? log_likelihood(init, batch(0)) : log_likelihood(init, data);
    trace.entries.push_back({init, score(init), ll});
  }
  for (std::size_t t = 0; t < cfg.max_iters; ++t) {
    const GmmSpec& prev = trace.entries.back().estimate;
    GmmSpec next = [&] {
      if (!split) return m_step(data, e_step(prev, data), floor);
      const Dataset b = batch(t);
      return m_step(b, e_step(prev, b), floor);
    }();
    const double change = parameter_change(next, prev);
    const double ll = split ? log_likelihood(next, batch(t)) : log_likelihood(next, data);
    auto dm = score(next);
    trace.entries.push_back({std::move(next), dm, ll});
    if (change < cfg.tol) {
      trace.converged = true;
      break;
    }
  }
  return trace;
}

}  // namespace gmmem
