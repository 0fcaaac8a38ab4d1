#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gmmem/core_model.hpp"
#include "gmmem/em_engine.hpp"
#include "gmmem/error.hpp"
#include "gmmem/rng.hpp"
#include "gmmem/synth.hpp"

namespace gmmem {

/// beta = ||mu_i - mu_j||^2 / (64 (sigma_i v sigma_j)^2).
inline double beta(const GmmSpec& spec, std::size_t i, std::size_t j) {
  if (i >= spec.k() || j >= spec.k()) throw Error(ErrorKind::invalid_argument, "component index out of range");
  if (i == j) throw Error(ErrorKind::invalid_argument, "beta needs two distinct components");
  const double s = std::max(spec.sigma(i), spec.sigma(j));
  return detail::squared_distance(spec.mean(i), spec.mean(j)) / (64.0 * s * s);
}

struct EventFlags {
  bool e1 = false;  // projection onto the separating direction is not too negative
  bool e2 = false;  // projections onto the target/source mean errors are bounded
  bool e3 = false;  // ||v||^2 / sigma_j*^2 lies in the chi-square concentration band

  bool good() const noexcept { return e1 && e2 && e3; }
};

/// Good-event indicators for a sample x drawn from true component `source`,
/// relative to `target`. With v = x - mu*_source, R = ||mu*_source - mu*_target||,
/// and mean errors Delta_i = mu*_i - mu_i (truth minus estimate, components
/// aligned by index):
///   e1: -R^2/5 <= <v, mu*_source - mu*_target>
///   e2: -R^2/64 <= <v, Delta_target> and
///       <v, Delta_source> <= (sigma*_source / sigma*_target)^2 R^2 / 64
///   e3: d(1 - 2 sqrt(beta/d)) <= ||v||^2 / sigma*_source^2 <= d(1 + 2 sqrt(beta/d) + 2 beta/d)
inline EventFlags good_event_flags(std::span<const double> x, std::size_t source, std::size_t target,
                                   const GmmSpec& estimate, const GmmSpec& truth) {
  detail::require_same_shape(estimate, truth);
  if (source == target) throw Error(ErrorKind::invalid_argument, "source and target must differ");
  if (source >= truth.k() || target >= truth.k()) {
    throw Error(ErrorKind::invalid_argument, "component index out of range");
  }
  const std::size_t d = truth.d();
  if (x.size() != d) throw Error(ErrorKind::dimension_mismatch, "sample has wrong dimension");

  const auto mu_s = truth.mean(source);
  const auto mu_t = truth.mean(target);
  const auto est_s = estimate.mean(source);
  const auto est_t = estimate.mean(target);
  double v_sep = 0.0, v_dt = 0.0, v_ds = 0.0, v_norm2 = 0.0, r2 = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    const double v = x[c] - mu_s[c];
    const double sep = mu_s[c] - mu_t[c];
    v_sep += v * sep;
    v_dt += v * (mu_t[c] - est_t[c]);
    v_ds += v * (mu_s[c] - est_s[c]);
    v_norm2 += v * v;
    r2 += sep * sep;
  }
  const double b = beta(truth, target, source);
  const double dd = static_cast<double>(d);
  const double sigma_ratio2 = truth.variance(source) / truth.variance(target);
  const double scaled = v_norm2 / truth.variance(source);

  EventFlags f;
  f.e1 = -r2 / 5.0 <= v_sep;
  f.e2 = (-r2 / 64.0 <= v_dt) && (v_ds <= sigma_ratio2 * r2 / 64.0);
  f.e3 = dd * (1.0 - 2.0 * std::sqrt(b / dd)) <= scaled &&
         scaled <= dd * (1.0 + 2.0 * std::sqrt(b / dd) + 2.0 * b / dd);
  return f;
}

/// Bad-event statistics for the samples of one source component.
struct SourceEventReport {
  std::size_t source = 0;
  double beta = 0.0;
  std::size_t n_source = 0;
  std::size_t fail_e1 = 0, fail_e2 = 0, fail_e3 = 0, bad = 0;
  std::optional<double> empirical_bad_rate;  // absent when n_source == 0
  double theoretical_bound = 0.0;            // 5 exp(-beta)
  std::vector<EventFlags> flags;             // per label-`source` sample, dataset order

  /// Four-sigma binomial slack plus 4/n_source.
  double slack() const {
    if (n_source == 0) return 0.0;
    const double p = std::min(1.0, theoretical_bound);
    const double n = static_cast<double>(n_source);
    return 4.0 * std::sqrt(p * (1.0 - p) / n) + 4.0 / n;
  }

  bool within_bound() const {
    return !empirical_bad_rate || *empirical_bad_rate <= theoretical_bound + slack();
  }
};

struct GoodEventReport {
  std::size_t target = 0;
  std::vector<SourceEventReport> sources;  // one per source != target, ascending
};

/// Fraction of each source component's samples that fail the good event
/// relative to `target`, next to the bound 5 exp(-beta).
inline GoodEventReport bad_event_rate(const Dataset& data, const GmmSpec& estimate, const GmmSpec& truth,
                                      std::size_t target) {
  if (!data.has_labels()) {
    throw Error(ErrorKind::missing_labels, "bad-event rates need ground-truth labels");
  }
  detail::require_same_shape(estimate, truth);
  if (data.d() != truth.d()) throw Error(ErrorKind::dimension_mismatch, "data dimension differs from truth");
  if (target >= truth.k()) throw Error(ErrorKind::invalid_argument, "target index out of range");
  data.validate_labels(truth.k());

  GoodEventReport report;
  report.target = target;
  for (std::size_t j = 0; j < truth.k(); ++j) {
    if (j == target) continue;
    SourceEventReport src;
    src.source = j;
    src.beta = beta(truth, target, j);
    src.theoretical_bound = 5.0 * std::exp(-src.beta);
    report.sources.push_back(std::move(src));
  }
  auto slot = [&](std::size_t label) -> SourceEventReport* {
    if (label == target) return nullptr;
    return &report.sources[label < target ? label : label - 1];
  };
  const auto& labels = *data.labels();
  for (std::size_t row = 0; row < data.n(); ++row) {
    SourceEventReport* src = slot(labels[row]);
    if (!src) continue;
    const EventFlags f = good_event_flags(data.row(row), src->source, target, estimate, truth);
    ++src->n_source;
    src->fail_e1 += !f.e1;
    src->fail_e2 += !f.e2;
    src->fail_e3 += !f.e3;
    src->bad += !f.good();
    src->flags.push_back(f);
  }
  for (auto& src : report.sources) {
    if (src.n_source > 0) src.empirical_bad_rate = static_cast<double>(src.bad) / static_cast<double>(src.n_source);
  }
  return report;
}

/// Per-component maximum likelihood fit using the ground-truth labels.
inline GmmSpec labeled_mle(const Dataset& data, std::size_t k) {
  if (!data.has_labels()) throw Error(ErrorKind::missing_labels, "labeled fit needs labels");
  data.validate_labels(k);
  Responsibilities resp(data.n(), k);
  const auto& labels = *data.labels();
  for (std::size_t j = 0; j < data.n(); ++j) resp(j, labels[j]) = 1.0;
  return m_step(data, resp, std::numeric_limits<double>::min());
}

struct ResidualSummary {
  std::vector<double> values;  // one per seed, in seed order
  double median = 0.0;
  double max = 0.0;
};

inline double median_of(std::vector<double> v) {
  if (v.empty()) throw Error(ErrorKind::invalid_argument, "median of empty set");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size();
  return m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
}

inline ResidualSummary summarize(std::vector<double> values) {
  ResidualSummary s;
  s.median = median_of(values);
  s.max = *std::max_element(values.begin(), values.end());
  s.values = std::move(values);
  return s;
}

/// Stream used for dataset draws in the diagnostics; seeds select the sample.
inline constexpr std::uint64_t kDatasetStream = 1;

/// D_m after one EM step started at the truth, for each seed's dataset of
/// n samples.
inline ResidualSummary fixed_point_residual(const GmmSpec& truth, std::size_t n,
                                            std::span<const std::uint64_t> seeds) {
  if (n < truth.k() * 100) {
    throw Error(ErrorKind::invalid_argument, "fixed_point_residual needs n >= 100 k");
  }
  if (seeds.empty()) throw Error(ErrorKind::invalid_argument, "need at least one seed");
  std::vector<double> values(seeds.size());
  parallel_for(seeds.size(), 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      SeededRng rng(seeds[s], kDatasetStream);
      const Dataset data = sample_dataset(truth, n, rng);
      const GmmSpec next = em_step(truth, data, EmConfig{});
      values[s] = matched_d_m(next, truth);
    }
  });
  return summarize(std::move(values));
}

/// D_m of the label-aware maximum likelihood fit on the same datasets as
/// fixed_point_residual: the statistical noise floor at this n.
inline ResidualSummary labeled_noise_floor(const GmmSpec& truth, std::size_t n,
                                           std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw Error(ErrorKind::invalid_argument, "need at least one seed");
  std::vector<double> values(seeds.size());
  parallel_for(seeds.size(), 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t s = begin; s < end; ++s) {
      SeededRng rng(seeds[s], kDatasetStream);
      const Dataset data = sample_dataset(truth, n, rng);
      values[s] = d_m(labeled_mle(data, truth.k()), truth, MatchResult::identity(truth.k()));
    }
  });
  return summarize(std::move(values));
}

struct ContractionEstimate {
  std::vector<double> ratios;         // gamma_t = D_m(t+1) / D_m(t) for reported t
  std::vector<std::size_t> steps;     // the t of each ratio
  double plateau = 0.0;               // 0 when the trace is still contracting
};

/// Per-step contraction ratios above the noise plateau. The plateau is the
/// median of the last three iterates' D_m (entry 0, the initialization, is
/// never part of it) when at least two are available and they agree within
/// a factor of 3, and zero otherwise (the trace has not flattened yet).
/// Ratios are reported for every t with D_m(t) > 10 * plateau.
inline ContractionEstimate contraction_estimate(std::span<const double> dm) {
  if (dm.size() < 2) throw Error(ErrorKind::invalid_argument, "contraction estimate needs at least 2 entries");
  ContractionEstimate out;
  const std::size_t tail = std::min<std::size_t>(3, dm.size() - 1);
  if (tail >= 2) {
    std::vector<double> last(dm.end() - static_cast<std::ptrdiff_t>(tail), dm.end());
    const auto [lo, hi] = std::minmax_element(last.begin(), last.end());
    if (*lo * 3.0 > *hi) out.plateau = median_of(last);
  }
  for (std::size_t t = 0; t + 1 < dm.size(); ++t) {
    if (dm[t] > 10.0 * out.plateau && dm[t] > 0.0) {
      out.ratios.push_back(dm[t + 1] / dm[t]);
      out.steps.push_back(t);
    }
  }
  return out;
}

inline ContractionEstimate contraction_estimate(const FitTrace& trace) {
  std::vector<double> dm;
  for (const auto& e : trace.entries) {
    if (!e.d_m) throw Error(ErrorKind::invalid_argument, "trace has no D_m values (fit without truth)");
    dm.push_back(*e.d_m);
  }
  return contraction_estimate(std::span<const double>(dm));
}

}  // namespace gmmem
