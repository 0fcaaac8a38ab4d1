#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmem/core_model.hpp"
#include "gmmem/diagnostics.hpp"
#include "gmmem/em_engine.hpp"
#include "gmmem/error.hpp"
#include "gmmem/init_kmeans.hpp"
#include "gmmem/io.hpp"
#include "gmmem/parallel.hpp"
#include "gmmem/rng.hpp"
#include "gmmem/synth.hpp"

namespace gmmem {

enum class ExperimentKind {
  convergence,
  error_vs_n,
  error_vs_d,
  separation_sweep,
  kmeans_init,
  bad_events,
  fixed_point,
};

inline const std::vector<std::pair<std::string, ExperimentKind>>& experiment_names() {
  static const std::vector<std::pair<std::string, ExperimentKind>> names = {
      {"convergence", ExperimentKind::convergence},
      {"error_vs_n", ExperimentKind::error_vs_n},
      {"error_vs_d", ExperimentKind::error_vs_d},
      {"separation_sweep", ExperimentKind::separation_sweep},
      {"kmeans_init", ExperimentKind::kmeans_init},
      {"bad_events", ExperimentKind::bad_events},
      {"fixed_point", ExperimentKind::fixed_point},
  };
  return names;
}

inline std::string experiment_name(ExperimentKind kind) {
  for (const auto& [name, k] : experiment_names()) {
    if (k == kind) return name;
  }
  return "unknown";
}

/// Ground-truth instance: either generated by make_separated_spec or given
/// explicitly.
struct InstanceConfig {
  std::size_t k = 3;
  std::size_t d = 8;
  double margin_multiple = 1.0;
  WeightProfile weights = WeightProfile::explicit_weights({0.5, 0.3, 0.2});
  VarianceProfile variances = VarianceProfile::unit();
  std::uint64_t seed = 42;
  std::optional<GmmSpec> spec;  // overrides generation when set

  GmmSpec build() const { return build_with_d(d); }

  GmmSpec build_with_d(std::size_t dim) const {
    if (spec) return *spec;
    SeededRng rng(seed, 0);
    return make_separated_spec(k, dim, margin_multiple, weights, variances, rng);
  }
};

struct PerturbConfig {
  double mean_frac = 1.0;
  double weight_frac = 1.0;
  double var_frac = 1.0;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::convergence;
  InstanceConfig instance;
  std::size_t n = 200000;
  std::vector<std::size_t> n_grid;
  std::vector<std::size_t> d_grid;
  std::vector<double> margin_grid;
  std::vector<std::uint64_t> seeds;
  EmConfig em = EmConfig::plain(1e-10, 50);
  PerturbConfig perturb;
  double displacement_fraction = 0.25;  // kmeans_init: fraction of min pairwise distance
  bool perturb_estimate = true;         // bad_events: perturbed estimate vs truth
  std::string output;

  void validate() const {
    if (seeds.empty()) throw Error(ErrorKind::config_error, "seeds: must be a nonempty list");
    auto positive = [](const auto& grid, const char* field) {
      for (auto v : grid) {
        if (!(v > 0)) throw Error(ErrorKind::config_error, std::string(field) + ": entries must be positive");
      }
    };
    positive(n_grid, "n_grid");
    positive(d_grid, "d_grid");
    positive(margin_grid, "margin_grid");
    auto need = [&](bool empty, const char* field) {
      if (empty) throw Error(ErrorKind::config_error, std::string(field) + ": must be a nonempty list for experiment '" + experiment_name(kind) + "'");
    };
    switch (kind) {
      case ExperimentKind::error_vs_n:
      case ExperimentKind::fixed_point: need(n_grid.empty(), "n_grid"); break;
      case ExperimentKind::error_vs_d: need(d_grid.empty(), "d_grid"); break;
      case ExperimentKind::separation_sweep: need(margin_grid.empty(), "margin_grid"); break;
      default:
        if (n == 0) throw Error(ErrorKind::config_error, "n: must be positive");
        break;
    }
    try {
      em.validate();
    } catch (const Error& e) {
      throw Error(ErrorKind::config_error, std::string("em: ") + e.what());
    }
  }
};

/// Acceptance thresholds applied by the summaries.
struct Thresholds {
  static constexpr double kMaxContraction = 0.7;
  static constexpr double kFinalDm = 0.05;
  static constexpr double kConvergencePassFraction = 18.0 / 20.0;
  static constexpr double kFixedPointMedian = 0.02;
  static constexpr double kHalvingLow = 0.5 * 0.7;
  static constexpr double kHalvingHigh = 0.5 * 1.3;
  static constexpr double kSlopeLow = -0.65;
  static constexpr double kSlopeHigh = -0.35;
  static constexpr double kDimensionSpread = 3.0;
  static constexpr double kKmeansPassFraction = 45.0 / 50.0;
  static constexpr double kKmeansMeanBound = 4.0;
  static constexpr double kKmeansWeightBound = 0.5;
  static constexpr double kKmeansVarBound = 0.5;  // times 1/sqrt(d)
};

/// Rows are strings so integer and float columns keep their exact text.
struct ExperimentResult {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  nlohmann::json summary;
  std::optional<bool> pass;  // absent for descriptive experiments

  std::string rows_csv() const {
    std::ostringstream out;
    for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
    out << '\n';
    for (const auto& r : rows) {
      for (std::size_t c = 0; c < r.size(); ++c) out << (c ? "," : "") << r[c];
      out << '\n';
    }
    return out.str();
  }
};

/// Least-squares slope of y on x.
inline double ols_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw Error(ErrorKind::invalid_argument, "slope needs >= 2 paired points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(x.size());
  my /= static_cast<double>(y.size());
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  if (sxx == 0.0) throw Error(ErrorKind::invalid_argument, "slope needs distinct x values");
  return sxy / sxx;
}

/// Jointly rescales all means about their centroid so the separation margin
/// equals `margin`.
inline GmmSpec rescale_to_margin(const GmmSpec& spec, double margin) {
  const double current = check_separation(spec, 1.0).margin;
  if (!std::isfinite(current) || !(current > 0.0)) return spec;
  std::vector<double> centroid(spec.d(), 0.0);
  for (std::size_t i = 0; i < spec.k(); ++i) {
    for (std::size_t c = 0; c < spec.d(); ++c) centroid[c] += spec.mean(i)[c] / static_cast<double>(spec.k());
  }
  std::vector<Component> comps = spec.components();
  for (auto& comp : comps) {
    for (std::size_t c = 0; c < spec.d(); ++c) {
      comp.mean[c] = centroid[c] + (comp.mean[c] - centroid[c]) * (margin / current);
    }
  }
  return GmmSpec(spec.d(), std::move(comps));
}

/// k=3 instance in dimension d with unit variances and weights
/// (0.5, 0.3, 0.2): components 0 and 1 are sqrt(64 beta) apart, so their
/// pair has exactly that beta; component 2 sits twice as far along an
/// orthogonal axis.
inline GmmSpec beta_tuned_instance(std::size_t d, double target_beta) {
  if (d < 2) throw Error(ErrorKind::invalid_argument, "beta-tuned instance needs d >= 2");
  const double r = std::sqrt(64.0 * target_beta);
  std::vector<double> m0(d, 0.0), m1(d, 0.0), m2(d, 0.0);
  m1[0] = r;
  m2[1] = 2.0 * r;
  return GmmSpec(d, {{0.5, m0, 1.0}, {0.3, m1, 1.0}, {0.2, m2, 1.0}});
}

inline constexpr std::uint64_t kInitStream = 2;

namespace detail {

inline std::string fmt(double v) { return format_double(v); }
inline std::string fmt(std::size_t v) { return std::to_string(v); }
inline std::string fmt(bool v) { return v ? "1" : "0"; }

// Runs task(i) for i in [0, count), possibly in parallel; results are
// stored by index so output order is fixed.
template <typename T, typename Task>
std::vector<T> run_indexed(std::size_t count, Task&& task) {
  std::vector<std::optional<T>> out(count);
  parallel_for(count, 1, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) out[i].emplace(task(i));
  });
  std::vector<T> result;
  result.reserve(count);
  for (auto& o : out) result.push_back(std::move(*o));
  return result;
}

template <typename Fn>
auto with_seed_context(const std::string& experiment, std::uint64_t seed, Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.kind(), "experiment " + experiment + ", seed " + std::to_string(seed) + ": " + e.what(),
                e.component());
  }
}

inline double max_relative_variance_error(const GmmSpec& est, const GmmSpec& truth) {
  const MatchResult m = match_components(est, truth);
  double worst = 0.0;
  for (std::size_t i = 0; i < truth.k(); ++i) {
    worst = std::max(worst, std::abs(est.variance(m.est_of_true[i]) - truth.variance(i)) / truth.variance(i));
  }
  return worst;
}

}  // namespace detail

/// Convergence from a basin-boundary initialization: contraction ratios,
/// final D_m, and the per-seed pass rule.
inline ExperimentResult run_convergence(const ExperimentConfig& cfg) {
  const GmmSpec truth = cfg.instance.build();
  struct SeedOutcome {
    std::size_t iterations;
    double final_dm;
    double max_gamma;
    std::size_t n_ratios;
    bool converged;
    bool pass;
  };
  const auto outcomes = detail::run_indexed<SeedOutcome>(cfg.seeds.size(), [&](std::size_t s) {
    const std::uint64_t seed = cfg.seeds[s];
    return detail::with_seed_context("convergence", seed, [&] {
      SeededRng data_rng(seed, kDatasetStream), init_rng(seed, kInitStream);
      const Dataset data = sample_dataset(truth, cfg.n, data_rng);
      const GmmSpec init = perturb_params(truth, cfg.perturb.mean_frac, cfg.perturb.weight_frac,
                                          cfg.perturb.var_frac, init_rng);
      const FitTrace trace = fit(init, data, cfg.em, truth);
      const ContractionEstimate ce = contraction_estimate(trace);
      const double max_gamma = ce.ratios.empty() ? 0.0 : *std::max_element(ce.ratios.begin(), ce.ratios.end());
      const double final_dm = *trace.entries.back().d_m;
      const bool pass = max_gamma <= Thresholds::kMaxContraction && final_dm <= Thresholds::kFinalDm;
      return SeedOutcome{trace.iterations(), final_dm, max_gamma, ce.ratios.size(), trace.converged, pass};
    });
  });

  ExperimentResult r;
  r.name = "convergence";
  r.columns = {"seed", "n", "iterations", "final_dm", "max_gamma", "n_ratios", "converged", "pass"};
  std::size_t passes = 0;
  std::vector<double> finals;
  for (std::size_t s = 0; s < outcomes.size(); ++s) {
    const auto& o = outcomes[s];
    r.rows.push_back({std::to_string(cfg.seeds[s]), detail::fmt(cfg.n), detail::fmt(o.iterations),
                      detail::fmt(o.final_dm), detail::fmt(o.max_gamma), detail::fmt(o.n_ratios),
                      detail::fmt(o.converged), detail::fmt(o.pass)});
    passes += o.pass;
    finals.push_back(o.final_dm);
  }
  const double fraction = static_cast<double>(passes) / static_cast<double>(outcomes.size());
  r.pass = fraction >= Thresholds::kConvergencePassFraction;
  r.summary = {{"seeds", outcomes.size()},
               {"passing_seeds", passes},
               {"required_fraction", Thresholds::kConvergencePassFraction},
               {"max_gamma_allowed", Thresholds::kMaxContraction},
               {"final_dm_allowed", Thresholds::kFinalDm},
               {"median_final_dm", median_of(finals)}};
  return r;
}

/// Final D_m of sample-splitting EM over an n grid, with the log-log slope
/// over all (n, D_m) points.
inline ExperimentResult run_error_vs_n(const ExperimentConfig& cfg) {
  const GmmSpec truth = cfg.instance.build();
  const std::size_t S = cfg.seeds.size(), G = cfg.n_grid.size();
  const auto finals = detail::run_indexed<double>(S * G, [&](std::size_t idx) {
    const std::uint64_t seed = cfg.seeds[idx / G];
    const std::size_t n = cfg.n_grid[idx % G];
    return detail::with_seed_context("error_vs_n", seed, [&] {
      SeededRng data_rng(seed, kDatasetStream), init_rng(seed, kInitStream);
      const Dataset data = sample_dataset(truth, n, data_rng);
      const GmmSpec init = perturb_params(truth, cfg.perturb.mean_frac, cfg.perturb.weight_frac,
                                          cfg.perturb.var_frac, init_rng);
      return *fit(init, data, cfg.em, truth).entries.back().d_m;
    });
  });

  ExperimentResult r;
  r.name = "error_vs_n";
  r.columns = {"seed", "n", "final_dm"};
  std::vector<double> lx, ly;
  for (std::size_t idx = 0; idx < S * G; ++idx) {
    r.rows.push_back({std::to_string(cfg.seeds[idx / G]), detail::fmt(cfg.n_grid[idx % G]), detail::fmt(finals[idx])});
    lx.push_back(std::log(static_cast<double>(cfg.n_grid[idx % G])));
    ly.push_back(std::log(finals[idx]));
  }
  nlohmann::json medians = nlohmann::json::array();
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<double> v;
    for (std::size_t s = 0; s < S; ++s) v.push_back(finals[s * G + g]);
    medians.push_back({{"n", cfg.n_grid[g]}, {"median_dm", median_of(v)}});
  }
  const double slope = G >= 2 ? ols_slope(lx, ly) : std::nan("");
  r.pass = slope >= Thresholds::kSlopeLow && slope <= Thresholds::kSlopeHigh;
  r.summary = {{"slope", slope},
               {"slope_range", {Thresholds::kSlopeLow, Thresholds::kSlopeHigh}},
               {"medians", medians},
               {"batches", cfg.em.batches}};
  return r;
}

/// sqrt(d) times the median (over seeds) of the worst relative variance
/// error, across a grid of dimensions at fixed n.
inline ExperimentResult run_error_vs_d(const ExperimentConfig& cfg) {
  const std::size_t S = cfg.seeds.size(), G = cfg.d_grid.size();
  std::vector<GmmSpec> truths;
  for (std::size_t d : cfg.d_grid) truths.push_back(cfg.instance.build_with_d(d));
  const auto errs = detail::run_indexed<double>(S * G, [&](std::size_t idx) {
    const std::uint64_t seed = cfg.seeds[idx / G];
    const GmmSpec& truth = truths[idx % G];
    return detail::with_seed_context("error_vs_d", seed, [&] {
      SeededRng data_rng(seed, kDatasetStream), init_rng(seed, kInitStream);
      const Dataset data = sample_dataset(truth, cfg.n, data_rng);
      const GmmSpec init = perturb_params(truth, cfg.perturb.mean_frac, cfg.perturb.weight_frac,
                                          cfg.perturb.var_frac, init_rng);
      return detail::max_relative_variance_error(fit(init, data, cfg.em).final_estimate(), truth);
    });
  });

  ExperimentResult r;
  r.name = "error_vs_d";
  r.columns = {"seed", "d", "rel_var_err"};
  for (std::size_t idx = 0; idx < S * G; ++idx) {
    r.rows.push_back({std::to_string(cfg.seeds[idx / G]), detail::fmt(cfg.d_grid[idx % G]), detail::fmt(errs[idx])});
  }
  nlohmann::json per_d = nlohmann::json::array();
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<double> v;
    for (std::size_t s = 0; s < S; ++s) v.push_back(errs[s * G + g]);
    const double scaled = std::sqrt(static_cast<double>(cfg.d_grid[g])) * median_of(v);
    lo = std::min(lo, scaled);
    hi = std::max(hi, scaled);
    per_d.push_back({{"d", cfg.d_grid[g]}, {"median_rel_var_err", median_of(v)}, {"sqrt_d_times_median", scaled}});
  }
  const double spread = hi / lo;
  r.pass = spread <= Thresholds::kDimensionSpread;
  r.summary = {{"n", cfg.n}, {"per_d", per_d}, {"spread", spread}, {"max_spread", Thresholds::kDimensionSpread}};
  return r;
}

/// Final D_m when the instance is rescaled to each margin in the grid.
/// Descriptive: shows where the basin guarantee stops holding.
inline ExperimentResult run_separation_sweep(const ExperimentConfig& cfg) {
  const GmmSpec base = cfg.instance.build();
  const std::size_t S = cfg.seeds.size(), G = cfg.margin_grid.size();
  struct Outcome {
    std::optional<double> final_dm;
    std::size_t iterations = 0;
    std::string status;
  };
  const auto outcomes = detail::run_indexed<Outcome>(S * G, [&](std::size_t idx) {
    const std::uint64_t seed = cfg.seeds[idx / G];
    const GmmSpec truth = rescale_to_margin(base, cfg.margin_grid[idx % G]);
    SeededRng data_rng(seed, kDatasetStream), init_rng(seed, kInitStream);
    const Dataset data = sample_dataset(truth, cfg.n, data_rng);
    const GmmSpec init = perturb_params(truth, cfg.perturb.mean_frac, cfg.perturb.weight_frac,
                                        cfg.perturb.var_frac, init_rng);
    try {
      const FitTrace t = fit(init, data, cfg.em, truth);
      return Outcome{t.entries.back().d_m, t.iterations(), t.converged ? "converged" : "max_iters"};
    } catch (const Error& e) {
      // Outside the basin components may collapse; record instead of abort.
      return Outcome{std::nullopt, 0, to_string(e.kind())};
    }
  });

  ExperimentResult r;
  r.name = "separation_sweep";
  r.columns = {"seed", "margin", "final_dm", "iterations", "status"};
  for (std::size_t idx = 0; idx < S * G; ++idx) {
    const auto& o = outcomes[idx];
    r.rows.push_back({std::to_string(cfg.seeds[idx / G]), detail::fmt(cfg.margin_grid[idx % G]),
                      o.final_dm ? detail::fmt(*o.final_dm) : "", detail::fmt(o.iterations), o.status});
  }
  nlohmann::json per_margin = nlohmann::json::array();
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<double> v;
    for (std::size_t s = 0; s < S; ++s) {
      if (outcomes[s * G + g].final_dm) v.push_back(*outcomes[s * G + g].final_dm);
    }
    per_margin.push_back({{"margin", cfg.margin_grid[g]},
                          {"fits", v.size()},
                          {"median_dm", v.empty() ? nlohmann::json(nullptr) : nlohmann::json(median_of(v))}});
  }
  r.summary = {{"n", cfg.n}, {"per_margin", per_margin}};
  return r;
}

/// One-step k-means from means displaced by a fixed fraction of the minimum
/// pairwise distance; checks the three output bounds per component.
inline ExperimentResult run_kmeans_init(const ExperimentConfig& cfg) {
  const GmmSpec truth = cfg.instance.build();
  const double var_bound = Thresholds::kKmeansVarBound / std::sqrt(static_cast<double>(truth.d()));
  struct Outcome {
    double mean_err, weight_err, var_err;
    bool pass;
  };
  const auto outcomes = detail::run_indexed<Outcome>(cfg.seeds.size(), [&](std::size_t s) {
    const std::uint64_t seed = cfg.seeds[s];
    return detail::with_seed_context("kmeans_init", seed, [&] {
      SeededRng data_rng(seed, kDatasetStream), init_rng(seed, kInitStream);
      const Dataset data = sample_dataset(truth, cfg.n, data_rng);
      const auto init_means = displace_means(truth, cfg.displacement_fraction, init_rng);
      const GmmSpec est = one_step_kmeans(data, init_means);
      // Clusters inherit the index of their initial mean.
      const MatchResult m = MatchResult::identity(truth.k());
      const ComponentErrors e = component_errors(est, truth, m.est_of_true);
      Outcome o{0.0, 0.0, 0.0, true};
      for (std::size_t i = 0; i < truth.k(); ++i) {
        const double rel_var = e.var_err[i] / std::sqrt(static_cast<double>(truth.d()));
        o.mean_err = std::max(o.mean_err, e.mean_err[i]);
        o.weight_err = std::max(o.weight_err, e.weight_err[i]);
        o.var_err = std::max(o.var_err, rel_var);
      }
      o.pass = o.mean_err <= Thresholds::kKmeansMeanBound && o.weight_err <= Thresholds::kKmeansWeightBound &&
               o.var_err <= var_bound;
      return o;
    });
  });

  ExperimentResult r;
  r.name = "kmeans_init";
  r.columns = {"seed", "n", "max_mean_err", "max_weight_err", "max_rel_var_err", "pass"};
  std::size_t passes = 0;
  for (std::size_t s = 0; s < outcomes.size(); ++s) {
    const auto& o = outcomes[s];
    r.rows.push_back({std::to_string(cfg.seeds[s]), detail::fmt(cfg.n), detail::fmt(o.mean_err),
                      detail::fmt(o.weight_err), detail::fmt(o.var_err), detail::fmt(o.pass)});
    passes += o.pass;
  }
  const double fraction = static_cast<double>(passes) / static_cast<double>(outcomes.size());
  r.pass = fraction >= Thresholds::kKmeansPassFraction;
  r.summary = {{"seeds", outcomes.size()},
               {"passing_seeds", passes},
               {"required_fraction", Thresholds::kKmeansPassFraction},
               {"bounds", {{"mean", Thresholds::kKmeansMeanBound},
                           {"weight", Thresholds::kKmeansWeightBound},
                           {"rel_var", var_bound}}}};
  return r;
}

/// Empirical bad-event rates for every (source, target) pair against
/// 5 exp(-beta) plus binomial slack.
inline ExperimentResult run_bad_events(const ExperimentConfig& cfg) {
  const GmmSpec truth = cfg.instance.build();
  const auto reports = detail::run_indexed<std::vector<GoodEventReport>>(cfg.seeds.size(), [&](std::size_t s) {
    const std::uint64_t seed = cfg.seeds[s];
    return detail::with_seed_context("bad_events", seed, [&] {
      SeededRng data_rng(seed, kDatasetStream), init_rng(seed, kInitStream);
      const Dataset data = sample_dataset(truth, cfg.n, data_rng);
      const GmmSpec estimate = cfg.perturb_estimate
                                   ? perturb_params(truth, cfg.perturb.mean_frac, cfg.perturb.weight_frac,
                                                    cfg.perturb.var_frac, init_rng)
                                   : truth;
      std::vector<GoodEventReport> out;
      for (std::size_t target = 0; target < truth.k(); ++target) {
        GoodEventReport rep = bad_event_rate(data, estimate, truth, target);
        for (auto& src : rep.sources) src.flags.clear();
        out.push_back(std::move(rep));
      }
      return out;
    });
  });

  ExperimentResult r;
  r.name = "bad_events";
  r.columns = {"seed", "target", "source", "beta", "n_source", "bad", "empirical_rate", "bound", "slack", "within"};
  bool all_within = true;
  std::size_t checked = 0;
  for (std::size_t s = 0; s < reports.size(); ++s) {
    for (const auto& rep : reports[s]) {
      for (const auto& src : rep.sources) {
        r.rows.push_back({std::to_string(cfg.seeds[s]), detail::fmt(rep.target), detail::fmt(src.source),
                          detail::fmt(src.beta), detail::fmt(src.n_source), detail::fmt(src.bad),
                          src.empirical_bad_rate ? detail::fmt(*src.empirical_bad_rate) : "",
                          detail::fmt(src.theoretical_bound), detail::fmt(src.slack()),
                          detail::fmt(src.within_bound())});
        all_within = all_within && src.within_bound();
        checked += src.empirical_bad_rate.has_value();
      }
    }
  }
  r.pass = all_within;
  r.summary = {{"n", cfg.n}, {"pairs_checked", checked}, {"all_within_bound", all_within},
               {"estimate", cfg.perturb_estimate ? "perturbed" : "truth"}};
  return r;
}

/// One EM step from the truth across an n grid: median residual per n,
/// the label-aware noise floor, and the residual ratio between successive
/// grid points.
inline ExperimentResult run_fixed_point(const ExperimentConfig& cfg) {
  const GmmSpec truth = cfg.instance.build();
  ExperimentResult r;
  r.name = "fixed_point";
  r.columns = {"seed", "n", "dm_after_step", "dm_labeled_mle"};
  std::vector<ResidualSummary> em_res, floor_res;
  for (std::size_t n : cfg.n_grid) {
    em_res.push_back(fixed_point_residual(truth, n, cfg.seeds));
    floor_res.push_back(labeled_noise_floor(truth, n, cfg.seeds));
  }
  for (std::size_t s = 0; s < cfg.seeds.size(); ++s) {
    for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
      r.rows.push_back({std::to_string(cfg.seeds[s]), detail::fmt(cfg.n_grid[g]), detail::fmt(em_res[g].values[s]),
                        detail::fmt(floor_res[g].values[s])});
    }
  }
  nlohmann::json per_n = nlohmann::json::array();
  for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
    per_n.push_back({{"n", cfg.n_grid[g]},
                     {"median_dm", em_res[g].median},
                     {"max_dm", em_res[g].max},
                     {"median_labeled_floor", floor_res[g].median}});
  }
  bool pass = em_res.front().median <= Thresholds::kFixedPointMedian;
  nlohmann::json ratios = nlohmann::json::array();
  for (std::size_t g = 0; g + 1 < cfg.n_grid.size(); ++g) {
    const double ratio = em_res[g + 1].median / em_res[g].median;
    ratios.push_back(ratio);
    if (cfg.n_grid[g + 1] == 4 * cfg.n_grid[g]) {
      pass = pass && ratio >= Thresholds::kHalvingLow && ratio <= Thresholds::kHalvingHigh;
    }
  }
  r.pass = pass;
  r.summary = {{"per_n", per_n},
               {"successive_median_ratios", ratios},
               {"median_allowed", Thresholds::kFixedPointMedian},
               {"quadrupling_ratio_range", {Thresholds::kHalvingLow, Thresholds::kHalvingHigh}}};
  return r;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  switch (cfg.kind) {
    case ExperimentKind::convergence: return run_convergence(cfg);
    case ExperimentKind::error_vs_n: return run_error_vs_n(cfg);
    case ExperimentKind::error_vs_d: return run_error_vs_d(cfg);
    case ExperimentKind::separation_sweep: return run_separation_sweep(cfg);
    case ExperimentKind::kmeans_init: return run_kmeans_init(cfg);
    case ExperimentKind::bad_events: return run_bad_events(cfg);
    case ExperimentKind::fixed_point: return run_fixed_point(cfg);
  }
  throw Error(ErrorKind::config_error, "unknown experiment");
}

// ---------------------------------------------------------------------------
// Config JSON (schema 1)

namespace detail {

class ConfigReader {
 public:
  explicit ConfigReader(std::string origin) : origin_(std::move(origin)) {}

  [[noreturn]] void fail(const std::string& field, const std::string& what) const {
    throw Error(ErrorKind::config_error, origin_ + ": field '" + field + "': " + what);
  }

  template <typename T>
  T get(const nlohmann::json& j, const std::string& key, const std::string& path) const {
    try {
      return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
      fail(path, e.what());
    }
  }

  WeightProfile weight_profile(const nlohmann::json& j, const std::string& path) const {
    if (!j.is_object() || !j.contains("profile")) fail(path, "expected an object with 'profile'");
    const auto name = get<std::string>(j, "profile", path + ".profile");
    if (name == "uniform") return WeightProfile::uniform();
    if (name == "geometric") return WeightProfile::geometric(get<double>(j, "ratio", path + ".ratio"));
    if (name == "explicit") return WeightProfile::explicit_weights(get<std::vector<double>>(j, "values", path + ".values"));
    fail(path + ".profile", "unknown weight profile '" + name + "' (uniform, geometric, explicit)");
  }

  VarianceProfile variance_profile(const nlohmann::json& j, const std::string& path) const {
    if (!j.is_object() || !j.contains("profile")) fail(path, "expected an object with 'profile'");
    const auto name = get<std::string>(j, "profile", path + ".profile");
    if (name == "unit") return VarianceProfile::unit();
    if (name == "geometric") return VarianceProfile::geometric(get<double>(j, "ratio", path + ".ratio"));
    if (name == "explicit") {
      return VarianceProfile::explicit_variances(get<std::vector<double>>(j, "values", path + ".values"));
    }
    fail(path + ".profile", "unknown variance profile '" + name + "' (unit, geometric, explicit)");
  }

 private:
  std::string origin_;
};

}  // namespace detail

inline ExperimentKind parse_experiment_kind(const std::string& name) {
  for (const auto& [n, k] : experiment_names()) {
    if (n == name) return k;
  }
  std::string valid;
  for (const auto& [n, k] : experiment_names()) valid += (valid.empty() ? "" : ", ") + n;
  throw Error(ErrorKind::config_error, "unknown experiment '" + name + "'; valid names: " + valid);
}

inline ExperimentConfig experiment_config_from_json(const nlohmann::json& j, const std::string& origin = "config") {
  detail::ConfigReader rd(origin);
  if (!j.is_object()) rd.fail("<root>", "expected a JSON object");
  if (!j.contains("schema")) rd.fail("schema", "missing (expected 1)");
  if (rd.get<int>(j, "schema", "schema") != 1) rd.fail("schema", "unsupported version (expected 1)");

  ExperimentConfig cfg;
  try {
    cfg.kind = parse_experiment_kind(rd.get<std::string>(j, "experiment", "experiment"));
  } catch (const Error& e) {
    rd.fail("experiment", e.what());
  }

  if (j.contains("instance")) {
    const auto& inst = j["instance"];
    if (!inst.is_object()) rd.fail("instance", "expected an object");
    if (inst.contains("spec")) {
      try {
        cfg.instance.spec = spec_from_json(inst["spec"], origin + ": instance.spec");
      } catch (const Error& e) {
        rd.fail("instance.spec", e.what());
      }
    } else if (inst.contains("beta_tuned")) {
      const auto& bt = inst["beta_tuned"];
      try {
        cfg.instance.spec = beta_tuned_instance(rd.get<std::size_t>(bt, "d", "instance.beta_tuned.d"),
                                                rd.get<double>(bt, "beta", "instance.beta_tuned.beta"));
      } catch (const Error& e) {
        rd.fail("instance.beta_tuned", e.what());
      }
    }
    if (inst.contains("k")) cfg.instance.k = rd.get<std::size_t>(inst, "k", "instance.k");
    if (inst.contains("d")) cfg.instance.d = rd.get<std::size_t>(inst, "d", "instance.d");
    if (inst.contains("margin_multiple")) {
      cfg.instance.margin_multiple = rd.get<double>(inst, "margin_multiple", "instance.margin_multiple");
    }
    if (inst.contains("seed")) cfg.instance.seed = rd.get<std::uint64_t>(inst, "seed", "instance.seed");
    if (inst.contains("weights")) cfg.instance.weights = rd.weight_profile(inst["weights"], "instance.weights");
    if (inst.contains("variances")) {
      cfg.instance.variances = rd.variance_profile(inst["variances"], "instance.variances");
    }
    if (cfg.instance.k == 0) rd.fail("instance.k", "must be positive");
    if (cfg.instance.d == 0) rd.fail("instance.d", "must be positive");
  }

  if (j.contains("n")) cfg.n = rd.get<std::size_t>(j, "n", "n");
  if (j.contains("n_grid")) cfg.n_grid = rd.get<std::vector<std::size_t>>(j, "n_grid", "n_grid");
  if (j.contains("d_grid")) cfg.d_grid = rd.get<std::vector<std::size_t>>(j, "d_grid", "d_grid");
  if (j.contains("margin_grid")) cfg.margin_grid = rd.get<std::vector<double>>(j, "margin_grid", "margin_grid");
  cfg.seeds = rd.get<std::vector<std::uint64_t>>(j, "seeds", "seeds");

  if (j.contains("em")) {
    const auto& em = j["em"];
    if (!em.is_object()) rd.fail("em", "expected an object");
    const std::string mode = em.contains("mode") ? rd.get<std::string>(em, "mode", "em.mode") : "plain";
    const double tol = em.contains("tol") ? rd.get<double>(em, "tol", "em.tol") : 1e-10;
    if (mode == "plain") {
      std::optional<std::size_t> iters;
      if (em.contains("max_iters")) iters = rd.get<std::size_t>(em, "max_iters", "em.max_iters");
      cfg.em = EmConfig::plain(tol, iters);
    } else if (mode == "split") {
      const std::size_t batches = rd.get<std::size_t>(em, "batches", "em.batches");
      cfg.em = EmConfig::split(batches, tol);
      if (em.contains("max_iters") && rd.get<std::size_t>(em, "max_iters", "em.max_iters") != batches) {
        rd.fail("em.max_iters", "must equal em.batches in split mode");
      }
    } else {
      rd.fail("em.mode", "must be 'plain' or 'split'");
    }
    if (em.contains("variance_floor")) cfg.em.variance_floor = rd.get<double>(em, "variance_floor", "em.variance_floor");
  }
  if (j.contains("perturb")) {
    const auto& p = j["perturb"];
    if (p.contains("mean_frac")) cfg.perturb.mean_frac = rd.get<double>(p, "mean_frac", "perturb.mean_frac");
    if (p.contains("weight_frac")) cfg.perturb.weight_frac = rd.get<double>(p, "weight_frac", "perturb.weight_frac");
    if (p.contains("var_frac")) cfg.perturb.var_frac = rd.get<double>(p, "var_frac", "perturb.var_frac");
  }
  if (j.contains("displacement_fraction")) {
    cfg.displacement_fraction = rd.get<double>(j, "displacement_fraction", "displacement_fraction");
  }
  if (j.contains("estimate")) {
    const auto e = rd.get<std::string>(j, "estimate", "estimate");
    if (e != "perturbed" && e != "truth") rd.fail("estimate", "must be 'perturbed' or 'truth'");
    cfg.perturb_estimate = e == "perturbed";
  }
  if (j.contains("output")) cfg.output = rd.get<std::string>(j, "output", "output");
  cfg.validate();
  return cfg;
}

inline ExperimentConfig read_experiment_config(const std::string& path) {
  return experiment_config_from_json(parse_json_text(read_text_file(path), path), path);
}

/// Writes <dir>/<name>_rows.csv and <dir>/<name>_summary.json.
inline void write_experiment_result(const ExperimentResult& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  write_text_file((base / (r.name + "_rows.csv")).string(), r.rows_csv());
  nlohmann::json summary = r.summary;
  summary["experiment"] = r.name;
  summary["pass"] = r.pass ? nlohmann::json(*r.pass) : nlohmann::json(nullptr);
  write_text_file((base / (r.name + "_summary.json")).string(), summary.dump(2) + "\n");
}

}  // namespace gmmem
