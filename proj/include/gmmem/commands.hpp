#pragma once

// Implementations behind the gmm_em command-line subcommands. Each returns
// the process exit code; failures surface as gmmem::Error.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gmmem/core_model.hpp"
#include "gmmem/diagnostics.hpp"
#include "gmmem/em_engine.hpp"
#include "gmmem/error.hpp"
#include "gmmem/experiments.hpp"
#include "gmmem/init_kmeans.hpp"
#include "gmmem/io.hpp"
#include "gmmem/synth.hpp"

namespace gmmem::cli {

inline constexpr int kExitConverged = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitMaxIters = 2;

/// Parses "uniform", "geometric:<r>", or "explicit:<v0>,<v1>,...".
inline std::pair<std::string, std::vector<double>> parse_profile_text(const std::string& text,
                                                                      const std::string& field) {
  const auto colon = text.find(':');
  const std::string name = text.substr(0, colon);
  std::vector<double> args;
  if (colon != std::string::npos) {
    std::string rest = text.substr(colon + 1);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      const auto comma = rest.find(',', pos);
      const std::string tok = rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      try {
        std::size_t used = 0;
        args.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw Error(ErrorKind::config_error, field + ": '" + tok + "' is not a number");
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
  }
  return {name, args};
}

inline WeightProfile parse_weight_profile(const std::string& text) {
  const auto [name, args] = parse_profile_text(text, "--weights");
  if (name == "uniform" && args.empty()) return WeightProfile::uniform();
  if (name == "geometric" && args.size() == 1) return WeightProfile::geometric(args[0]);
  if (name == "explicit" && !args.empty()) return WeightProfile::explicit_weights(args);
  throw Error(ErrorKind::config_error,
              "--weights: expected uniform, geometric:<r>, or explicit:<w0>,<w1>,... (got '" + text + "')");
}

inline VarianceProfile parse_variance_profile(const std::string& text) {
  const auto [name, args] = parse_profile_text(text, "--variances");
  if (name == "unit" && args.empty()) return VarianceProfile::unit();
  if (name == "geometric" && args.size() == 1) return VarianceProfile::geometric(args[0]);
  if (name == "explicit" && !args.empty()) return VarianceProfile::explicit_variances(args);
  throw Error(ErrorKind::config_error,
              "--variances: expected unit, geometric:<r>, or explicit:<v0>,<v1>,... (got '" + text + "')");
}

struct GenerateOptions {
  std::size_t k = 3;
  std::size_t d = 8;
  std::size_t n = 1000;
  std::uint64_t seed = 42;
  double margin_multiple = 1.0;
  std::string weights = "uniform";
  std::string variances = "unit";
  std::string spec_out;
  std::string data_out;
};

/// Writes a generated instance (spec JSON) and a labeled dataset (CSV).
/// The spec is drawn from stream 0 of the seed, the samples from stream 1.
inline int cmd_generate(const GenerateOptions& opt) {
  if (opt.n == 0) throw Error(ErrorKind::config_error, "--n: must be at least 1");
  if (opt.k == 0) throw Error(ErrorKind::config_error, "--k: must be at least 1");
  if (opt.d == 0) throw Error(ErrorKind::config_error, "--d: must be at least 1");
  if (opt.spec_out.empty() || opt.data_out.empty()) {
    throw Error(ErrorKind::config_error, "--spec and --data output paths are required");
  }
  SeededRng spec_rng(opt.seed, 0);
  const GmmSpec spec = make_separated_spec(opt.k, opt.d, opt.margin_multiple, parse_weight_profile(opt.weights),
                                           parse_variance_profile(opt.variances), spec_rng);
  SeededRng data_rng(opt.seed, kDatasetStream);
  const Dataset data = sample_dataset(spec, opt.n, data_rng);
  write_spec(opt.spec_out, spec);
  write_dataset(opt.data_out, data);
  return 0;
}

struct FitOptions {
  std::string init;
  std::string data;
  std::optional<std::string> truth;
  std::string mode = "plain";
  std::optional<std::size_t> batches;
  std::optional<std::size_t> max_iters;
  double tol = 1e-8;
  std::string out;                  // final spec JSON
  std::optional<std::string> trace; // trace CSV
};

inline EmConfig em_config_from(const FitOptions& opt) {
  EmConfig cfg;
  cfg.tol = opt.tol;
  if (opt.mode == "plain") {
    cfg.mode = EmMode::plain;
    cfg.max_iters = opt.max_iters.value_or(EmConfig::default_max_iters(opt.tol));
    cfg.batches = opt.batches.value_or(cfg.max_iters);
  } else if (opt.mode == "split") {
    cfg.mode = EmMode::sample_split;
    if (!opt.batches && !opt.max_iters) {
      throw Error(ErrorKind::config_error, "--mode split needs --batches (or --max-iters)");
    }
    cfg.batches = opt.batches.value_or(opt.max_iters.value_or(0));
    cfg.max_iters = opt.max_iters.value_or(cfg.batches);
  } else {
    throw Error(ErrorKind::config_error, "--mode: expected plain or split (got '" + opt.mode + "')");
  }
  cfg.validate();
  return cfg;
}

/// Runs EM. Exit 0 when the tolerance was reached, 2 when max_iters ran out.
inline int cmd_fit(const FitOptions& opt, std::ostream& log = std::cerr) {
  const EmConfig cfg = em_config_from(opt);
  const GmmSpec init = read_spec(opt.init);
  const Dataset data = read_dataset(opt.data);
  std::optional<GmmSpec> truth;
  if (opt.truth) truth = read_spec(*opt.truth);
  const FitTrace trace = fit(init, data, cfg, truth);
  if (!opt.out.empty()) write_spec(opt.out, trace.final_estimate());
  if (opt.trace) write_text_file(*opt.trace, trace_to_csv(trace));
  log << "iterations=" << trace.iterations() << " converged=" << (trace.converged ? "yes" : "no");
  if (trace.entries.back().d_m) log << " D_m=" << format_double(*trace.entries.back().d_m);
  log << '\n';
  return trace.converged ? kExitConverged : kExitMaxIters;
}

struct InitKmeansOptions {
  std::string data;
  std::string init;  // spec JSON whose means seed the clustering
  std::string out;
};

inline int cmd_init_kmeans(const InitKmeansOptions& opt) {
  const Dataset data = read_dataset(opt.data);
  const GmmSpec init = read_spec(opt.init);
  if (init.d() != data.d()) {
    throw Error(ErrorKind::dimension_mismatch, "init has d=" + std::to_string(init.d()) + " but data has d=" +
                                                   std::to_string(data.d()));
  }
  std::vector<std::vector<double>> means;
  for (const auto& c : init.components()) means.push_back(c.mean);
  const GmmSpec est = one_step_kmeans(data, means);
  if (opt.out.empty()) {
    std::cout << spec_to_json(est).dump(2) << '\n';
  } else {
    write_spec(opt.out, est);
  }
  return 0;
}

struct DiagnoseOptions {
  std::string data;   // labeled CSV
  std::string spec;   // estimate
  std::string truth;
  std::size_t target = 0;
  bool include_flags = false;
  std::string out;
};

/// Good-event report against the truth, plus the matched D_m of the estimate.
inline int cmd_diagnose(const DiagnoseOptions& opt) {
  const Dataset data = read_dataset(opt.data);
  const GmmSpec estimate = read_spec(opt.spec);
  const GmmSpec truth = read_spec(opt.truth);
  const GoodEventReport report = bad_event_rate(data, estimate, truth, opt.target);
  const MatchResult match = match_components(estimate, truth);
  nlohmann::json j = report_to_json(report, opt.include_flags);
  j["d_m"] = d_m(estimate, truth, match);
  j["est_of_true"] = match.est_of_true;
  const std::string text = j.dump(2) + "\n";
  if (opt.out.empty()) {
    std::cout << text;
  } else {
    write_text_file(opt.out, text);
  }
  return 0;
}

struct ExperimentOptions {
  std::string config;
  std::string out;  // overrides the config's "output"
};

/// Runs a configured experiment; exit 0 unless a pass/fail summary failed (2).
inline int cmd_experiment(const ExperimentOptions& opt, std::ostream& log = std::cerr) {
  const ExperimentConfig cfg = read_experiment_config(opt.config);
  const ExperimentResult result = run_experiment(cfg);
  const std::string dir = !opt.out.empty() ? opt.out : (!cfg.output.empty() ? cfg.output : ".");
  write_experiment_result(result, dir);
  log << result.name << ": " << (result.pass ? (*result.pass ? "PASS" : "FAIL") : "done") << '\n';
  return result.pass.value_or(true) ? 0 : kExitMaxIters;
}

}  // namespace gmmem::cli
