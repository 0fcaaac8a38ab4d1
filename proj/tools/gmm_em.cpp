#include <iostream>
#include <string>

#include "CLI11.hpp"

#include "gmmem/commands.hpp"

int main(int argc, char** argv) {
  namespace cli = gmmem::cli;
  CLI::App app{"Spherical Gaussian mixture estimation with EM and one-step k-means initialization"};
  app.require_subcommand(1);

  cli::GenerateOptions gen;
  auto* generate = app.add_subcommand("generate", "Generate a separated instance and a labeled dataset");
  generate->add_option("--k", gen.k, "Number of components")->capture_default_str();
  generate->add_option("--d", gen.d, "Dimension")->capture_default_str();
  generate->add_option("--n", gen.n, "Number of samples")->capture_default_str();
  generate->add_option("--seed", gen.seed, "Random seed")->capture_default_str();
  generate->add_option("--margin-multiple", gen.margin_multiple, "Separation as a multiple of the C=64 threshold")
      ->capture_default_str();
  generate->add_option("--weights", gen.weights, "uniform | geometric:<r> | explicit:<w0>,...")->capture_default_str();
  generate->add_option("--variances", gen.variances, "unit | geometric:<r> | explicit:<v0>,...")
      ->capture_default_str();
  generate->add_option("--spec", gen.spec_out, "Output spec JSON")->required();
  generate->add_option("--data", gen.data_out, "Output dataset CSV")->required();

  cli::FitOptions fit;
  std::string truth_path, trace_path;
  std::size_t batches = 0, max_iters = 0;
  auto* fit_cmd = app.add_subcommand("fit", "Run EM from an initial spec");
  fit_cmd->add_option("--init", fit.init, "Initial spec JSON")->required();
  fit_cmd->add_option("--data", fit.data, "Dataset CSV")->required();
  auto* truth_opt = fit_cmd->add_option("--truth", truth_path, "True spec JSON (adds D_m to the trace)");
  fit_cmd->add_option("--mode", fit.mode, "plain | split")->capture_default_str();
  auto* batches_opt = fit_cmd->add_option("--batches", batches, "Batches for split mode (= iterations)");
  auto* iters_opt = fit_cmd->add_option("--max-iters", max_iters, "Iteration cap");
  fit_cmd->add_option("--tol", fit.tol, "Stop when the parameter change falls below tol")->capture_default_str();
  fit_cmd->add_option("--out", fit.out, "Output final spec JSON");
  auto* trace_opt = fit_cmd->add_option("--trace", trace_path, "Output trace CSV");

  cli::InitKmeansOptions km;
  auto* init_cmd = app.add_subcommand("init-kmeans", "One-step k-means with quantile variance estimates");
  init_cmd->add_option("--data", km.data, "Dataset CSV")->required();
  init_cmd->add_option("--init", km.init, "Spec JSON providing the initial means")->required();
  init_cmd->add_option("--out", km.out, "Output spec JSON (stdout when omitted)");

  cli::DiagnoseOptions diag;
  auto* diag_cmd = app.add_subcommand("diagnose", "Good-event report for a labeled dataset");
  diag_cmd->add_option("--data", diag.data, "Labeled dataset CSV")->required();
  diag_cmd->add_option("--spec", diag.spec, "Estimated spec JSON")->required();
  diag_cmd->add_option("--truth", diag.truth, "True spec JSON")->required();
  diag_cmd->add_option("--target", diag.target, "Target component index")->capture_default_str();
  diag_cmd->add_flag("--flags", diag.include_flags, "Include per-sample event flags");
  diag_cmd->add_option("--out", diag.out, "Output report JSON (stdout when omitted)");

  cli::ExperimentOptions exp;
  auto* exp_cmd = app.add_subcommand("experiment", "Run a configured experiment");
  exp_cmd->add_option("--config", exp.config, "Experiment config JSON")->required();
  exp_cmd->add_option("--out", exp.out, "Output directory (overrides config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kExitError;
  }

  try {
    if (*generate) return cli::cmd_generate(gen);
    if (*fit_cmd) {
      if (*truth_opt) fit.truth = truth_path;
      if (*trace_opt) fit.trace = trace_path;
      if (*batches_opt) fit.batches = batches;
      if (*iters_opt) fit.max_iters = max_iters;
      return cli::cmd_fit(fit);
    }
    if (*init_cmd) return cli::cmd_init_kmeans(km);
    if (*diag_cmd) return cli::cmd_diagnose(diag);
    if (*exp_cmd) return cli::cmd_experiment(exp);
  } catch (const gmmem::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kExitError;
  }
  return cli::kExitError;
}
