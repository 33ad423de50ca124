#include <cstdlib>
#include <iostream>

#include <CLI11.hpp>

#include "permutopt/harness.hpp"

namespace fs = std::filesystem;
using namespace permutopt;

namespace {

ExperimentConfig load_with_override(const fs::path& path) {
  ExperimentConfig config = load_experiment_config(path);
  apply_seed_override(config, std::getenv("PERMUTOPT_SEED"));
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"permutopt: permutation-randomized optimization experiments"};
  app.require_subcommand(1);

  fs::path config_path;
  std::size_t workers = 0;
  fs::path out_dir;

  auto* run_cmd = app.add_subcommand("run", "Execute every (problem, optimizer, seed) run of a config");
  run_cmd->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--workers", workers, "Concurrent runs (default: config value)")->check(CLI::PositiveNumber);
  run_cmd->add_option("--out", out_dir, "Output root (default: config output_dir)");

  auto* coverage_cmd = app.add_subcommand("coverage", "Domain coverage of a multi-well config");
  coverage_cmd->add_option("config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  coverage_cmd->add_option("--workers", workers, "Concurrent runs")->check(CLI::PositiveNumber);
  coverage_cmd->add_option("--out", out_dir, "Output root");

  fs::path runs_dir;
  int variant = 2;
  std::size_t final_k = 10;
  auto* icc_cmd = app.add_subcommand("icc", "Intra-class correlation over the run records in a directory");
  icc_cmd->add_option("dir", runs_dir, "Directory searched recursively for run.json")
      ->required()
      ->check(CLI::ExistingDirectory);
  icc_cmd->add_option("--variant", variant, "1 = ICC(1,1), 2 = ICC(2,1)")->check(CLI::IsMember({1, 2}));
  icc_cmd->add_option("--final-k", final_k, "Average the last K losses of each run")->check(CLI::PositiveNumber);

  std::vector<fs::path> plot_inputs;
  fs::path plot_out = "plot_layer1.svg";
  auto* plot_cmd = app.add_subcommand("plot", "Loss curves of run.json files as SVG");
  plot_cmd->add_option("runs", plot_inputs, "run.json files")->required()->check(CLI::ExistingFile);
  plot_cmd->add_option("-o,--out", plot_out, "Output SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    CliRunOptions options;
    if (workers > 0) options.workers = workers;
    if (!out_dir.empty()) options.out = out_dir;

    if (*run_cmd) {
      const RunMatrixResult result = cli_run(load_with_override(config_path), options, std::cerr);
      std::cout << result.root.string() << '\n';
      return result.exit_code();
    }
    if (*coverage_cmd) {
      const RunMatrixResult result = cli_coverage(load_with_override(config_path), options, std::cerr);
      for (const auto& c : result.coverage) {
        std::cout << c.problem << ' ' << c.optimizer << " seed " << c.seed << ": covered "
                  << format_double(c.report.final_fraction()) << ", global cube "
                  << (c.report.global_cube_hit ? "hit" : "missed") << '\n';
      }
      std::cout << result.root.string() << '\n';
      return result.exit_code();
    }
    if (*icc_cmd) {
      const IccResult result = cli_icc(runs_dir, icc_variant_from_int(variant), final_k, std::cerr);
      std::cout << format_double(result.report().value) << '\n';
      return 0;
    }
    if (*plot_cmd) return cli_plot(plot_inputs, plot_out, std::cerr);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
