#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "permutopt/analysis.hpp"
#include "permutopt/optimizers.hpp"
#include "permutopt/problems.hpp"

namespace permutopt {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// JSON problem description. Fields that do not apply to `type` stay at
/// their defaults and are not serialized.
struct ProblemSpec {
  std::string type = "dnmf";  ///< dnmf | stacked | logistic | multiwell | quadratic
  std::string id;             ///< empty = type

  // dnmf / stacked: synthetic data S = A B + noise * E
  Index rows = 0;
  Index cols = 0;
  Index rank = 0;
  std::vector<Index> inner;  ///< empty = {rank, rank}; stacked uses inner[0] for all three layers
  std::uint64_t seed = 0;
  double noise = 0.0;
  double l1_weight = 0.01;

  // logistic
  std::string dataset;  ///< relative paths resolve against the config file's directory
  bool has_header = true;
  double l2_weight = 0.0;

  // multiwell
  std::vector<double> a;
  std::vector<double> b;
  std::vector<double> c;

  // quadratic
  std::vector<double> curvature;
  std::vector<double> center;

  // multiwell / quadratic
  std::vector<double> box_lo;
  std::vector<double> box_hi;
  std::vector<double> init_lo;
  std::vector<double> init_hi;

  // gradient noise wrapper; period 0 = none
  std::size_t period = 0;
  double gradient_noise = 0.1;

  friend bool operator==(const ProblemSpec&, const ProblemSpec&) = default;
};

nlohmann::ordered_json to_json(const ProblemSpec& spec);
ProblemSpec problem_spec_from_json(const nlohmann::ordered_json& j, const std::string& where = "problem");

std::shared_ptr<const Problem> make_problem(const ProblemSpec& spec, const std::filesystem::path& base_dir = {});

struct AnalysisToggles {
  bool coverage = false;
  bool icc = false;
  bool contraction = false;
  std::size_t cells_per_dim = 200;
  std::optional<double> delta;  ///< empty = per-run default_cube_radius
  std::size_t final_k = 10;
  int icc_variant = 2;

  friend bool operator==(const AnalysisToggles&, const AnalysisToggles&) = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  std::vector<ProblemSpec> problems;
  std::vector<OptimizerConfig> optimizers;
  std::size_t iterations = 2000;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "out";
  std::size_t workers = 1;
  bool stream_iterations = false;  ///< also write iterations.jsonl per run
  AnalysisToggles analysis;

  /// Directory of the config file; not serialized.
  std::filesystem::path base_dir;

  bool operator==(const ExperimentConfig& other) const;
};

nlohmann::ordered_json to_json(const ExperimentConfig& config);
ExperimentConfig experiment_config_from_json(const nlohmann::ordered_json& j, std::filesystem::path base_dir = {});
/// Parse errors carry line/column for malformed JSON and the field path for schema errors.
ExperimentConfig parse_experiment_config(const std::string& text, std::filesystem::path base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Throws RegistryError for unknown optimizers and ParameterError for empty
/// or colliding run matrices.
void validate(const ExperimentConfig& config);

/// 16 hex digits of FNV-1a over the canonical JSON, ignoring output_dir and workers.
std::string config_hash(const ExperimentConfig& config);

/// Replaces the seed list with the single value of PERMUTOPT_SEED when set.
void apply_seed_override(ExperimentConfig& config, const char* env_value);

// ---------------------------------------------------------------------------
// Plots
// ---------------------------------------------------------------------------

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

struct PlotSpec {
  std::string title;
  std::string x_label = "iteration";
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<PlotSeries> series;
  std::filesystem::path path;
};

/// Standalone SVG: one polyline per series, legend, ticked axes.
std::string emit_svg(const PlotSpec& spec);
std::string xml_escape(const std::string& text);

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

struct DatasetSchema {
  bool has_header = true;  ///< first line holds column names
  /// Column 0 holds the 0/1 label; the rest are features.
  double l2_weight = 0.0;
  std::string id = "logistic";
};

struct LoadedDataset {
  std::shared_ptr<LogisticProblem> problem;
  Index rows = 0;
  Index features = 0;
};

/// Features are z-scored per column; zero-variance columns become zeros.
LoadedDataset load_dataset_csv(const std::filesystem::path& path, const DatasetSchema& schema = {});
LoadedDataset read_dataset_csv(std::istream& in, const DatasetSchema& schema = {});

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

struct IccTable {
  DenseMatrix table;                      ///< subjects x measurements
  std::vector<std::string> subjects;      ///< "<problem>/<seed>"
  std::vector<std::string> measurements;  ///< optimizer labels
};

/// Cell (subject, label) = mean of the final K losses of that run.
IccTable icc_table(std::span<const RunRecord> records, std::size_t final_k);

std::vector<RunRecord> load_run_records(const std::filesystem::path& dir);

struct CoverageRun {
  std::string problem;
  std::string optimizer;
  std::uint64_t seed = 0;
  CoverageReport report;
  double final_loss = 0.0;
};

struct RunMatrixResult {
  std::filesystem::path root;  ///< <out>/<config-hash>
  std::vector<RunRecord> records;
  std::vector<CoverageRun> coverage;  ///< filled when coverage analysis ran
  std::size_t aborted = 0;
  std::size_t write_failures = 0;
  int exit_code() const { return aborted || write_failures ? 1 : 0; }
};

struct CliRunOptions {
  std::optional<std::size_t> workers;
  std::optional<std::filesystem::path> out;
};

/// Runs every (problem, optimizer, seed) and writes
/// <out>/<hash>/<problem>/<optimizer>/<seed>/run.json plus per-problem
/// summary.csv, plot_layer1.svg (loss) and plot_grad_norm.svg.
RunMatrixResult cli_run(const ExperimentConfig& config, const CliRunOptions& options, std::ostream& log);

/// cli_run with coverage analysis on; every problem must be a multi-well
/// problem of dimension <= 3. Adds coverage.json and coverage.svg per problem.
RunMatrixResult cli_coverage(const ExperimentConfig& config, const CliRunOptions& options, std::ostream& log);

struct IccResult {
  IccTable table;
  IccReport one_way;
  IccReport two_way;
  IccVariant selected = IccVariant::kTwoWay;
  const IccReport& report() const { return selected == IccVariant::kOneWay ? one_way : two_way; }
};

nlohmann::ordered_json to_json(const IccResult& result, std::size_t final_k);

/// Reads every run.json under `dir`, writes <dir>/icc.json.
IccResult cli_icc(const std::filesystem::path& dir, IccVariant variant, std::size_t final_k, std::ostream& log);

/// Loss curves of the given run files in one SVG.
int cli_plot(const std::vector<std::filesystem::path>& runs, const std::filesystem::path& out, std::ostream& log);

}  // namespace permutopt
