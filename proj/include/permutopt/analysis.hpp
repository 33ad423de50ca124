#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "permutopt/numkit.hpp"
#include "permutopt/optimizers.hpp"
#include "permutopt/problems.hpp"

namespace permutopt {

// ---------------------------------------------------------------------------
// Coverage of the domain by iterate cubes
// ---------------------------------------------------------------------------

/// Uniform grid over a finite box (dimension <= 3). A cell counts as covered
/// once its center falls inside a closed cube B(x, delta) around some iterate.
class CoverageGrid {
 public:
  static constexpr Index kMaxDimension = 3;

  CoverageGrid(DomainBox box, std::size_t cells_per_dim, double delta);

  Index dimension() const { return box_.dimension(); }
  const DomainBox& box() const { return box_; }
  std::size_t cells_per_dim() const { return cells_per_dim_; }
  double delta() const { return delta_; }
  std::size_t cell_count() const { return visited_.size(); }
  std::size_t covered_count() const { return covered_; }
  double covered_fraction() const;
  bool visited(std::size_t flat_index) const { return visited_[flat_index]; }
  Vector cell_center(std::size_t flat_index) const;
  /// Iterates that had to be clipped onto the box before marking.
  std::size_t clipped_iterates() const { return clipped_; }

  void mark(const Vector& iterate);

 private:
  DomainBox box_;
  std::size_t cells_per_dim_;
  double delta_;
  std::vector<bool> visited_;
  std::size_t covered_ = 0;
  std::size_t clipped_ = 0;
};

void coverage_update(CoverageGrid& grid, const Vector& iterate);

struct CoverageConfig {
  DomainBox box;
  std::size_t cells_per_dim = 200;
  std::optional<double> delta;  ///< empty = default_cube_radius(run)
  std::optional<Vector> global_optimum;
  std::optional<double> global_delta;  ///< empty = the run's delta
};

struct CoverageReport {
  std::vector<double> fractions;  ///< after each iterate
  double delta = 0.0;
  double global_delta = 0.0;
  std::size_t cells = 0;
  std::size_t clipped_iterates = 0;
  bool global_cube_hit = false;
  std::optional<std::size_t> hit_iteration;

  double final_fraction() const { return fractions.empty() ? 0.0 : fractions.back(); }
};

/// 2 * median step displacement; half a cell width of `fallback_width` when
/// the median is zero.
double default_cube_radius(const RunRecord& run, double fallback_width);

/// Requires recorded iterates of dimension <= 3.
CoverageReport coverage_report(const RunRecord& run, const CoverageConfig& config);

/// First iteration (1-based) whose iterate lies in the closed cube B(center, radius).
std::optional<std::size_t> first_iterate_in_cube(const RunRecord& run, const Vector& center, double radius);

nlohmann::ordered_json to_json(const CoverageReport& report);

// ---------------------------------------------------------------------------
// Contraction / stall
// ---------------------------------------------------------------------------

struct ContractionProfile {
  static constexpr double kStallDisplacement = 1.0e-12;

  /// ratios[t-1] = d_{t+1} / d_t; empty entries mark d_t below kStallDisplacement.
  std::vector<std::optional<double>> ratios;
  std::optional<std::size_t> stall_iteration;  ///< first t with d_t < kStallDisplacement
  double increasing_fraction = 0.0;            ///< share of defined ratios > 1
  double mean_ratio = 0.0;
  double median_ratio = 0.0;
};

ContractionProfile contraction_profile(std::span<const double> displacement_norms);
ContractionProfile contraction_profile(const RunRecord& run);
nlohmann::ordered_json to_json(const ContractionProfile& profile);

// ---------------------------------------------------------------------------
// Intra-class correlation
// ---------------------------------------------------------------------------

enum class IccVariant {
  kOneWay,  ///< ICC(1,1): one-way random effects, single measures
  kTwoWay   ///< ICC(2,1): two-way random effects, absolute agreement, single measures
};

IccVariant icc_variant_from_int(int v);
std::string to_string(IccVariant v);

struct IccReport {
  IccVariant variant = IccVariant::kTwoWay;
  double value = 0.0;
  Index subjects = 0;      ///< n
  Index measurements = 0;  ///< k
  double ms_between = 0.0;  ///< subjects (rows)
  double ms_within = 0.0;   ///< residual of the one-way model
  double ms_raters = 0.0;   ///< measurements (columns)
  double ms_error = 0.0;    ///< residual of the two-way model
};

/// `table` is n subjects x k measurements.
IccReport icc(const DenseMatrix& table, IccVariant variant = IccVariant::kTwoWay);
nlohmann::ordered_json to_json(const IccReport& report);

// ---------------------------------------------------------------------------
// Run summaries
// ---------------------------------------------------------------------------

struct RunSummary {
  std::string problem;
  std::string optimizer;
  std::size_t runs = 0;
  double final_loss_mean = 0.0;
  double final_loss_std = 0.0;  ///< sample standard deviation; 0 for a single run
  double wall_time_mean = 0.0;
  double wall_time_std = 0.0;
};

/// One row per (problem, optimizer), in order of first appearance.
std::vector<RunSummary> summarize_runs(std::span<const RunRecord> records);
void write_summary_csv(std::ostream& out, std::span<const RunSummary> rows);

}  // namespace permutopt
