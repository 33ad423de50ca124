#include "permutopt/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>

namespace permutopt {

// ---------------------------------------------------------------------------
// Coverage
// ---------------------------------------------------------------------------

CoverageGrid::CoverageGrid(DomainBox box, std::size_t cells_per_dim, double delta)
    : box_(std::move(box)), cells_per_dim_(cells_per_dim), delta_(delta) {
  const Index d = box_.dimension();
  if (d < 1 || d > kMaxDimension) {
    throw UnsupportedDimensionError("CoverageGrid: dimension " + std::to_string(d) + " not in [1, 3]");
  }
  if (!box_.lo.allFinite() || !box_.hi.allFinite() || !(box_.lo.array() < box_.hi.array()).all()) {
    throw ParameterError("CoverageGrid: box must be finite with lo < hi");
  }
  if (cells_per_dim_ < 1) throw ParameterError("CoverageGrid: cells_per_dim must be >= 1");
  if (!(delta_ > 0.0) || !std::isfinite(delta_)) throw ParameterError("CoverageGrid: delta must be positive");
  std::size_t total = 1;
  for (Index i = 0; i < d; ++i) total *= cells_per_dim_;
  visited_.assign(total, false);
}

double CoverageGrid::covered_fraction() const {
  return static_cast<double>(covered_) / static_cast<double>(visited_.size());
}

Vector CoverageGrid::cell_center(std::size_t flat) const {
  const Index d = dimension();
  Vector c(d);
  for (Index axis = d; axis-- > 0;) {
    const std::size_t idx = flat % cells_per_dim_;
    flat /= cells_per_dim_;
    const double width = (box_.hi[axis] - box_.lo[axis]) / static_cast<double>(cells_per_dim_);
    c[axis] = box_.lo[axis] + (static_cast<double>(idx) + 0.5) * width;
  }
  return c;
}

void CoverageGrid::mark(const Vector& iterate) {
  const Index d = dimension();
  if (iterate.size() != d) {
    throw ShapeError("coverage_update: iterate of dimension " + std::to_string(iterate.size()) + " on a " +
                     std::to_string(d) + "-D grid");
  }
  const Vector x = box_.clamp(iterate);
  if ((x.array() != iterate.array()).any()) ++clipped_;

  // Candidate index range per axis, widened by one cell; membership is then
  // decided on the cell centers themselves.
  const auto n = static_cast<long>(cells_per_dim_);
  long lo_idx[kMaxDimension] = {0, 0, 0};
  long hi_idx[kMaxDimension] = {0, 0, 0};
  double width[kMaxDimension] = {0, 0, 0};
  for (Index a = 0; a < d; ++a) {
    width[a] = (box_.hi[a] - box_.lo[a]) / static_cast<double>(cells_per_dim_);
    const double first = (x[a] - delta_ - box_.lo[a]) / width[a] - 0.5;
    const double last = (x[a] + delta_ - box_.lo[a]) / width[a] - 0.5;
    lo_idx[a] = std::max(0L, static_cast<long>(std::floor(first)) - 1);
    hi_idx[a] = std::min(n - 1, static_cast<long>(std::ceil(last)) + 1);
    if (lo_idx[a] > hi_idx[a]) return;
  }
  auto inside = [&](Index a, long i) {
    const double center = box_.lo[a] + (static_cast<double>(i) + 0.5) * width[a];
    return std::abs(center - x[a]) <= delta_ + 1e-9 * width[a];
  };

  long idx[kMaxDimension] = {lo_idx[0], lo_idx[1], lo_idx[2]};
  for (Index a = 1; a < d; ++a) idx[a] = lo_idx[a];
  while (true) {
    bool ok = true;
    for (Index a = 0; a < d && ok; ++a) ok = inside(a, idx[a]);
    if (ok) {
      std::size_t flat = 0;
      for (Index a = 0; a < d; ++a) flat = flat * cells_per_dim_ + static_cast<std::size_t>(idx[a]);
      if (!visited_[flat]) {
        visited_[flat] = true;
        ++covered_;
      }
    }
    Index a = d - 1;
    while (a >= 0 && ++idx[a] > hi_idx[a]) {
      idx[a] = lo_idx[a];
      --a;
    }
    if (a < 0) break;
  }
}

void coverage_update(CoverageGrid& grid, const Vector& iterate) { grid.mark(iterate); }

double default_cube_radius(const RunRecord& run, double fallback_width) {
  std::vector<double> d = run.displacement_norms;
  double median = 0.0;
  if (!d.empty()) {
    std::sort(d.begin(), d.end());
    const std::size_t mid = d.size() / 2;
    median = d.size() % 2 ? d[mid] : 0.5 * (d[mid - 1] + d[mid]);
  }
  return median > 0.0 ? 2.0 * median : 0.5 * fallback_width;
}

CoverageReport coverage_report(const RunRecord& run, const CoverageConfig& config) {
  const Index dim = config.box.dimension();
  if (dim > CoverageGrid::kMaxDimension) {
    throw UnsupportedDimensionError("coverage_report: grid coverage supports D <= 3, got D = " +
                                    std::to_string(dim));
  }
  if (run.iterates.size() != run.losses.size()) {
    throw ParameterError("coverage_report: run '" + run.optimizer + "' has no recorded iterates");
  }
  double min_width = std::numeric_limits<double>::infinity();
  for (Index a = 0; a < dim; ++a) {
    min_width = std::min(min_width, (config.box.hi[a] - config.box.lo[a]) / static_cast<double>(config.cells_per_dim));
  }

  CoverageReport report;
  report.delta = config.delta.value_or(default_cube_radius(run, min_width));
  report.global_delta = config.global_delta.value_or(report.delta);
  CoverageGrid grid(config.box, config.cells_per_dim, report.delta);
  report.cells = grid.cell_count();
  report.fractions.reserve(run.iterates.size());
  for (std::size_t t = 0; t < run.iterates.size(); ++t) {
    const Vector& x = run.iterates[t];
    grid.mark(x);
    report.fractions.push_back(grid.covered_fraction());
    if (config.global_optimum && !report.global_cube_hit) {
      // Two closed cubes intersect iff their centers are within the sum of radii (sup norm).
      if ((x - *config.global_optimum).cwiseAbs().maxCoeff() <= report.delta + report.global_delta) {
        report.global_cube_hit = true;
        report.hit_iteration = t + 1;
      }
    }
  }
  report.clipped_iterates = grid.clipped_iterates();
  return report;
}

std::optional<std::size_t> first_iterate_in_cube(const RunRecord& run, const Vector& center, double radius) {
  for (std::size_t t = 0; t < run.iterates.size(); ++t) {
    if (run.iterates[t].size() != center.size()) throw ShapeError("first_iterate_in_cube: dimension mismatch");
    if ((run.iterates[t] - center).cwiseAbs().maxCoeff() <= radius) return t + 1;
  }
  return std::nullopt;
}

nlohmann::ordered_json to_json(const CoverageReport& r) {
  nlohmann::ordered_json j;
  j["delta"] = r.delta;
  j["global_delta"] = r.global_delta;
  j["cells"] = r.cells;
  j["final_fraction"] = r.final_fraction();
  j["global_cube_hit"] = r.global_cube_hit;
  j["hit_iteration"] = r.hit_iteration ? nlohmann::ordered_json(*r.hit_iteration) : nlohmann::ordered_json();
  j["clipped_iterates"] = r.clipped_iterates;
  j["fractions"] = r.fractions;
  return j;
}

// ---------------------------------------------------------------------------
// Contraction
// ---------------------------------------------------------------------------

ContractionProfile contraction_profile(std::span<const double> d) {
  if (d.size() < 3) throw ParameterError("contraction_profile: need at least 3 iterations");
  ContractionProfile p;
  std::vector<double> defined;
  for (std::size_t t = 0; t < d.size(); ++t) {
    if (d[t] < ContractionProfile::kStallDisplacement && !p.stall_iteration) p.stall_iteration = t + 1;
  }
  for (std::size_t t = 0; t + 1 < d.size(); ++t) {
    if (d[t] < ContractionProfile::kStallDisplacement) {
      p.ratios.emplace_back(std::nullopt);
    } else {
      p.ratios.emplace_back(d[t + 1] / d[t]);
      defined.push_back(d[t + 1] / d[t]);
    }
  }
  if (!defined.empty()) {
    std::size_t increasing = 0;
    double sum = 0.0;
    for (double r : defined) {
      sum += r;
      if (r > 1.0) ++increasing;
    }
    p.increasing_fraction = static_cast<double>(increasing) / static_cast<double>(defined.size());
    p.mean_ratio = sum / static_cast<double>(defined.size());
    std::sort(defined.begin(), defined.end());
    const std::size_t mid = defined.size() / 2;
    p.median_ratio = defined.size() % 2 ? defined[mid] : 0.5 * (defined[mid - 1] + defined[mid]);
  }
  return p;
}

ContractionProfile contraction_profile(const RunRecord& run) { return contraction_profile(run.displacement_norms); }

nlohmann::ordered_json to_json(const ContractionProfile& p) {
  nlohmann::ordered_json j;
  auto& ratios = j["ratios"] = nlohmann::ordered_json::array();
  for (const auto& r : p.ratios) ratios.push_back(r ? nlohmann::ordered_json(*r) : nlohmann::ordered_json());
  j["stall_iteration"] = p.stall_iteration ? nlohmann::ordered_json(*p.stall_iteration) : nlohmann::ordered_json();
  j["increasing_fraction"] = p.increasing_fraction;
  j["mean_ratio"] = p.mean_ratio;
  j["median_ratio"] = p.median_ratio;
  return j;
}

// ---------------------------------------------------------------------------
// ICC
// ---------------------------------------------------------------------------

IccVariant icc_variant_from_int(int v) {
  if (v == 1) return IccVariant::kOneWay;
  if (v == 2) return IccVariant::kTwoWay;
  throw ParameterError("ICC variant must be 1 or 2, got " + std::to_string(v));
}

std::string to_string(IccVariant v) { return v == IccVariant::kOneWay ? "ICC(1,1)" : "ICC(2,1)"; }

IccReport icc(const DenseMatrix& table, IccVariant variant) {
  const Index n = table.rows();
  const Index k = table.cols();
  if (n < 2 || k < 2) throw ParameterError("icc: need at least 2 subjects and 2 measurements");
  if (!table.allFinite()) throw NumericError("icc: table has non-finite entries");

  // Sums of squares:
  //   SS_between  = k sum_i (rowmean_i - m)^2                 df n-1
  //   SS_within   = sum_i sum_j (x_ij - rowmean_i)^2           df n(k-1)
  //   SS_raters   = n sum_j (colmean_j - m)^2                 df k-1
  //   SS_error    = SS_within - SS_raters                      df (n-1)(k-1)
  // The within and rater terms use the pairwise identity
  //   sum_j (v_j - mean)^2 = (1/k) sum_{j<l} (v_j - v_l)^2
  // so identical measurements contribute exactly zero.
  // ICC(1,1) = (MSB - MSW) / (MSB + (k-1) MSW)
  // ICC(2,1) = (MSB - MSE) / (MSB + (k-1) MSE + k (MSR - MSE) / n)
  auto pairwise_ss = [](const auto& v) {
    double ss = 0.0;
    for (Index j = 0; j < v.size(); ++j) {
      for (Index l = j + 1; l < v.size(); ++l) ss += (v[j] - v[l]) * (v[j] - v[l]);
    }
    return ss / static_cast<double>(v.size());
  };
  const double m = table.mean();
  const Vector row_mean = table.rowwise().mean();
  const Vector col_mean = table.colwise().mean().transpose();
  const double ss_between = static_cast<double>(k) * (row_mean.array() - m).square().sum();
  double ss_within = 0.0;
  for (Index i = 0; i < n; ++i) ss_within += pairwise_ss(table.row(i));
  const double ss_raters = static_cast<double>(n) * pairwise_ss(col_mean);
  if (ss_between == 0.0 && ss_within == 0.0) throw DegenerateDataError("icc: table has zero total variance");
  const double ss_error = std::max(0.0, ss_within - ss_raters);

  const auto nd = static_cast<double>(n);
  const auto kd = static_cast<double>(k);
  IccReport r;
  r.variant = variant;
  r.subjects = n;
  r.measurements = k;
  r.ms_between = ss_between / (nd - 1.0);
  r.ms_within = ss_within / (nd * (kd - 1.0));
  r.ms_raters = ss_raters / (kd - 1.0);
  r.ms_error = ss_error / ((nd - 1.0) * (kd - 1.0));
  if (variant == IccVariant::kOneWay) {
    r.value = (r.ms_between - r.ms_within) / (r.ms_between + (kd - 1.0) * r.ms_within);
  } else {
    r.value = (r.ms_between - r.ms_error) /
              (r.ms_between + (kd - 1.0) * r.ms_error + kd * (r.ms_raters - r.ms_error) / nd);
  }
  return r;
}

nlohmann::ordered_json to_json(const IccReport& r) {
  nlohmann::ordered_json j;
  j["variant"] = to_string(r.variant);
  j["value"] = r.value;
  j["subjects"] = r.subjects;
  j["measurements"] = r.measurements;
  j["ms_between"] = r.ms_between;
  j["ms_within"] = r.ms_within;
  j["ms_raters"] = r.ms_raters;
  j["ms_error"] = r.ms_error;
  return j;
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

namespace {

std::pair<double, double> mean_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  if (v.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / static_cast<double>(v.size() - 1))};
}

}  // namespace

std::vector<RunSummary> summarize_runs(std::span<const RunRecord> records) {
  if (records.empty()) throw ParameterError("summarize_runs: no records");
  std::vector<std::pair<std::string, std::string>> order;
  std::map<std::pair<std::string, std::string>, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (const auto& r : records) {
    if (r.losses.empty()) throw ParameterError("summarize_runs: record '" + r.optimizer + "' has no iterations");
    const auto key = std::make_pair(r.problem, r.optimizer);
    if (!groups.count(key)) order.push_back(key);
    groups[key].first.push_back(r.losses.back());
    groups[key].second.push_back(r.wall_time_seconds);
  }
  std::vector<RunSummary> out;
  for (const auto& key : order) {
    const auto& [losses, times] = groups[key];
    RunSummary s;
    s.problem = key.first;
    s.optimizer = key.second;
    s.runs = losses.size();
    std::tie(s.final_loss_mean, s.final_loss_std) = mean_std(losses);
    std::tie(s.wall_time_mean, s.wall_time_std) = mean_std(times);
    out.push_back(std::move(s));
  }
  return out;
}

void write_summary_csv(std::ostream& out, std::span<const RunSummary> rows) {
  out << "problem,optimizer,runs,final_loss_mean,final_loss_std,wall_time_mean,wall_time_std\n";
  for (const auto& r : rows) {
    out << r.problem << ',' << r.optimizer << ',' << r.runs << ',' << format_double(r.final_loss_mean) << ','
        << format_double(r.final_loss_std) << ',' << format_double(r.wall_time_mean) << ','
        << format_double(r.wall_time_std) << '\n';
  }
}

}  // namespace permutopt
