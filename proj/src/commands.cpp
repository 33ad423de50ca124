#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "permutopt/harness.hpp"

namespace permutopt {

namespace {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

bool write_file(const fs::path& path, const std::string& content, std::ostream& log, std::mutex& log_mutex) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  out << content;
  out.close();
  if (!ec && out) return true;
  std::lock_guard lock(log_mutex);
  log << "error: failed to write " << path.string() << '\n';
  return false;
}

template <class Job>
void parallel_for(std::size_t count, std::size_t workers, Job&& job) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        job(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  const std::size_t n = std::max<std::size_t>(1, std::min(workers, count));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (std::size_t i = 0; i < n; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

/// Iteration-wise mean of `field` over the completed runs of one label.
PlotSeries mean_curve(const std::string& label, const std::vector<const RunRecord*>& runs,
                      const std::vector<double> RunRecord::*field) {
  PlotSeries s;
  s.label = label;
  std::size_t length = std::numeric_limits<std::size_t>::max();
  for (const auto* r : runs) length = std::min(length, (r->*field).size());
  if (runs.empty() || length == 0) return s;
  for (std::size_t t = 0; t < length; ++t) {
    double sum = 0.0;
    for (const auto* r : runs) sum += (r->*field)[t];
    s.x.push_back(static_cast<double>(t + 1));
    s.y.push_back(sum / static_cast<double>(runs.size()));
  }
  return s;
}

std::vector<std::pair<std::string, std::vector<const RunRecord*>>> by_label(
    const std::vector<const RunRecord*>& records) {
  std::vector<std::pair<std::string, std::vector<const RunRecord*>>> groups;
  for (const auto* r : records) {
    if (r->aborted) continue;
    auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return g.first == r->optimizer; });
    if (it == groups.end()) {
      groups.emplace_back(r->optimizer, std::vector<const RunRecord*>{});
      it = std::prev(groups.end());
    }
    it->second.push_back(r);
  }
  return groups;
}

std::optional<std::string> curve_svg(const std::string& title, const std::string& y_label,
                                     const std::vector<const RunRecord*>& records,
                                     const std::vector<double> RunRecord::*field, bool log_y) {
  PlotSpec spec;
  spec.title = title;
  spec.y_label = y_label;
  spec.log_y = log_y;
  for (const auto& [label, runs] : by_label(records)) {
    PlotSeries s = mean_curve(label, runs, field);
    if (!s.x.empty()) spec.series.push_back(std::move(s));
  }
  if (spec.series.empty()) return std::nullopt;
  bool any_positive = false;
  for (const auto& s : spec.series) {
    for (double v : s.y) any_positive = any_positive || v > 0.0;
  }
  spec.log_y = log_y && any_positive;
  return emit_svg(spec);
}

const MultiWellProblem* as_multiwell(const Problem& p) { return dynamic_cast<const MultiWellProblem*>(&p.base()); }

Json contraction_json(const std::vector<const RunRecord*>& records) {
  Json runs = Json::array();
  for (const auto* r : records) {
    Json j;
    j["optimizer"] = r->optimizer;
    j["seed"] = r->seed;
    if (r->displacement_norms.size() < 3) {
      j["error"] = "run too short";
    } else {
      const ContractionProfile p = contraction_profile(*r);
      j["stall_iteration"] = p.stall_iteration ? Json(*p.stall_iteration) : Json();
      j["increasing_fraction"] = p.increasing_fraction;
      j["mean_ratio"] = p.mean_ratio;
      j["median_ratio"] = p.median_ratio;
    }
    runs.push_back(std::move(j));
  }
  return Json{{"runs", runs}};
}

}  // namespace

// ---------------------------------------------------------------------------
// ICC over run records
// ---------------------------------------------------------------------------

IccTable icc_table(std::span<const RunRecord> records, std::size_t final_k) {
  if (records.size() < 2) throw ParameterError("icc: need at least 2 run records, got " + std::to_string(records.size()));
  const std::size_t length = records.front().losses.size();
  for (const auto& r : records) {
    if (r.losses.size() != length) {
      throw ShapeError("icc: ragged run records (" + std::to_string(r.losses.size()) + " vs " +
                       std::to_string(length) + " losses in " + r.problem + "/" + r.optimizer + "/" +
                       std::to_string(r.seed) + ")");
    }
  }
  if (final_k < 1 || final_k > length) {
    throw ParameterError("icc: final_k must be in [1, " + std::to_string(length) + "], got " + std::to_string(final_k));
  }

  using SubjectKey = std::pair<std::string, std::uint64_t>;
  std::set<SubjectKey> subjects;
  std::set<std::string> labels;
  std::map<std::pair<SubjectKey, std::string>, double> cells;
  for (const auto& r : records) {
    double sum = 0.0;
    for (std::size_t t = length - final_k; t < length; ++t) sum += r.losses[t];
    const SubjectKey subject{r.problem, r.seed};
    subjects.insert(subject);
    labels.insert(r.optimizer);
    if (!cells.emplace(std::make_pair(subject, r.optimizer), sum / static_cast<double>(final_k)).second) {
      throw DegenerateDataError("icc: duplicated run " + r.problem + "/" + r.optimizer + "/" + std::to_string(r.seed) +
                                " (identical measurements carry zero variance)");
    }
  }

  IccTable out;
  out.table.resize(static_cast<Index>(subjects.size()), static_cast<Index>(labels.size()));
  Index i = 0;
  for (const auto& subject : subjects) {
    out.subjects.push_back(subject.first + "/" + std::to_string(subject.second));
    Index j = 0;
    for (const auto& label : labels) {
      const auto it = cells.find({subject, label});
      if (it == cells.end()) {
        throw ShapeError("icc: no run for " + label + " on " + out.subjects.back());
      }
      out.table(i, j++) = it->second;
    }
    ++i;
  }
  out.measurements.assign(labels.begin(), labels.end());
  return out;
}

std::vector<RunRecord> load_run_records(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ParameterError("not a directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().filename() == "run.json") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<RunRecord> records;
  for (const auto& f : files) {
    std::ifstream in(f);
    try {
      records.push_back(run_record_from_json(Json::parse(in)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(f.string() + ": " + e.what());
    }
  }
  return records;
}

Json to_json(const IccResult& r, std::size_t final_k) {
  Json j;
  j["variant"] = to_string(r.selected);
  j["value"] = r.report().value;
  j["final_k"] = final_k;
  j["subjects"] = r.table.subjects;
  j["measurements"] = r.table.measurements;
  Json table = Json::array();
  for (Index i = 0; i < r.table.table.rows(); ++i) {
    Json row = Json::array();
    for (Index k = 0; k < r.table.table.cols(); ++k) row.push_back(r.table.table(i, k));
    table.push_back(std::move(row));
  }
  j["table"] = std::move(table);
  j["icc_1_1"] = to_json(r.one_way);
  j["icc_2_1"] = to_json(r.two_way);
  return j;
}

namespace {

IccResult compute_icc(std::span<const RunRecord> records, IccVariant variant, std::size_t final_k) {
  IccResult r;
  r.table = icc_table(records, final_k);
  r.one_way = icc(r.table.table, IccVariant::kOneWay);
  r.two_way = icc(r.table.table, IccVariant::kTwoWay);
  r.selected = variant;
  return r;
}

}  // namespace

// ---------------------------------------------------------------------------
// run / coverage
// ---------------------------------------------------------------------------

RunMatrixResult cli_run(const ExperimentConfig& config, const CliRunOptions& options, std::ostream& log) {
  validate(config);
  std::mutex log_mutex;
  RunMatrixResult result;
  result.root = options.out.value_or(fs::path(config.output_dir)) / config_hash(config);

  std::vector<std::shared_ptr<const Problem>> problems;
  for (const auto& spec : config.problems) problems.push_back(make_problem(spec, config.base_dir));

  struct Job {
    std::size_t problem;
    std::size_t optimizer;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (std::size_t p = 0; p < problems.size(); ++p) {
    for (std::size_t o = 0; o < config.optimizers.size(); ++o) {
      for (std::uint64_t seed : config.seeds) jobs.push_back({p, o, seed});
    }
  }

  if (!write_file(result.root / "config.json", to_json(config).dump(2) + "\n", log, log_mutex)) {
    ++result.write_failures;
  }

  std::vector<RunRecord> records(jobs.size());
  std::atomic<std::size_t> aborted{0};
  std::atomic<std::size_t> failures{0};
  std::atomic<std::size_t> done{0};
  parallel_for(jobs.size(), options.workers.value_or(config.workers), [&](std::size_t i) {
    const Job& job = jobs[i];
    const Problem& problem = *problems[job.problem];
    const OptimizerConfig& opt = config.optimizers[job.optimizer];
    const fs::path dir = result.root / problem.id() / opt.display_label() / std::to_string(job.seed);

    RunOptions run_options;
    std::ofstream stream;
    if (config.stream_iterations) {
      fs::create_directories(dir);
      stream.open(dir / "iterations.jsonl", std::ios::binary);
      run_options.on_iteration = [&stream](const RunRecord& r) {
        stream << iteration_json(r, r.iterations() - 1).dump() << '\n';
      };
    }
    RunRecord record;
    try {
      record = run(opt, problem, config.iterations, job.seed, run_options);
    } catch (const RunAborted& e) {
      record = e.partial();
      ++aborted;
    }
    if (stream.is_open()) {
      stream.close();
      if (!stream) ++failures;
    }
    if (!write_file(dir / "run.json", to_json(record).dump(2) + "\n", log, log_mutex)) ++failures;
    {
      std::lock_guard lock(log_mutex);
      log << '[' << ++done << '/' << jobs.size() << "] " << problem.id() << ' ' << opt.display_label() << " seed "
          << job.seed;
      if (record.aborted) {
        log << " ABORTED: " << record.abort_reason << '\n';
      } else {
        log << " final loss " << format_double(record.losses.back()) << '\n';
      }
    }
    records[i] = std::move(record);
  });
  result.aborted = aborted;
  result.write_failures += failures;

  for (std::size_t p = 0; p < problems.size(); ++p) {
    const Problem& problem = *problems[p];
    const fs::path dir = result.root / problem.id();
    std::vector<const RunRecord*> mine;
    std::vector<RunRecord> copies;
    for (std::size_t i = 0; i < jobs.size(); ++i) {
      if (jobs[i].problem == p) {
        mine.push_back(&records[i]);
        copies.push_back(records[i]);
      }
    }
    auto put = [&](const std::string& name, const std::string& content) {
      if (!write_file(dir / name, content, log, log_mutex)) ++result.write_failures;
    };

    std::ostringstream csv;
    write_summary_csv(csv, summarize_runs(copies));
    put("summary.csv", csv.str());
    if (auto svg = curve_svg(problem.id() + ": loss", "loss", mine, &RunRecord::losses, true)) {
      put("plot_layer1.svg", *svg);
    }
    if (auto svg = curve_svg(problem.id() + ": gradient norm", "gradient norm", mine, &RunRecord::grad_norms, true)) {
      put("plot_grad_norm.svg", *svg);
    }

    if (config.analysis.contraction) put("contraction.json", contraction_json(mine).dump(2) + "\n");

    if (config.analysis.icc) {
      Json j;
      try {
        j = to_json(compute_icc(copies, icc_variant_from_int(config.analysis.icc_variant), config.analysis.final_k),
                    config.analysis.final_k);
      } catch (const Error& e) {
        j = Json{{"error", e.what()}};
      }
      put("icc.json", j.dump(2) + "\n");
    }

    const MultiWellProblem* mw = as_multiwell(problem);
    if (config.analysis.coverage && mw != nullptr && problem.dimension() <= CoverageGrid::kMaxDimension) {
      CoverageConfig cc;
      cc.box = problem.domain();
      cc.cells_per_dim = config.analysis.cells_per_dim;
      cc.delta = config.analysis.delta;
      cc.global_optimum = problem.global_optimum();
      Json runs = Json::array();
      std::vector<const RunRecord*> completed;
      PlotSpec spec;
      spec.title = problem.id() + ": covered fraction";
      spec.y_label = "covered fraction";
      std::map<std::string, std::pair<double, std::size_t>> final_by_label;
      std::map<std::string, std::vector<std::vector<double>>> curves;
      std::vector<std::string> label_order;
      for (const auto* r : mine) {
        if (r->aborted) continue;
        CoverageRun cr{problem.id(), r->optimizer, r->seed, coverage_report(*r, cc), r->losses.back()};
        Json j;
        j["optimizer"] = cr.optimizer;
        j["seed"] = cr.seed;
        j["final_loss"] = cr.final_loss;
        const Json report = to_json(cr.report);
        for (const auto& [k, v] : report.items()) j[k] = v;
        runs.push_back(std::move(j));
        if (!curves.count(cr.optimizer)) label_order.push_back(cr.optimizer);
        curves[cr.optimizer].push_back(cr.report.fractions);
        auto& acc = final_by_label[cr.optimizer];
        acc.first += cr.report.final_fraction();
        ++acc.second;
        result.coverage.push_back(std::move(cr));
      }
      Json means;
      for (const auto& label : label_order) {
        means[label] = final_by_label[label].first / static_cast<double>(final_by_label[label].second);
        PlotSeries s;
        s.label = label;
        const auto& cs = curves[label];
        std::size_t length = cs.front().size();
        for (const auto& c : cs) length = std::min(length, c.size());
        for (std::size_t t = 0; t < length; ++t) {
          double sum = 0.0;
          for (const auto& c : cs) sum += c[t];
          s.x.push_back(static_cast<double>(t + 1));
          s.y.push_back(sum / static_cast<double>(cs.size()));
        }
        if (!s.x.empty()) spec.series.push_back(std::move(s));
      }
      Json j;
      j["problem"] = problem.id();
      j["cells_per_dim"] = cc.cells_per_dim;
      j["mean_final_fraction"] = means;
      j["runs"] = std::move(runs);
      put("coverage.json", j.dump(2) + "\n");
      if (!spec.series.empty()) put("coverage.svg", emit_svg(spec));
    }
  }

  result.records = std::move(records);
  return result;
}

RunMatrixResult cli_coverage(const ExperimentConfig& config, const CliRunOptions& options, std::ostream& log) {
  validate(config);
  for (const auto& spec : config.problems) {
    if (spec.type != "multiwell") {
      throw ParameterError("coverage: problem '" + (spec.id.empty() ? spec.type : spec.id) +
                           "' is not a multiwell problem");
    }
    if (spec.a.size() > static_cast<std::size_t>(CoverageGrid::kMaxDimension)) {
      throw UnsupportedDimensionError("coverage: grid coverage supports D <= 3, got D = " +
                                      std::to_string(spec.a.size()));
    }
  }
  ExperimentConfig with_coverage = config;
  with_coverage.analysis.coverage = true;
  return cli_run(with_coverage, options, log);
}

// ---------------------------------------------------------------------------
// icc / plot
// ---------------------------------------------------------------------------

IccResult cli_icc(const fs::path& dir, IccVariant variant, std::size_t final_k, std::ostream& log) {
  const std::vector<RunRecord> records = load_run_records(dir);
  IccResult result = compute_icc(records, variant, final_k);
  std::mutex log_mutex;
  if (!write_file(dir / "icc.json", to_json(result, final_k).dump(2) + "\n", log, log_mutex)) {
    throw Error("icc: failed to write " + (dir / "icc.json").string());
  }
  log << "ICC(1,1) = " << format_double(result.one_way.value) << '\n';
  log << "ICC(2,1) = " << format_double(result.two_way.value) << '\n';
  log << "selected " << to_string(variant) << " over " << result.table.subjects.size() << " subjects x "
      << result.table.measurements.size() << " measurements\n";
  return result;
}

int cli_plot(const std::vector<fs::path>& runs, const fs::path& out, std::ostream& log) {
  if (runs.empty()) throw ParameterError("plot: no run files given");
  PlotSpec spec;
  spec.title = "loss";
  spec.y_label = "loss";
  spec.log_y = true;
  bool any_positive = false;
  for (const auto& path : runs) {
    std::ifstream in(path);
    if (!in) throw ParameterError("plot: cannot open " + path.string());
    RunRecord r;
    try {
      r = run_record_from_json(nlohmann::ordered_json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ": " + e.what());
    }
    PlotSeries s;
    s.label = r.problem + "/" + r.optimizer + "/" + std::to_string(r.seed);
    for (std::size_t t = 0; t < r.losses.size(); ++t) {
      s.x.push_back(static_cast<double>(t + 1));
      s.y.push_back(r.losses[t]);
      any_positive = any_positive || r.losses[t] > 0.0;
    }
    spec.series.push_back(std::move(s));
  }
  spec.log_y = any_positive;
  std::mutex log_mutex;
  if (!write_file(out, emit_svg(spec), log, log_mutex)) return 1;
  log << "wrote " << out.string() << '\n';
  return 0;
}

}  // namespace permutopt
