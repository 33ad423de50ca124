#include <gtest/gtest.h>

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <cmath>
#include <fstream>
#include <sstream>

#include "permutopt/harness.hpp"
#include "test_support.hpp"

using namespace permutopt;
namespace fs = std::filesystem;

namespace {

const char* kBundled[] = {"dnmf-compare", "multiwell-coverage", "noisy-dnmf", "logistic"};

fs::path bundled(const std::string& name) {
  return permutopt::testing::source_dir() / "configs" / (name + ".json");
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("permutopt-test-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

std::size_t count(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

const char* kTinyConfig = R"({
  "name": "tiny",
  "problem": {"type": "quadratic", "curvature": [1, 2], "center": [0, 0],
              "init_box": {"lo": [0.5, 0.5], "hi": [1, 1]}},
  "optimizers": [{"name": "adam", "alpha": 0.01}],
  "iterations": 10,
  "seeds": [3]
})";

bool well_formed_xml(const std::string& text) {
  std::istringstream in(text);
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_xml(in, tree);
  } catch (const boost::property_tree::xml_parser_error&) {
    return false;
  }
  return tree.count("svg") == 1;
}

RunRecord fake_run(const std::string& problem, const std::string& optimizer, std::uint64_t seed,
                   std::vector<double> losses) {
  RunRecord r;
  r.problem = problem;
  r.optimizer = optimizer;
  r.config.name = "adam";
  r.config.label = optimizer;
  r.seed = seed;
  r.max_iterations = losses.size();
  r.grad_norms.assign(losses.size(), 1.0);
  r.displacement_norms.assign(losses.size(), 0.1);
  r.losses = std::move(losses);
  r.initial_params = Vector::Zero(1);
  r.final_params = Vector::Zero(1);
  return r;
}

void write_run(const fs::path& root, const RunRecord& r) {
  const fs::path dir = root / r.problem / r.optimizer / std::to_string(r.seed);
  fs::create_directories(dir);
  std::ofstream(dir / "run.json") << to_json(r).dump(2);
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

TEST(Config, BundledConfigsRoundTrip) {
  for (const char* name : kBundled) {
    const ExperimentConfig c = load_experiment_config(bundled(name));
    const ExperimentConfig back = experiment_config_from_json(to_json(c), c.base_dir);
    EXPECT_EQ(back, c) << name;
    EXPECT_EQ(to_json(back), to_json(c)) << name;
    EXPECT_EQ(c.name, name);
  }
}

TEST(Config, BundledConfigsBuildTheirProblems) {
  for (const char* name : kBundled) {
    const ExperimentConfig c = load_experiment_config(bundled(name));
    for (const auto& p : c.problems) EXPECT_NO_THROW(make_problem(p, c.base_dir)) << name;
  }
}

TEST(Config, DefaultsApply) {
  const ExperimentConfig c = parse_experiment_config(R"({
    "problem": {"type": "dnmf", "shapes": {"rows": 6, "cols": 5, "rank": 2}},
    "optimizers": [{"name": "adam"}]})");
  EXPECT_EQ(c.iterations, 2000u);
  EXPECT_EQ(c.optimizers[0].threshold, 1e-2);
  const auto p = make_problem(c.problems[0]);
  const auto& dnmf = dynamic_cast<const DnmfProblem&>(*p);
  EXPECT_EQ(dnmf.shapes().inner, (std::vector<Index>{2, 2}));
  EXPECT_EQ(dnmf.l1_weight(), 0.01);
}

TEST(Config, MalformedJsonReportsLine) {
  try {
    parse_experiment_config("{\n  \"name\": \"x\",\n  \"seeds\": [1,,2]\n}");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Config, SchemaErrorsNameTheField) {
  try {
    parse_experiment_config(R"({"problem": {"type": "dnmf", "shapes": {"rows": 4, "cols": 4, "rank": 2}},
                               "optimizers": [{"name": "adam"}, {"name": "gd", "alpha": "big"}]})");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("optimizers[1].alpha"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_experiment_config(R"({"problem": {"type": "sphere"}, "optimizers": [{"name": "adam"}]})"),
               ParseError);
  EXPECT_THROW(parse_experiment_config(R"({"problem": {"type": "dnmf", "shapes": {"rows": 4, "cols": 4, "rank": 2},
                                           "colour": 1}, "optimizers": [{"name": "adam"}]})"),
               ParseError);
}

TEST(Config, UnknownOptimizerListsRegisteredNames) {
  try {
    parse_experiment_config(R"({"problem": {"type": "dnmf", "shapes": {"rows": 4, "cols": 4, "rank": 2}},
                               "optimizers": [{"name": "rmsprop"}]})");
    FAIL();
  } catch (const RegistryError& e) {
    for (const char* n : {"adam", "admm", "gd", "svrg"}) EXPECT_NE(std::string(e.what()).find(n), std::string::npos);
  }
}

TEST(Config, DuplicateLabelsRejected) {
  EXPECT_THROW(parse_experiment_config(R"({"problem": {"type": "dnmf", "shapes": {"rows": 4, "cols": 4, "rank": 2}},
                                           "optimizers": [{"name": "adam"}, {"name": "adam", "alpha": 0.1}]})"),
               ParameterError);
}

TEST(Config, HashIgnoresOutputDirAndWorkers) {
  ExperimentConfig c = parse_experiment_config(kTinyConfig);
  const std::string h = config_hash(c);
  EXPECT_EQ(h.size(), 16u);
  c.output_dir = "elsewhere";
  c.workers = 4;
  EXPECT_EQ(config_hash(c), h);
  c.seeds = {4};
  EXPECT_NE(config_hash(c), h);
}

TEST(Config, SeedOverride) {
  ExperimentConfig c = parse_experiment_config(kTinyConfig);
  apply_seed_override(c, nullptr);
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{3}));
  apply_seed_override(c, "17");
  EXPECT_EQ(c.seeds, (std::vector<std::uint64_t>{17}));
  EXPECT_THROW(apply_seed_override(c, "seventeen"), ParameterError);
}

// ---------------------------------------------------------------------------
// SVG
// ---------------------------------------------------------------------------

TEST(Svg, OneSeriesOnePolyline) {
  PlotSpec spec;
  spec.series = {{"a", {1, 2}, {3, 4}}};
  const std::string svg = emit_svg(spec);
  EXPECT_EQ(count(svg, "<polyline"), 1u);
  EXPECT_TRUE(well_formed_xml(svg));
}

TEST(Svg, ByteDeterministic) {
  PlotSpec spec;
  spec.title = "t";
  spec.log_y = true;
  spec.series = {{"a", {1, 2, 3}, {1, 0.1, 0.01}}, {"b", {1, 2, 3}, {2, 0.5, 0.2}}};
  EXPECT_EQ(emit_svg(spec), emit_svg(spec));
}

TEST(Svg, InvalidSpecs) {
  PlotSpec spec;
  EXPECT_THROW(emit_svg(spec), ParameterError);
  spec.series = {{"a", {}, {}}};
  EXPECT_THROW(emit_svg(spec), ParameterError);
  spec.series = {{"a", {1, 2}, {1}}};
  EXPECT_THROW(emit_svg(spec), ParameterError);
}

TEST(Svg, LabelsAreEscaped) {
  PlotSpec spec;
  spec.title = "loss <S & Z>";
  spec.series = {{"\"quoted\" & <tag>", {1, 2}, {3, 4}}};
  const std::string svg = emit_svg(spec);
  EXPECT_TRUE(well_formed_xml(svg));
  EXPECT_NE(svg.find("&lt;S &amp; Z&gt;"), std::string::npos);
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

TEST(Dataset, ToyCsv) {
  std::istringstream in("label,a,b\n1,0.5,2\n0,1.5,2\n1,2.5,2\n0,3.5,2\n");
  const LoadedDataset d = read_dataset_csv(in);
  EXPECT_EQ(d.rows, 4);
  EXPECT_EQ(d.features, 2);
  EXPECT_EQ(d.problem->samples(), 4);
  const auto& f = d.problem->features();
  EXPECT_NEAR(f.col(0).mean(), 0.0, 1e-15);
  EXPECT_NEAR((f.col(0).array() - f.col(0).mean()).square().mean(), 1.0, 1e-12);
  EXPECT_EQ(f.col(1), Vector::Zero(4));
  EXPECT_EQ(d.problem->labels(), (std::vector<double>{1, 0, 1, 0}));
}

TEST(Dataset, Errors) {
  std::istringstream bad("label,a\n1,0.5\n0,abc\n");
  try {
    read_dataset_csv(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("row 3, col 2"), std::string::npos) << e.what();
  }
  std::istringstream empty("");
  EXPECT_THROW(read_dataset_csv(empty), ParameterError);
  std::istringstream header_only("label,a\n");
  EXPECT_THROW(read_dataset_csv(header_only), ParameterError);
  std::istringstream bad_label("label,a\n2,0.5\n");
  EXPECT_THROW(read_dataset_csv(bad_label), ParseError);
}

TEST(Dataset, BreastCancerBeatsTrivialModel) {
  const LoadedDataset d = load_dataset_csv(permutopt::testing::source_dir() / "data" / "breast_cancer.csv");
  EXPECT_EQ(d.rows, 569);
  EXPECT_EQ(d.features, 30);
  OptimizerConfig gd;
  gd.name = "gd";
  gd.alpha = 0.1;
  const RunRecord r = run(gd, *d.problem, 100, 1);
  EXPECT_LT(r.losses.back(), std::log(2.0));
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

TEST(CliRun, TinyConfigWritesOneRecord) {
  const fs::path out = scratch("tiny");
  std::ostringstream log;
  const RunMatrixResult r = cli_run(parse_experiment_config(kTinyConfig), {std::nullopt, out}, log);
  EXPECT_EQ(r.exit_code(), 0);
  ASSERT_EQ(r.records.size(), 1u);
  EXPECT_EQ(r.records[0].losses.size(), 10u);
  const fs::path run_file = r.root / "quadratic" / "adam" / "3" / "run.json";
  ASSERT_TRUE(fs::exists(run_file));
  const RunRecord back = run_record_from_json(nlohmann::ordered_json::parse(slurp(run_file)));
  EXPECT_EQ(back.losses, r.records[0].losses);
  EXPECT_TRUE(fs::exists(r.root / "quadratic" / "summary.csv"));
  EXPECT_TRUE(fs::exists(r.root / "config.json"));
  EXPECT_EQ(r.root.filename(), config_hash(parse_experiment_config(kTinyConfig)));
}

TEST(CliRun, RepeatAndWorkerCountGiveIdenticalArtifacts) {
  ExperimentConfig c = parse_experiment_config(kTinyConfig);
  c.seeds = {1, 2, 3, 4};
  OptimizerConfig r;
  r.name = "adam";
  r.randomized = true;
  r.alpha = 0.01;
  c.optimizers.push_back(r);
  c.stream_iterations = true;
  std::ostringstream log;
  const auto a = cli_run(c, {1, scratch("rep-a")}, log);
  const auto b = cli_run(c, {3, scratch("rep-b")}, log);
  for (const auto& entry : fs::recursive_directory_iterator(a.root)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), a.root);
    ASSERT_TRUE(fs::exists(b.root / rel)) << rel;
    if (rel.extension() == ".json" && rel.filename() == "run.json") {
      auto ja = nlohmann::ordered_json::parse(slurp(entry.path()));
      auto jb = nlohmann::ordered_json::parse(slurp(b.root / rel));
      ja.erase("wall_time_seconds");
      jb.erase("wall_time_seconds");
      EXPECT_EQ(ja, jb) << rel;
    } else if (rel.filename() != "summary.csv") {
      EXPECT_EQ(slurp(entry.path()), slurp(b.root / rel)) << rel;
    }
  }
  EXPECT_TRUE(fs::exists(a.root / "quadratic" / "adam" / "2" / "iterations.jsonl"));
}

TEST(CliRun, AbortedRunGivesNonzeroExit) {
  ExperimentConfig c = parse_experiment_config(kTinyConfig);
  c.optimizers[0].name = "gd";
  c.optimizers[0].alpha = 10.0;
  c.iterations = 2000;
  std::ostringstream log;
  const auto r = cli_run(c, {std::nullopt, scratch("abort")}, log);
  EXPECT_EQ(r.aborted, 1u);
  EXPECT_NE(r.exit_code(), 0);
  EXPECT_TRUE(r.records[0].aborted);
  EXPECT_TRUE(fs::exists(r.root / "quadratic" / "gd" / "3" / "run.json"));
}

TEST(CliRun, DnmfCompareProducesFullArtifactSet) {
  const ExperimentConfig c = load_experiment_config(bundled("dnmf-compare"));
  std::ostringstream log;
  const auto r = cli_run(c, {std::nullopt, scratch("dnmf-compare")}, log);
  EXPECT_EQ(r.exit_code(), 0);
  std::size_t runs = 0, summaries = 0, svgs = 0;
  for (const auto& e : fs::recursive_directory_iterator(r.root)) {
    if (e.path().filename() == "run.json") ++runs;
    if (e.path().filename() == "summary.csv") ++summaries;
    if (e.path().extension() == ".svg") {
      ++svgs;
      EXPECT_TRUE(well_formed_xml(slurp(e.path()))) << e.path();
      EXPECT_EQ(count(slurp(e.path()), "<polyline"), 4u);
    }
  }
  EXPECT_EQ(runs, 40u);
  EXPECT_EQ(summaries, 1u);
  EXPECT_EQ(svgs, 2u);
  const auto rows = summarize_runs(r.records);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& row : rows) EXPECT_TRUE(std::isfinite(row.final_loss_mean)) << row.optimizer;
}

TEST(CliCoverage, RejectsNonMultiwellProblems) {
  std::ostringstream log;
  EXPECT_THROW(cli_coverage(parse_experiment_config(kTinyConfig), {}, log), ParameterError);
}

TEST(CliIcc, DuplicatedRunIsDegenerate) {
  const fs::path dir = scratch("icc-dup");
  const RunRecord r = fake_run("p", "adam", 1, {0.5, 0.4, 0.3});
  write_run(dir / "a", r);
  write_run(dir / "b", r);
  std::ostringstream log;
  EXPECT_THROW(cli_icc(dir, IccVariant::kTwoWay, 2, log), DegenerateDataError);
}

TEST(CliIcc, MatchesAnalysisIcc) {
  const fs::path dir = scratch("icc-table");
  SeededRng rng(4);
  DenseMatrix expected(5, 2);
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    for (int o = 0; o < 2; ++o) {
      std::vector<double> losses;
      for (int t = 0; t < 6; ++t) losses.push_back(rng.uniform());
      expected(static_cast<Index>(seed - 1), o) = (losses[3] + losses[4] + losses[5]) / 3.0;
      write_run(dir, fake_run("p", o == 0 ? "adam" : "gd", seed, losses));
    }
  }
  std::ostringstream log;
  const IccResult one = cli_icc(dir, IccVariant::kOneWay, 3, log);
  EXPECT_NEAR(one.report().value, icc(expected, IccVariant::kOneWay).value, 1e-12);
  EXPECT_NEAR(one.two_way.value, icc(expected, IccVariant::kTwoWay).value, 1e-12);
  const IccResult two = cli_icc(dir, IccVariant::kTwoWay, 3, log);
  EXPECT_EQ(two.report().value, one.two_way.value);
  const auto j = nlohmann::ordered_json::parse(slurp(dir / "icc.json"));
  EXPECT_TRUE(j.contains("icc_1_1"));
  EXPECT_TRUE(j.contains("icc_2_1"));
  EXPECT_EQ(j["variant"], "ICC(2,1)");
}

TEST(CliIcc, RaggedRecordsAreShapeErrors) {
  const std::vector<RunRecord> records{fake_run("p", "adam", 1, {1, 2, 3}), fake_run("p", "gd", 1, {1, 2})};
  EXPECT_THROW(icc_table(records, 1), ShapeError);
  EXPECT_THROW(icc_table(std::vector<RunRecord>{records[0]}, 1), ParameterError);
}

TEST(CliPlot, WritesSvgForRunFiles) {
  const fs::path dir = scratch("plot");
  write_run(dir, fake_run("p", "adam", 1, {1, 0.5, 0.25}));
  write_run(dir, fake_run("p", "gd", 1, {1, 0.7, 0.6}));
  std::ostringstream log;
  const fs::path out = dir / "plot.svg";
  EXPECT_EQ(cli_plot({dir / "p/adam/1/run.json", dir / "p/gd/1/run.json"}, out, log), 0);
  EXPECT_EQ(count(slurp(out), "<polyline"), 2u);
  EXPECT_TRUE(well_formed_xml(slurp(out)));
}
