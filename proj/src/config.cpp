#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "permutopt/harness.hpp"

namespace permutopt {

namespace {

using Json = nlohmann::ordered_json;

template <class T>
T field(const Json& j, const char* key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError("field '" + where + "." + key + "' has the wrong type");
  }
}

template <class T>
T required(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key)) throw ParseError("field '" + where + "." + key + "' is required");
  return field<T>(j, key, where, T{});
}

const Json& object_at(const Json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_object()) {
    throw ParseError("field '" + where + "." + key + "' must be an object");
  }
  return j.at(key);
}

void check_keys(const Json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || item.key() == a;
    if (!ok) throw ParseError("field '" + where + "." + item.key() + "' is not recognized");
  }
}

Json box_json(const std::vector<double>& lo, const std::vector<double>& hi) {
  Json j;
  j["lo"] = lo;
  j["hi"] = hi;
  return j;
}

void read_box(const Json& j, const char* key, const std::string& where, std::vector<double>& lo,
              std::vector<double>& hi) {
  const Json& box = object_at(j, key, where);
  const std::string w = where + "." + key;
  lo = required<std::vector<double>>(box, "lo", w);
  hi = required<std::vector<double>>(box, "hi", w);
  if (lo.size() != hi.size()) throw ParseError("field '" + w + "': lo and hi differ in length");
}

Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

// ---------------------------------------------------------------------------
// ProblemSpec
// ---------------------------------------------------------------------------

Json to_json(const ProblemSpec& s) {
  Json j;
  j["type"] = s.type;
  if (!s.id.empty()) j["id"] = s.id;
  if (s.type == "dnmf" || s.type == "stacked") {
    Json shapes;
    shapes["rows"] = s.rows;
    shapes["cols"] = s.cols;
    shapes["rank"] = s.rank;
    if (!s.inner.empty()) shapes["inner"] = s.inner;
    j["shapes"] = shapes;
    j["seed"] = s.seed;
    j["noise"] = s.noise;
    j["l1_weight"] = s.l1_weight;
  } else if (s.type == "logistic") {
    j["dataset"] = s.dataset;
    j["has_header"] = s.has_header;
    j["l2_weight"] = s.l2_weight;
  } else if (s.type == "multiwell") {
    j["wells"] = Json{{"a", s.a}, {"b", s.b}, {"c", s.c}};
    j["box"] = box_json(s.box_lo, s.box_hi);
    j["init_box"] = box_json(s.init_lo, s.init_hi);
  } else if (s.type == "quadratic") {
    j["curvature"] = s.curvature;
    j["center"] = s.center;
    j["init_box"] = box_json(s.init_lo, s.init_hi);
  }
  if (s.period > 0) {
    j["period"] = s.period;
    j["gradient_noise"] = s.gradient_noise;
  }
  return j;
}

ProblemSpec problem_spec_from_json(const Json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError("field '" + where + "' must be an object");
  ProblemSpec s;
  s.type = required<std::string>(j, "type", where);
  s.id = field<std::string>(j, "id", where, "");
  if (s.id == s.type) s.id.clear();
  s.period = field<std::size_t>(j, "period", where, 0);
  s.gradient_noise = field<double>(j, "gradient_noise", where, s.gradient_noise);
  if (s.period > 0 && !(s.gradient_noise > 0.0)) {
    throw ParseError("field '" + where + ".gradient_noise' must be positive");
  }

  if (s.type == "dnmf" || s.type == "stacked") {
    check_keys(j, where, {"type", "id", "shapes", "seed", "noise", "l1_weight", "period", "gradient_noise"});
    const Json& shapes = object_at(j, "shapes", where);
    const std::string w = where + ".shapes";
    check_keys(shapes, w, {"rows", "cols", "rank", "inner"});
    s.rows = required<Index>(shapes, "rows", w);
    s.cols = required<Index>(shapes, "cols", w);
    s.rank = required<Index>(shapes, "rank", w);
    s.inner = field<std::vector<Index>>(shapes, "inner", w, {});
    if (s.inner == std::vector<Index>{s.rank, s.rank}) s.inner.clear();
    if (s.rows < 1 || s.cols < 1 || s.rank < 1) throw ParseError("field '" + w + "': dimensions must be >= 1");
    for (Index v : s.inner) {
      if (v < 1) throw ParseError("field '" + w + ".inner': entries must be >= 1");
    }
    s.seed = field<std::uint64_t>(j, "seed", where, 0);
    s.noise = field<double>(j, "noise", where, 0.0);
    s.l1_weight = field<double>(j, "l1_weight", where, s.l1_weight);
  } else if (s.type == "logistic") {
    check_keys(j, where, {"type", "id", "dataset", "has_header", "l2_weight", "period", "gradient_noise"});
    s.dataset = required<std::string>(j, "dataset", where);
    s.has_header = field<bool>(j, "has_header", where, true);
    s.l2_weight = field<double>(j, "l2_weight", where, 0.0);
  } else if (s.type == "multiwell") {
    check_keys(j, where, {"type", "id", "wells", "box", "init_box", "period", "gradient_noise"});
    const Json& wells = object_at(j, "wells", where);
    const std::string w = where + ".wells";
    s.a = required<std::vector<double>>(wells, "a", w);
    s.b = required<std::vector<double>>(wells, "b", w);
    s.c = required<std::vector<double>>(wells, "c", w);
    read_box(j, "box", where, s.box_lo, s.box_hi);
    read_box(j, "init_box", where, s.init_lo, s.init_hi);
  } else if (s.type == "quadratic") {
    check_keys(j, where, {"type", "id", "curvature", "center", "init_box", "period", "gradient_noise"});
    s.curvature = required<std::vector<double>>(j, "curvature", where);
    s.center = required<std::vector<double>>(j, "center", where);
    read_box(j, "init_box", where, s.init_lo, s.init_hi);
  } else {
    throw ParseError("field '" + where + ".type': unknown problem type '" + s.type +
                     "' (expected dnmf, stacked, logistic, multiwell, quadratic)");
  }
  return s;
}

std::shared_ptr<const Problem> make_problem(const ProblemSpec& s, const std::filesystem::path& base_dir) {
  const std::string id = s.id.empty() ? s.type : s.id;
  std::shared_ptr<const Problem> p;
  if (s.type == "dnmf" || s.type == "stacked") {
    DenseMatrix data = gen_synthetic_matrix(s.rows, s.cols, s.rank, s.seed, s.noise);
    const std::vector<Index> inner = s.inner.empty() ? std::vector<Index>{s.rank, s.rank} : s.inner;
    if (s.type == "dnmf") {
      p = std::make_shared<DnmfProblem>(std::move(data), inner, s.l1_weight, id);
    } else {
      p = make_stacked_problem(std::move(data), inner.front(), s.l1_weight, id);
    }
  } else if (s.type == "logistic") {
    std::filesystem::path path(s.dataset);
    if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
    p = load_dataset_csv(path, DatasetSchema{s.has_header, s.l2_weight, id}).problem;
  } else if (s.type == "multiwell") {
    MultiWellSpec spec{to_vector(s.a), to_vector(s.b), to_vector(s.c),
                       DomainBox{to_vector(s.box_lo), to_vector(s.box_hi)},
                       DomainBox{to_vector(s.init_lo), to_vector(s.init_hi)}};
    p = std::make_shared<MultiWellProblem>(std::move(spec), id);
  } else if (s.type == "quadratic") {
    p = std::make_shared<QuadraticProblem>(to_vector(s.curvature), to_vector(s.center),
                                           DomainBox{to_vector(s.init_lo), to_vector(s.init_hi)}, id);
  } else {
    throw ParameterError("make_problem: unknown problem type '" + s.type + "'");
  }
  if (s.period > 0) p = std::make_shared<NoisyGradientWrapper>(p, s.period, s.gradient_noise);
  return p;
}

// ---------------------------------------------------------------------------
// ExperimentConfig
// ---------------------------------------------------------------------------

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
  return name == o.name && problems == o.problems && optimizers == o.optimizers && iterations == o.iterations &&
         seeds == o.seeds && output_dir == o.output_dir && workers == o.workers &&
         stream_iterations == o.stream_iterations && analysis == o.analysis;
}

Json to_json(const ExperimentConfig& c) {
  Json j;
  j["name"] = c.name;
  auto& problems = j["problems"] = Json::array();
  for (const auto& p : c.problems) problems.push_back(to_json(p));
  auto& optimizers = j["optimizers"] = Json::array();
  for (const auto& o : c.optimizers) optimizers.push_back(to_json(o));
  j["iterations"] = c.iterations;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["workers"] = c.workers;
  j["stream_iterations"] = c.stream_iterations;
  Json a;
  a["coverage"] = c.analysis.coverage;
  a["icc"] = c.analysis.icc;
  a["contraction"] = c.analysis.contraction;
  a["cells_per_dim"] = c.analysis.cells_per_dim;
  a["delta"] = c.analysis.delta ? Json(*c.analysis.delta) : Json();
  a["final_k"] = c.analysis.final_k;
  a["icc_variant"] = c.analysis.icc_variant;
  j["analysis"] = a;
  return j;
}

ExperimentConfig experiment_config_from_json(const Json& j, std::filesystem::path base_dir) {
  const std::string where = "config";
  if (!j.is_object()) throw ParseError("config must be a JSON object");
  check_keys(j, where,
             {"name", "problem", "problems", "optimizers", "iterations", "seeds", "output_dir", "workers",
              "stream_iterations", "analysis"});
  ExperimentConfig c;
  c.base_dir = std::move(base_dir);
  c.name = field<std::string>(j, "name", where, c.name);

  if (j.contains("problem") == j.contains("problems")) {
    throw ParseError("config needs exactly one of 'problem' or 'problems'");
  }
  if (j.contains("problem")) {
    c.problems.push_back(problem_spec_from_json(j.at("problem"), where + ".problem"));
  } else {
    const Json& ps = j.at("problems");
    if (!ps.is_array()) throw ParseError("field 'config.problems' must be an array");
    for (std::size_t i = 0; i < ps.size(); ++i) {
      c.problems.push_back(problem_spec_from_json(ps[i], where + ".problems[" + std::to_string(i) + "]"));
    }
  }

  if (!j.contains("optimizers") || !j.at("optimizers").is_array()) {
    throw ParseError("field 'config.optimizers' must be an array");
  }
  const Json& os = j.at("optimizers");
  for (std::size_t i = 0; i < os.size(); ++i) {
    c.optimizers.push_back(optimizer_config_from_json(os[i], where + ".optimizers[" + std::to_string(i) + "]"));
  }

  c.iterations = field<std::size_t>(j, "iterations", where, c.iterations);
  c.seeds = field<std::vector<std::uint64_t>>(j, "seeds", where, c.seeds);
  c.output_dir = field<std::string>(j, "output_dir", where, c.output_dir);
  c.workers = field<std::size_t>(j, "workers", where, c.workers);
  c.stream_iterations = field<bool>(j, "stream_iterations", where, c.stream_iterations);

  if (j.contains("analysis")) {
    const Json& a = object_at(j, "analysis", where);
    const std::string w = where + ".analysis";
    check_keys(a, w, {"coverage", "icc", "contraction", "cells_per_dim", "delta", "final_k", "icc_variant"});
    c.analysis.coverage = field<bool>(a, "coverage", w, false);
    c.analysis.icc = field<bool>(a, "icc", w, false);
    c.analysis.contraction = field<bool>(a, "contraction", w, false);
    c.analysis.cells_per_dim = field<std::size_t>(a, "cells_per_dim", w, c.analysis.cells_per_dim);
    if (a.contains("delta") && !a.at("delta").is_null()) c.analysis.delta = field<double>(a, "delta", w, 0.0);
    c.analysis.final_k = field<std::size_t>(a, "final_k", w, c.analysis.final_k);
    c.analysis.icc_variant = field<int>(a, "icc_variant", w, c.analysis.icc_variant);
    if (c.analysis.icc_variant != 1 && c.analysis.icc_variant != 2) {
      throw ParseError("field '" + w + ".icc_variant' must be 1 or 2");
    }
  }
  validate(c);
  return c;
}

ExperimentConfig parse_experiment_config(const std::string& text, std::filesystem::path base_dir) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("config: ") + e.what());
  }
  return experiment_config_from_json(j, std::move(base_dir));
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_experiment_config(buf.str(), path.parent_path());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void validate(const ExperimentConfig& c) {
  if (c.problems.empty()) throw ParameterError("config has no problems");
  if (c.optimizers.empty()) throw ParameterError("config has no optimizers");
  if (c.seeds.empty()) throw ParameterError("config has no seeds");
  if (c.workers < 1) throw ParameterError("workers must be >= 1");
  const auto names = registered_optimizers();
  std::set<std::string> labels;
  for (const auto& o : c.optimizers) {
    if (std::find(names.begin(), names.end(), o.name) == names.end()) make_optimizer(o);
    if (!labels.insert(o.display_label()).second) {
      throw ParameterError("duplicate optimizer label '" + o.display_label() + "'; set distinct 'label' fields");
    }
  }
  std::set<std::string> ids;
  for (const auto& p : c.problems) {
    std::string id = p.id.empty() ? p.type : p.id;
    if (p.period > 0) id += "-noisy";
    if (!ids.insert(id).second) throw ParameterError("duplicate problem id '" + id + "'");
  }
  if (std::set<std::uint64_t>(c.seeds.begin(), c.seeds.end()).size() != c.seeds.size()) {
    throw ParameterError("duplicate seeds in config");
  }
}

std::string config_hash(const ExperimentConfig& c) {
  Json j = to_json(c);
  j.erase("output_dir");
  j.erase("workers");
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(j.dump())));
  return buf;
}

void apply_seed_override(ExperimentConfig& c, const char* env_value) {
  if (env_value == nullptr || *env_value == '\0') return;
  const std::string text(env_value);
  std::uint64_t seed = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), seed);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw ParameterError("PERMUTOPT_SEED must be an unsigned integer, got '" + text + "'");
  }
  c.seeds = {seed};
}

}  // namespace permutopt
