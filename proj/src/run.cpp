#include <chrono>
#include <cmath>

#include "permutopt/optimizers.hpp"

namespace permutopt {

namespace {

std::vector<double> to_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector from_std(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

RateDiagnostic rate_diagnostic(const RunRecord& record) {
  RateDiagnostic d;
  if (record.losses.empty()) return d;
  d.inv_sqrt_t = 1.0 / std::sqrt(static_cast<double>(record.losses.size()));
  std::size_t best = 0;
  for (std::size_t i = 1; i < record.losses.size(); ++i) {
    if (record.losses[i] < record.losses[best]) best = i;
  }
  d.best_iteration = best + 1;
  d.twice_best_loss = 2.0 * std::abs(record.losses[best]);
  return d;
}

nlohmann::ordered_json to_json(const RunRecord& r) {
  nlohmann::ordered_json j;
  j["problem"] = r.problem;
  j["optimizer"] = r.optimizer;
  j["seed"] = r.seed;
  j["max_iterations"] = r.max_iterations;
  j["config"] = to_json(r.config);
  j["losses"] = r.losses;
  j["grad_norms"] = r.grad_norms;
  j["displacement_norms"] = r.displacement_norms;
  if (!r.iterates.empty()) {
    auto& it = j["iterates"] = nlohmann::ordered_json::array();
    for (const auto& x : r.iterates) it.push_back(to_std(x));
  }
  auto& ev = j["permutation_events"] = nlohmann::ordered_json::array();
  for (const auto& e : r.permutation_events) ev.push_back(to_json(e));
  j["initial_params"] = to_std(r.initial_params);
  j["final_params"] = to_std(r.final_params);
  j["out_of_box_steps"] = r.out_of_box_steps;
  j["aborted"] = r.aborted;
  if (r.aborted) j["abort_reason"] = r.abort_reason;
  const RateDiagnostic d = rate_diagnostic(r);
  j["diagnostics"] = {{"inv_sqrt_t", d.inv_sqrt_t},
                      {"twice_best_loss", d.twice_best_loss},
                      {"best_iteration", d.best_iteration}};
  j["wall_time_seconds"] = r.wall_time_seconds;
  return j;
}

RunRecord run_record_from_json(const nlohmann::ordered_json& j) {
  try {
    RunRecord r;
    r.problem = j.at("problem").get<std::string>();
    r.optimizer = j.at("optimizer").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.max_iterations = j.at("max_iterations").get<std::size_t>();
    r.config = optimizer_config_from_json(j.at("config"), "config");
    r.losses = j.at("losses").get<std::vector<double>>();
    r.grad_norms = j.at("grad_norms").get<std::vector<double>>();
    r.displacement_norms = j.at("displacement_norms").get<std::vector<double>>();
    if (j.contains("iterates")) {
      for (const auto& x : j.at("iterates")) r.iterates.push_back(from_std(x.get<std::vector<double>>()));
    }
    for (const auto& e : j.at("permutation_events")) r.permutation_events.push_back(permutation_event_from_json(e));
    r.initial_params = from_std(j.at("initial_params").get<std::vector<double>>());
    r.final_params = from_std(j.at("final_params").get<std::vector<double>>());
    r.out_of_box_steps = j.at("out_of_box_steps").get<std::size_t>();
    r.aborted = j.at("aborted").get<bool>();
    if (j.contains("abort_reason")) r.abort_reason = j.at("abort_reason").get<std::string>();
    r.wall_time_seconds = j.at("wall_time_seconds").get<double>();
    if (r.grad_norms.size() != r.losses.size() || r.displacement_norms.size() != r.losses.size() ||
        (!r.iterates.empty() && r.iterates.size() != r.losses.size())) {
      throw ParseError("run record: per-iteration lists have different lengths");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("run record: ") + e.what());
  }
}

nlohmann::ordered_json iteration_json(const RunRecord& r, std::size_t i) {
  nlohmann::ordered_json j;
  j["iteration"] = i + 1;
  j["loss"] = r.losses.at(i);
  j["grad_norm"] = r.grad_norms.at(i);
  j["displacement_norm"] = r.displacement_norms.at(i);
  if (!r.permutation_events.empty() && r.permutation_events.back().iteration == i + 1) {
    j["permutation"] = to_json(r.permutation_events.back());
  }
  return j;
}

RunRecord run(const OptimizerConfig& config, const Problem& problem, std::size_t max_iterations, std::uint64_t seed,
              const RunOptions& options) {
  if (max_iterations < 1) throw ParameterError("run: max_iterations must be >= 1");
  const auto started = std::chrono::steady_clock::now();

  RunRecord record;
  record.problem = problem.id();
  record.optimizer = config.display_label();
  record.config = config;
  record.seed = seed;
  record.max_iterations = max_iterations;

  auto optimizer = make_optimizer(config);
  const TriggerPolicy trigger(config.threshold);
  const DomainBox box = problem.domain();
  const std::vector<Segment> blocks = problem.segments();
  const bool keep_iterates = options.record_iterates.value_or(problem.dimension() <= 3);

  SeededRng init_rng(stream_seed(seed, RunStream::kInit));
  SeededRng perm_rng(stream_seed(seed, RunStream::kPermutation));

  Vector x = problem.initial_point(init_rng);
  record.initial_params = x;
  optimizer->reset(problem, x, seed);

  auto finish = [&] {
    record.final_params = x;
    record.wall_time_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  };
  auto fail = [&](const std::string& why) {
    record.aborted = true;
    record.abort_reason = why;
    finish();
    throw RunAborted(why, record);
  };

  Vector g_prev = Vector::Zero(problem.dimension());
  for (std::size_t t = 1; t <= max_iterations; ++t) {
    const StepContext ctx{t, seed};
    const Vector g = problem.observed_gradient(x, ctx);
    if (!g.allFinite()) fail("non-finite gradient at iteration " + std::to_string(t));

    auto base = [&](const Vector& xin) { return optimizer->step(problem, ctx, xin, g); };
    RandomizedOutcome outcome;
    try {
      outcome = config.randomized ? randomized_step(base, trigger, perm_rng, x, g, g_prev, t, config.scope, blocks)
                                  : RandomizedOutcome{base(x), std::nullopt};
    } catch (const NumericError& e) {
      fail(e.what());
    }

    const double displacement = (outcome.x - x).norm();
    x = std::move(outcome.x);
    const double loss = problem.metric(x);
    if (!std::isfinite(loss) || !x.allFinite()) fail("non-finite loss at iteration " + std::to_string(t));
    if (!box.contains(x)) ++record.out_of_box_steps;

    record.losses.push_back(loss);
    record.grad_norms.push_back(g.norm());
    record.displacement_norms.push_back(displacement);
    if (keep_iterates) record.iterates.push_back(x);
    if (outcome.event) record.permutation_events.push_back(std::move(*outcome.event));
    if (options.on_iteration) options.on_iteration(record);
    g_prev = g;
  }
  finish();
  return record;
}

}  // namespace permutopt
