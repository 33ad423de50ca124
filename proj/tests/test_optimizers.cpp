#include <gtest/gtest.h>

#include <cmath>

#include "permutopt/optimizers.hpp"
#include "permutopt/problems.hpp"

using namespace permutopt;

namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

std::shared_ptr<QuadraticProblem> quadratic(Index d, double lo = 0.5, double hi = 1.0) {
  Vector h(d);
  for (Index i = 0; i < d; ++i) h[i] = 1.0 + static_cast<double>(i);
  return std::make_shared<QuadraticProblem>(h, Vector::Zero(d), DomainBox::uniform(d, lo, hi));
}

OptimizerConfig config(const std::string& name, bool randomized = false, double threshold = 1e-2) {
  OptimizerConfig c;
  c.name = name;
  c.randomized = randomized;
  c.threshold = threshold;
  return c;
}

nlohmann::ordered_json without_wall_time(const RunRecord& r) {
  auto j = to_json(r);
  j.erase("wall_time_seconds");
  return j;
}

/// Objective whose gradient is scripted per iteration, to drive the trigger.
class ScriptedGradientProblem : public Problem {
 public:
  ScriptedGradientProblem(Index d, std::vector<std::size_t> quiet) : d_(d), quiet_(std::move(quiet)) {}
  std::string id() const override { return "scripted"; }
  Index dimension() const override { return d_; }
  Vector initial_point(SeededRng& rng) const override {
    Vector x(d_);
    for (Index i = 0; i < d_; ++i) x[i] = rng.uniform(-1, 1);
    return x;
  }
  double objective(const Vector& x) const override { return 0.5 * x.squaredNorm(); }
  Vector gradient(const Vector& x) const override { return x; }
  Vector observed_gradient(const Vector&, const StepContext& ctx) const override {
    // Consecutive gradients differ by 1 unless iteration t is listed, in
    // which case g_t repeats g_{t-1} up to 1e-3.
    std::size_t level = 0;
    for (std::size_t s = 1; s <= ctx.iteration; ++s) {
      if (std::find(quiet_.begin(), quiet_.end(), s) == quiet_.end()) ++level;
    }
    Vector g = Vector::Constant(d_, static_cast<double>(level));
    if (std::find(quiet_.begin(), quiet_.end(), ctx.iteration) != quiet_.end()) g[0] += 1e-3;
    return g;
  }

 private:
  Index d_;
  std::vector<std::size_t> quiet_;
};

}  // namespace

// ---------------------------------------------------------------------------
// Step rules
// ---------------------------------------------------------------------------

TEST(GdStep, Examples) {
  EXPECT_EQ(gd_step(vec({4}), vec({8}), 0.5), vec({0}));
  EXPECT_EQ(gd_step(vec({1, 2}), vec({0, 0}), 0.3), vec({1, 2}));
  const Vector x = gd_step(vec({1, 1}), vec({2, -2}), 0.1);
  EXPECT_NEAR(x[0], 0.8, 1e-15);
  EXPECT_NEAR(x[1], 1.2, 1e-15);
  EXPECT_THROW(gd_step(vec({1}), vec({1, 2}), 0.1), ShapeError);
}

TEST(AdamStep, FirstStepMovesByAlpha) {
  AdamParams p;
  p.alpha = 0.1;
  AdamState s(p, 1);
  const Vector x = adam_step(s, vec({1.0}), vec({2.0}));
  // m = 0.2, v = 0.004; m_hat = 2, v_hat = 4; step = 0.1 * 2 / (2 + 1e-8)
  const double oracle = 1.0 - 0.1 * 2.0 / (std::sqrt(4.0) + 1e-8);
  EXPECT_NEAR(x[0], oracle, 1e-15);
  EXPECT_NEAR(x[0], 0.9, 1e-7);
  EXPECT_EQ(s.t, 1u);
}

TEST(AdamStep, ZeroGradientLeavesPoint) {
  AdamState s(AdamParams{}, 2);
  EXPECT_EQ(adam_step(s, vec({1, -1}), vec({0, 0})), vec({1, -1}));
}

TEST(AdamStep, Deterministic) {
  AdamState a(AdamParams{}, 3), b(AdamParams{}, 3);
  Vector xa = vec({1, 2, 3}), xb = xa;
  for (int i = 0; i < 10; ++i) {
    const Vector g = vec({std::sin(i), std::cos(i), 0.1 * i});
    xa = adam_step(a, xa, g);
    xb = adam_step(b, xb, g);
  }
  EXPECT_EQ(xa, xb);
}

TEST(AdamStep, SecondMomentStaysNonnegativeAndTimeAdvances) {
  AdamState s(AdamParams{}, 4);
  SeededRng rng(1);
  Vector x = Vector::Zero(4);
  for (std::size_t t = 1; t <= 200; ++t) {
    x = adam_step(s, x, random_normal_matrix(4, 1, rng).col(0));
    ASSERT_EQ(s.t, t);
    ASSERT_TRUE((s.v.array() >= 0.0).all());
  }
}

TEST(AdamStep, NonfiniteGradientNamesIteration) {
  AdamState s(AdamParams{}, 1);
  adam_step(s, vec({0}), vec({1}));
  try {
    adam_step(s, vec({0}), vec({std::nan("")}));
    FAIL();
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(adam_step(s, vec({0}), vec({1, 2})), ShapeError);
}

TEST(AdamStep, PaperLiteralVariantUsesUnsquaredSecondMoment) {
  AdamParams p;
  p.variant = AdamVariant::kPaperLiteral;
  AdamState s(p, 1);
  adam_step(s, vec({0}), vec({2.0}));
  EXPECT_NEAR(s.v[0], (1 - 0.9) * 2.0, 1e-15);
  AdamState standard(AdamParams{}, 1);
  adam_step(standard, vec({0}), vec({2.0}));
  EXPECT_NEAR(standard.v[0], (1 - 0.999) * 4.0, 1e-15);
}

TEST(AdamParams, Validation) {
  AdamParams p;
  p.beta1 = 1.0;
  EXPECT_THROW(p.validate(), ParameterError);
  p = AdamParams{};
  p.alpha = 0.0;
  EXPECT_THROW(p.validate(), ParameterError);
}

TEST(SvrgStep, AtSnapshotReducesToFullGradientStep) {
  SvrgState s;
  s.alpha = 0.1;
  s.epoch_length = 5;
  const Vector w = vec({1, 2});
  svrg_refresh(s, w, vec({0.5, -1.0}));
  const Vector gi = vec({3, 4});
  const Vector x = svrg_step(s, w, gi, gi);
  EXPECT_NEAR(x[0], 1 - 0.1 * 0.5, 1e-15);
  EXPECT_NEAR(x[1], 2 + 0.1 * 1.0, 1e-15);
}

TEST(SvrgStep, ZeroFullGradientAtSnapshotIsStationary) {
  SvrgState s;
  s.epoch_length = 3;
  svrg_refresh(s, vec({1, 2}), vec({0, 0}));
  EXPECT_EQ(svrg_step(s, vec({1, 2}), vec({7, 7}), vec({7, 7})), vec({1, 2}));
}

TEST(SvrgStep, SnapshotExpiresAfterEpoch) {
  SvrgState s;
  s.epoch_length = 3;
  svrg_refresh(s, vec({0}), vec({0}));
  for (int i = 0; i < 3; ++i) {
    ASSERT_TRUE(s.has_snapshot);
    svrg_step(s, vec({0}), vec({0}), vec({0}));
  }
  EXPECT_FALSE(s.has_snapshot);
  EXPECT_THROW(svrg_step(s, vec({0}), vec({0, 1}), vec({0})), Error);
}

TEST(SvrgOptimizer, RecomputesFullGradientEveryEpoch) {
  // Counting problem: full gradient evaluations are observable as gradient() calls.
  class Counting : public QuadraticProblem {
   public:
    Counting() : QuadraticProblem(vec({1, 2}), vec({0, 0}), DomainBox::uniform(2, 0, 1)) {}
    std::size_t component_count() const override { return 4; }
    Vector component_gradient(const Vector& x, std::size_t i) const override {
      return (1.0 + 0.1 * static_cast<double>(i)) * QuadraticProblem::gradient(x);
    }
    Vector gradient(const Vector& x) const override {
      ++calls;
      return QuadraticProblem::gradient(x);
    }
    mutable std::size_t calls = 0;
  };
  Counting p;
  OptimizerConfig c = config("svrg");
  c.epoch_length = 5;
  auto opt = make_optimizer(c);
  Vector x = vec({1, 1});
  opt->reset(p, x, 1);
  const std::size_t before = p.calls;
  for (std::size_t t = 1; t <= 20; ++t) x = opt->step(p, StepContext{t, 1}, x, Vector::Zero(2));
  EXPECT_EQ(p.calls - before, 4u);
}

TEST(SoftThreshold, Examples) {
  EXPECT_DOUBLE_EQ(soft_threshold(1.5, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(soft_threshold(-1.5, 1.0), -0.5);
  EXPECT_DOUBLE_EQ(soft_threshold(0.3, 1.0), 0.0);
}

TEST(SpectralNorm, MatchesSvd) {
  SeededRng rng(2);
  const DenseMatrix m = random_normal_matrix(5, 3, rng);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
  EXPECT_NEAR(spectral_norm_sq(m), svd.singularValues()[0] * svd.singularValues()[0], 1e-10);
}

TEST(Admm, ZeroResidualLeavesDualUnchanged) {
  SeededRng rng(3);
  DnmfParams p;
  p.x = {random_uniform_matrix(4, 2, rng, 0.1, 1)};
  p.y = random_uniform_matrix(2, 4, rng, 0.1, 1);
  p.z = DenseMatrix::Zero(4, 4);
  const DnmfProblem problem(dnmf_reconstruction(p), {2});
  AdmmDnmfState s(problem, p, 1.0);
  const DenseMatrix dual = s.dual;
  admm_dnmf_step(s, problem);
  EXPECT_LT((s.dual - dual).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT(s.residual_norm, 1e-14);
}

TEST(Admm, ResidualDropsTenfold) {
  SeededRng rng(4);
  const DenseMatrix x = random_uniform_matrix(4, 2, rng);
  const DenseMatrix y = random_uniform_matrix(2, 4, rng, -0.2, 1.0);
  const DenseMatrix s_data = x * relu(y);
  const DnmfProblem problem(s_data, {2});
  AdmmDnmfState s(problem, problem.unpack(problem.initial_point(rng)), 1.0);
  admm_dnmf_step(s, problem);
  const double first = s.residual_norm;
  for (int i = 1; i < 200; ++i) admm_dnmf_step(s, problem);
  // Recorded when written: round-1 residual / round-200 residual is well above 10.
  EXPECT_GE(first / s.residual_norm, 10.0) << first << " -> " << s.residual_norm;
  EXPECT_EQ(s.dual.rows(), 4);
  EXPECT_EQ(s.dual.cols(), 4);
}

TEST(Admm, RejectsNonPositiveRho) {
  const DnmfProblem problem(DenseMatrix::Ones(2, 2), {1});
  EXPECT_THROW(AdmmDnmfState(problem, problem.zeros(), 0.0), ParameterError);
}

TEST(Admm, RequiresFactorizationProblem) {
  const auto q = quadratic(2);
  EXPECT_THROW(run(config("admm"), *q, 5, 1), ParameterError);
}

// ---------------------------------------------------------------------------
// Randomized wrapper
// ---------------------------------------------------------------------------

TEST(RandomizedStep, ZeroThresholdIsPassThrough) {
  SeededRng rng(5);
  const Vector x = vec({1, 2, 3});
  const Vector g = vec({0.1, 0.1, 0.1});
  const auto out = randomized_step([&](const Vector& v) { return gd_step(v, g, 0.1); }, TriggerPolicy(0.0), rng, x,
                                   g, g);
  EXPECT_EQ(out.x, gd_step(x, g, 0.1));
  EXPECT_FALSE(out.event);
}

TEST(RandomizedStep, EqualGradientsTriggerOneIsometricEvent) {
  SeededRng rng(6);
  const Vector x = vec({1, 2, 3, 4, 5});
  const Vector g = vec({0.1, 0.2, 0.3, 0.4, 0.5});
  const auto out = randomized_step([&](const Vector& v) { return gd_step(v, g, 0.1); }, TriggerPolicy(1e-2), rng, x,
                                   g, g, 7);
  ASSERT_TRUE(out.event);
  EXPECT_EQ(out.event->iteration, 7u);
  EXPECT_EQ(out.event->pre_norm, out.event->post_norm);
  EXPECT_EQ(out.x, apply_permutation(out.event->map, gd_step(x, g, 0.1)));
}

TEST(RandomizedStep, SingleCoordinateIsUnchangedWhenTriggered) {
  SeededRng rng(7);
  const Vector x = vec({2.0});
  const Vector g = vec({1.0});
  const auto out = randomized_step([&](const Vector& v) { return gd_step(v, g, 0.1); }, TriggerPolicy(1.0), rng, x,
                                   g, g);
  ASSERT_TRUE(out.event);
  EXPECT_TRUE(out.event->map.is_identity());
  EXPECT_EQ(out.x, gd_step(x, g, 0.1));
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

TEST(Run, SingleIteration) {
  const auto q = quadratic(3);
  const RunRecord r = run(config("adam"), *q, 1, 1);
  EXPECT_EQ(r.losses.size(), 1u);
  EXPECT_EQ(r.grad_norms.size(), 1u);
  EXPECT_EQ(r.displacement_norms.size(), 1u);
  EXPECT_EQ(r.iterates.size(), 1u);
  EXPECT_THROW(run(config("adam"), *q, 0, 1), ParameterError);
}

TEST(Run, DeterministicGivenSeed) {
  const DnmfProblem p(gen_synthetic_matrix(8, 6, 2, 1, 0.01), {2, 2});
  for (const char* name : {"gd", "adam", "svrg", "admm"}) {
    for (bool randomized : {false, true}) {
      const auto c = config(name, randomized);
      EXPECT_EQ(without_wall_time(run(c, p, 50, 9)), without_wall_time(run(c, p, 50, 9))) << name;
    }
  }
}

TEST(Run, AdamSolvesQuadratic) {
  const auto q = quadratic(4);
  OptimizerConfig c = config("adam");
  c.alpha = 0.01;
  const RunRecord r = run(c, *q, 500, 3);
  EXPECT_LT(r.losses.back(), 1e-6);
}

TEST(Run, ZeroThresholdWrapperIsBitIdentical) {
  const DnmfProblem p(gen_synthetic_matrix(8, 6, 2, 1, 0.01), {2, 2});
  const RunRecord plain = run(config("adam"), p, 300, 4);
  const RunRecord wrapped = run(config("adam", true, 0.0), p, 300, 4);
  EXPECT_TRUE(wrapped.permutation_events.empty());
  EXPECT_EQ(plain.losses, wrapped.losses);
  EXPECT_EQ(plain.grad_norms, wrapped.grad_norms);
  EXPECT_EQ(plain.displacement_norms, wrapped.displacement_norms);
  EXPECT_EQ(plain.final_params, wrapped.final_params);
}

TEST(Run, EventsAreIsometricAndReplayable) {
  const auto p = std::make_shared<MultiWellProblem>(MultiWellProblem::uniform(3, 0.0, 4.0, 1.0, -5.0, 5.0));
  OptimizerConfig c = config("adam", true);
  c.alpha = 0.1;
  const RunRecord r = run(c, *p, 2000, 11);
  ASSERT_FALSE(r.permutation_events.empty());
  SeededRng rng(12);
  for (const auto& e : r.permutation_events) {
    EXPECT_EQ(e.pre_norm, e.post_norm);
    // Rate-preservation surrogate: distances to any reference point are kept
    // when the same map is applied to both.
    const Vector& x = r.iterates[e.iteration - 1];
    const Vector pre = apply_permutation(inverse_permutation(e.map), x);
    const Vector y = random_normal_matrix(3, 1, rng).col(0);
    EXPECT_EQ(order_invariant_norm(apply_permutation(e.map, pre) - apply_permutation(e.map, y)),
              order_invariant_norm(pre - y));
    EXPECT_EQ(order_invariant_norm(pre), e.pre_norm);
  }
}

TEST(Run, GdContractionIsDescriptiveOnQuadratic) {
  const auto q = quadratic(3);
  const RunRecord r = run(config("gd"), *q, 300, 2);
  // Eventually nonincreasing displacements for a smooth convex problem.
  for (std::size_t t = 10; t + 1 < r.displacement_norms.size(); ++t) {
    EXPECT_LE(r.displacement_norms[t + 1], r.displacement_norms[t] * (1 + 1e-12));
  }
}

TEST(Run, NonfiniteValuesAbortWithPartialRecord) {
  class Exploding : public QuadraticProblem {
   public:
    Exploding() : QuadraticProblem(vec({1}), vec({0}), DomainBox::uniform(1, 1, 1)) {}
    Vector observed_gradient(const Vector& x, const StepContext& ctx) const override {
      return ctx.iteration == 4 ? vec({std::numeric_limits<double>::infinity()}) : gradient(x);
    }
  };
  Exploding p;
  try {
    run(config("gd"), p, 10, 1);
    FAIL();
  } catch (const RunAborted& e) {
    EXPECT_TRUE(e.partial().aborted);
    EXPECT_EQ(e.partial().losses.size(), 3u);
    EXPECT_NE(e.partial().abort_reason.find("4"), std::string::npos);
  }
}

TEST(Run, ScriptedQuietIterationsProduceEventsExactlyThere) {
  const ScriptedGradientProblem p(6, {50, 51});
  const RunRecord r = run(config("gd", true), p, 100, 5);
  ASSERT_EQ(r.permutation_events.size(), 2u);
  EXPECT_EQ(r.permutation_events[0].iteration, 50u);
  EXPECT_EQ(r.permutation_events[1].iteration, 51u);
}

TEST(Run, RateDiagnosticIsLogged) {
  const auto q = quadratic(2);
  const RunRecord r = run(config("gd"), *q, 100, 1);
  const RateDiagnostic d = rate_diagnostic(r);
  EXPECT_DOUBLE_EQ(d.inv_sqrt_t, 0.1);
  EXPECT_GE(d.twice_best_loss, 0.0);
  EXPECT_TRUE(to_json(r).contains("diagnostics"));
}

TEST(Run, StreamingCallbackSeesEveryIteration) {
  const auto q = quadratic(2);
  std::vector<std::string> lines;
  RunOptions opts;
  opts.on_iteration = [&](const RunRecord& r) { lines.push_back(iteration_json(r, r.iterations() - 1).dump()); };
  const RunRecord r = run(config("adam"), *q, 25, 1, opts);
  ASSERT_EQ(lines.size(), 25u);
  EXPECT_EQ(nlohmann::ordered_json::parse(lines.back())["loss"].get<double>(), r.losses.back());
}

TEST(RunRecord, JsonRoundTrip) {
  const auto p = std::make_shared<MultiWellProblem>(MultiWellProblem::uniform(2, 0.0, 4.0, 1.0, -5.0, 5.0));
  OptimizerConfig c = config("adam", true);
  c.alpha = 0.1;
  const RunRecord r = run(c, *p, 300, 2);
  const RunRecord back = run_record_from_json(to_json(r));
  EXPECT_EQ(to_json(back), to_json(r));
  EXPECT_EQ(back.config, r.config);
}

// ---------------------------------------------------------------------------
// Registry and configuration
// ---------------------------------------------------------------------------

TEST(Registry, KnownNames) {
  EXPECT_EQ(registered_optimizers(), (std::vector<std::string>{"adam", "admm", "gd", "svrg"}));
  for (const auto& n : registered_optimizers()) EXPECT_NE(make_optimizer(config(n)), nullptr);
}

TEST(Registry, UnknownNameListsValidOnes) {
  try {
    make_optimizer(config("lbfgs"));
    FAIL();
  } catch (const RegistryError& e) {
    const std::string what = e.what();
    for (const char* n : {"adam", "admm", "gd", "svrg"}) EXPECT_NE(what.find(n), std::string::npos) << what;
  }
}

TEST(OptimizerConfig, JsonRoundTrip) {
  OptimizerConfig c = config("adam", true, 0.05);
  c.alpha = 0.2;
  c.scope = PermutationScope::kPerBlock;
  c.variant = AdamVariant::kPaperLiteral;
  c.label = "custom";
  EXPECT_EQ(optimizer_config_from_json(to_json(c)), c);
  const OptimizerConfig plain = config("svrg");
  EXPECT_EQ(optimizer_config_from_json(to_json(plain)), plain);
  EXPECT_EQ(plain.display_label(), "svrg");
  EXPECT_EQ(config("adam", true).display_label(), "randomized-adam");
  EXPECT_EQ(c.display_label(), "custom");
}

TEST(OptimizerConfig, DefaultStepSizes) {
  EXPECT_DOUBLE_EQ(config("adam").resolved_alpha(), 1e-3);
  EXPECT_DOUBLE_EQ(config("gd").resolved_alpha(), 1e-2);
  EXPECT_DOUBLE_EQ(config("adam").threshold, 1e-2);
  EXPECT_DOUBLE_EQ(config("adam").eps_num, 1e-8);
}
