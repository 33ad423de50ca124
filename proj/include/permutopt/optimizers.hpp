#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "permutopt/numkit.hpp"
#include "permutopt/operators.hpp"
#include "permutopt/problems.hpp"
#include "permutopt/rng.hpp"

namespace permutopt {

// ---------------------------------------------------------------------------
// Plain gradient descent
// ---------------------------------------------------------------------------

/// x - alpha * grad
Vector gd_step(const Vector& x, const Vector& grad, double alpha);

// ---------------------------------------------------------------------------
// ADAM
// ---------------------------------------------------------------------------

enum class AdamVariant {
  kStandard,     ///< V <- b2 V + (1 - b2) g^2
  kPaperLiteral  ///< V <- b2 V + (1 - b1) g, as printed in the randomized-ADAM pseudo-code
};

std::string to_string(AdamVariant v);
AdamVariant adam_variant_from_string(const std::string& s);

struct AdamParams {
  double alpha = 1.0e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_num = 1.0e-8;  ///< denominator stabilizer; unrelated to the trigger threshold
  AdamVariant variant = AdamVariant::kStandard;

  void validate() const;
};

struct AdamState {
  AdamParams params;
  Vector m;           ///< first moment M_t
  Vector v;           ///< second moment V_t
  std::size_t t = 0;  ///< steps taken

  AdamState() = default;
  AdamState(AdamParams p, Index dimension);
};

/// One bias-corrected ADAM update. Advances state.t by one.
Vector adam_step(AdamState& state, const Vector& x, const Vector& grad);

// ---------------------------------------------------------------------------
// SVRG
// ---------------------------------------------------------------------------

struct SvrgState {
  double alpha = 1.0e-2;
  std::size_t epoch_length = 1;
  std::size_t inner_step = 0;
  bool has_snapshot = false;
  Vector snapshot_point;
  Vector snapshot_full_gradient;
};

/// Installs a new snapshot (point and its full gradient) and restarts the epoch.
void svrg_refresh(SvrgState& state, const Vector& point, Vector full_gradient);

/// x - alpha * (grad_i(x) - grad_i(snapshot) + full_grad(snapshot)). After
/// epoch_length inner steps the snapshot is invalidated; callers refresh it
/// before the next step.
Vector svrg_step(SvrgState& state, const Vector& x, const Vector& component_grad_at_x,
                 const Vector& component_grad_at_snapshot);

// ---------------------------------------------------------------------------
// ADMM for the constrained factorization
//
//   min ||Z||_1  s.t.  (prod X) relu(Y) + Z = S
//
// Scaled-dual augmented Lagrangian:
//   L = ||Z||_1 + rho/2 ||(prod X) relu(Y) + Z - S + U||_F^2
// One round: a linearized gradient step on each X_i then on Y with step
// step_scale / Lipschitz(block), the exact Z minimizer soft(S - P relu(Y) - U, 1/rho),
// then U += (prod X) relu(Y) + Z - S.
// ---------------------------------------------------------------------------

struct AdmmDnmfState {
  double rho = 1.0;
  double step_scale = 1.0;
  DenseMatrix dual;  ///< U, shape of S
  DnmfParams primal;
  double residual_norm = 0.0;  ///< ||(prod X) relu(Y) + Z - S||_F after the last round
  std::size_t rounds = 0;

  AdmmDnmfState() = default;
  AdmmDnmfState(const DnmfProblem& problem, DnmfParams primal, double rho, double step_scale = 1.0);
};

double soft_threshold(double value, double threshold);
DenseMatrix soft_threshold(const DenseMatrix& m, double threshold);

/// Largest squared singular value.
double spectral_norm_sq(const DenseMatrix& m);

void admm_dnmf_step(AdmmDnmfState& state, const DnmfProblem& problem);

// ---------------------------------------------------------------------------
// Permutation randomization on top of any step
// ---------------------------------------------------------------------------

struct RandomizedOutcome {
  Vector x;
  std::optional<PermutationEvent> event;
};

/// Runs `base_step(x)`; then, when ||grad_now - grad_prev|| < threshold,
/// reorders the coordinates of the new point with a freshly sampled
/// permutation and records the event. `blocks` is only consulted for
/// PermutationScope::kPerBlock.
template <typename BaseStep>
RandomizedOutcome randomized_step(BaseStep&& base_step, const TriggerPolicy& trigger, SeededRng& rng,
                                  const Vector& x, const Vector& grad_now, const Vector& grad_prev,
                                  std::size_t iteration = 0, PermutationScope scope = PermutationScope::kJoint,
                                  std::span<const Segment> blocks = {}) {
  RandomizedOutcome out{base_step(x), std::nullopt};
  if (!should_trigger(grad_now, grad_prev, trigger)) return out;

  const auto d = static_cast<std::size_t>(out.x.size());
  PermutationMap map = scope == PermutationScope::kPerBlock && !blocks.empty()
                           ? sample_block_permutation(rng, blocks)
                           : sample_permutation(rng, d);
  PermutationEvent event;
  event.iteration = iteration;
  event.pre_norm = order_invariant_norm(out.x);
  out.x = apply_permutation(map, out.x);
  event.post_norm = order_invariant_norm(out.x);
  event.map = std::move(map);
  out.event = std::move(event);
  return out;
}

// ---------------------------------------------------------------------------
// Optimizer registry
// ---------------------------------------------------------------------------

struct OptimizerConfig {
  std::string name = "adam";  ///< gd | adam | svrg | admm
  std::string label;          ///< artifact name; empty = derived from name and randomization
  bool randomized = false;
  double threshold = 1.0e-2;
  PermutationScope scope = PermutationScope::kJoint;

  std::optional<double> alpha;  ///< empty = per-optimizer default
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_num = 1.0e-8;
  AdamVariant variant = AdamVariant::kStandard;
  std::size_t epoch_length = 0;  ///< SVRG; 0 = 2 * component count
  double rho = 1.0;              ///< ADMM penalty

  std::string display_label() const;
  double resolved_alpha() const;

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

nlohmann::ordered_json to_json(const OptimizerConfig& c);
OptimizerConfig optimizer_config_from_json(const nlohmann::ordered_json& j, const std::string& where = "optimizer");

/// Step-oriented optimizer. One instance serves one run.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void reset(const Problem& problem, const Vector& x0, std::uint64_t seed) = 0;
  virtual Vector step(const Problem& problem, const StepContext& ctx, const Vector& x, const Vector& grad) = 0;
};

std::vector<std::string> registered_optimizers();

/// Throws RegistryError listing the valid names.
std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& config);

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

struct RunRecord {
  std::string problem;
  std::string optimizer;
  OptimizerConfig config;
  std::uint64_t seed = 0;
  std::size_t max_iterations = 0;

  std::vector<double> losses;
  std::vector<double> grad_norms;
  std::vector<double> displacement_norms;  ///< ||x_t - x_{t-1}||
  std::vector<Vector> iterates;            ///< x_t after each step; recorded for low-dimensional problems
  std::vector<PermutationEvent> permutation_events;

  Vector initial_params;
  Vector final_params;
  std::size_t out_of_box_steps = 0;
  bool aborted = false;
  std::string abort_reason;
  double wall_time_seconds = 0.0;

  std::size_t iterations() const { return losses.size(); }
};

/// Logged only: 1/sqrt(T) next to twice the best loss.
struct RateDiagnostic {
  double inv_sqrt_t = 0.0;
  double twice_best_loss = 0.0;
  std::size_t best_iteration = 0;
};

RateDiagnostic rate_diagnostic(const RunRecord& record);

nlohmann::ordered_json to_json(const RunRecord& record);
RunRecord run_record_from_json(const nlohmann::ordered_json& j);
/// One streaming line for iteration index i (0-based).
nlohmann::ordered_json iteration_json(const RunRecord& record, std::size_t i);

struct RunOptions {
  std::optional<bool> record_iterates;  ///< default: dimension <= 3
  std::function<void(const RunRecord&)> on_iteration;
};

class RunAborted : public NumericError {
 public:
  RunAborted(const std::string& what, RunRecord partial)
      : NumericError(what), partial_(std::make_shared<RunRecord>(std::move(partial))) {}
  const RunRecord& partial() const { return *partial_; }

 private:
  std::shared_ptr<RunRecord> partial_;
};

/// Executes T steps from the problem's initial point. Reproducible from
/// (config, problem, seed). Non-finite values raise RunAborted carrying the
/// partial record.
RunRecord run(const OptimizerConfig& config, const Problem& problem, std::size_t max_iterations, std::uint64_t seed,
              const RunOptions& options = {});

/// Named rng streams derived from a run seed.
enum class RunStream : std::uint64_t { kInit = 1, kPermutation = 2, kOptimizer = 3 };
std::uint64_t stream_seed(std::uint64_t run_seed, RunStream stream);

}  // namespace permutopt
