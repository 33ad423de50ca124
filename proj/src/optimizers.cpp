#include "permutopt/optimizers.hpp"

#include <algorithm>
#include <cmath>

namespace permutopt {

namespace {

void require_same_length(const Vector& a, const Vector& b, const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  }
}

}  // namespace

Vector gd_step(const Vector& x, const Vector& grad, double alpha) {
  require_same_length(x, grad, "gd_step");
  if (!(alpha > 0.0)) throw ParameterError("gd_step: alpha must be > 0");
  return x - alpha * grad;
}

// ---------------------------------------------------------------------------

std::string to_string(AdamVariant v) { return v == AdamVariant::kStandard ? "standard" : "paper_literal"; }

AdamVariant adam_variant_from_string(const std::string& s) {
  if (s == "standard") return AdamVariant::kStandard;
  if (s == "paper_literal") return AdamVariant::kPaperLiteral;
  throw ParameterError("unknown adam_variant '" + s + "' (expected standard or paper_literal)");
}

void AdamParams::validate() const {
  if (!(alpha > 0.0)) throw ParameterError("adam: alpha must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw ParameterError("adam: beta1 and beta2 must lie in (0, 1)");
  }
  if (!(eps_num > 0.0)) throw ParameterError("adam: eps_num must be > 0");
}

AdamState::AdamState(AdamParams p, Index dimension)
    : params(p), m(Vector::Zero(dimension)), v(Vector::Zero(dimension)) {
  params.validate();
}

Vector adam_step(AdamState& state, const Vector& x, const Vector& grad) {
  require_same_length(x, grad, "adam_step");
  require_same_length(x, state.m, "adam_step (state)");
  const std::size_t t = state.t + 1;
  if (!grad.allFinite()) throw NumericError("adam_step: non-finite gradient at iteration " + std::to_string(t));
  const AdamParams& p = state.params;

  state.m = p.beta1 * state.m + (1.0 - p.beta1) * grad;
  if (p.variant == AdamVariant::kStandard) {
    state.v = p.beta2 * state.v + (1.0 - p.beta2) * grad.cwiseAbs2();
  } else {
    state.v = p.beta2 * state.v + (1.0 - p.beta1) * grad;
  }
  state.t = t;

  const double bias1 = 1.0 - std::pow(p.beta1, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(p.beta2, static_cast<double>(t));
  const auto m_hat = state.m.array() / bias1;
  const auto v_hat = state.v.array() / bias2;
  return (x.array() - p.alpha * m_hat / (v_hat.sqrt() + p.eps_num)).matrix();
}

// ---------------------------------------------------------------------------

void svrg_refresh(SvrgState& state, const Vector& point, Vector full_gradient) {
  require_same_length(point, full_gradient, "svrg_refresh");
  state.snapshot_point = point;
  state.snapshot_full_gradient = std::move(full_gradient);
  state.inner_step = 0;
  state.has_snapshot = true;
}

Vector svrg_step(SvrgState& state, const Vector& x, const Vector& component_grad_at_x,
                 const Vector& component_grad_at_snapshot) {
  if (!state.has_snapshot) throw ParameterError("svrg_step: no snapshot installed");
  if (state.epoch_length == 0) throw ParameterError("svrg_step: epoch_length must be >= 1");
  require_same_length(x, component_grad_at_x, "svrg_step");
  require_same_length(x, component_grad_at_snapshot, "svrg_step");
  require_same_length(x, state.snapshot_full_gradient, "svrg_step (snapshot)");
  const Vector direction = component_grad_at_x - component_grad_at_snapshot + state.snapshot_full_gradient;
  Vector out = x - state.alpha * direction;
  if (++state.inner_step == state.epoch_length) state.has_snapshot = false;
  return out;
}

// ---------------------------------------------------------------------------

AdmmDnmfState::AdmmDnmfState(const DnmfProblem& problem, DnmfParams p, double rho_, double step_scale_)
    : rho(rho_), step_scale(step_scale_), dual(DenseMatrix::Zero(problem.data().rows(), problem.data().cols())),
      primal(std::move(p)) {
  if (!(rho > 0.0)) throw ParameterError("admm: rho must be > 0");
  if (!(step_scale > 0.0)) throw ParameterError("admm: step_scale must be > 0");
}

double soft_threshold(double value, double threshold) {
  if (value > threshold) return value - threshold;
  if (value < -threshold) return value + threshold;
  return 0.0;
}

DenseMatrix soft_threshold(const DenseMatrix& m, double threshold) {
  return m.unaryExpr([threshold](double v) { return soft_threshold(v, threshold); });
}

double spectral_norm_sq(const DenseMatrix& m) {
  if (m.size() == 0) return 0.0;
  const DenseMatrix gram = m.rows() <= m.cols() ? DenseMatrix(m * m.transpose()) : DenseMatrix(m.transpose() * m);
  Eigen::SelfAdjointEigenSolver<DenseMatrix> solver(gram, Eigen::EigenvaluesOnly);
  return std::max(0.0, solver.eigenvalues().maxCoeff());
}

void admm_dnmf_step(AdmmDnmfState& state, const DnmfProblem& problem) {
  const DenseMatrix& s = problem.data();
  auto& p = state.primal;
  const std::size_t k = problem.shapes().layers();
  if (p.x.size() != k || p.z.rows() != s.rows() || p.z.cols() != s.cols() || state.dual.rows() != s.rows() ||
      state.dual.cols() != s.cols()) {
    throw ShapeError("admm_dnmf_step: state blocks do not conform with S (" + shape_string(s) + ")");
  }
  const double rho = state.rho;
  auto weighted_residual = [&] { return DenseMatrix(dnmf_reconstruction(p) - s + state.dual); };

  // X blocks, Gauss-Seidel order.
  for (std::size_t i = 0; i < k; ++i) {
    DenseMatrix left = DenseMatrix::Identity(s.rows(), s.rows());
    for (std::size_t j = 0; j < i; ++j) left = left * p.x[j];
    DenseMatrix right = relu(p.y);
    for (std::size_t j = k; j-- > i + 1;) right = p.x[j] * right;
    const double lip = rho * (i == 0 ? 1.0 : spectral_norm_sq(left)) * spectral_norm_sq(right);
    if (lip == 0.0) continue;
    const DenseMatrix w = weighted_residual();
    p.x[i] -= (state.step_scale / lip) * (rho * left.transpose() * w * right.transpose());
  }

  // Y block through the ReLU gate.
  {
    const DenseMatrix prod = chain_product(p.x);
    const double lip = rho * spectral_norm_sq(prod);
    if (lip > 0.0) {
      const DenseMatrix w = weighted_residual();
      p.y -= (state.step_scale / lip) * (rho * (prod.transpose() * w).cwiseProduct(relu_gate(p.y)));
    }
  }

  // Z: exact minimizer of ||Z||_1 + rho/2 ||Z - (S - P relu(Y) - U)||^2.
  const DenseMatrix model = chain_product(p.x) * relu(p.y);
  p.z = soft_threshold(s - model - state.dual, 1.0 / rho);

  const DenseMatrix residual = model + p.z - s;
  state.dual += residual;
  state.residual_norm = residual.norm();
  ++state.rounds;
}

// ---------------------------------------------------------------------------

std::string OptimizerConfig::display_label() const {
  if (!label.empty()) return label;
  return randomized ? "randomized-" + name : name;
}

double OptimizerConfig::resolved_alpha() const {
  if (alpha) return *alpha;
  if (name == "adam") return 1.0e-3;
  if (name == "admm") return 1.0;
  return 1.0e-2;
}

nlohmann::ordered_json to_json(const OptimizerConfig& c) {
  nlohmann::ordered_json j;
  j["name"] = c.name;
  j["label"] = c.display_label();
  j["randomized"] = c.randomized;
  j["threshold"] = c.threshold;
  j["scope"] = to_string(c.scope);
  j["alpha"] = c.resolved_alpha();
  if (c.name == "adam") {
    j["beta1"] = c.beta1;
    j["beta2"] = c.beta2;
    j["eps_num"] = c.eps_num;
    j["adam_variant"] = to_string(c.variant);
  } else if (c.name == "svrg") {
    j["epoch_length"] = c.epoch_length;
  } else if (c.name == "admm") {
    j["rho"] = c.rho;
  }
  return j;
}

namespace {

template <typename T>
T field(const nlohmann::ordered_json& j, const char* key, const std::string& where, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ParseError("field '" + where + "." + key + "' has the wrong type");
  }
}

}  // namespace

OptimizerConfig optimizer_config_from_json(const nlohmann::ordered_json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError("field '" + where + "' must be an object");
  OptimizerConfig c;
  if (!j.contains("name")) throw ParseError("field '" + where + ".name' is required");
  c.name = field<std::string>(j, "name", where, c.name);
  c.randomized = field<bool>(j, "randomized", where, c.randomized);
  c.label = field<std::string>(j, "label", where, "");
  if (c.label == (c.randomized ? "randomized-" + c.name : c.name)) c.label.clear();
  c.threshold = field<double>(j, "threshold", where, c.threshold);
  if (!(c.threshold >= 0.0)) throw ParseError("field '" + where + ".threshold' must be >= 0");
  try {
    c.scope = permutation_scope_from_string(field<std::string>(j, "scope", where, "joint"));
    c.variant = adam_variant_from_string(field<std::string>(j, "adam_variant", where, "standard"));
  } catch (const ParameterError& e) {
    throw ParseError("field '" + where + "': " + e.what());
  }
  if (j.contains("alpha")) c.alpha = field<double>(j, "alpha", where, 0.0);
  if (c.alpha) {
    OptimizerConfig defaults;
    defaults.name = c.name;
    if (*c.alpha == defaults.resolved_alpha()) c.alpha.reset();
  }
  c.beta1 = field<double>(j, "beta1", where, c.beta1);
  c.beta2 = field<double>(j, "beta2", where, c.beta2);
  c.eps_num = field<double>(j, "eps_num", where, c.eps_num);
  c.epoch_length = field<std::size_t>(j, "epoch_length", where, c.epoch_length);
  c.rho = field<double>(j, "rho", where, c.rho);
  return c;
}

// ---------------------------------------------------------------------------

namespace {

class GdOptimizer final : public Optimizer {
 public:
  explicit GdOptimizer(double alpha) : alpha_(alpha) {
    if (!(alpha_ > 0.0)) throw ParameterError("gd: alpha must be > 0");
  }
  void reset(const Problem&, const Vector&, std::uint64_t) override {}
  Vector step(const Problem&, const StepContext&, const Vector& x, const Vector& grad) override {
    return gd_step(x, grad, alpha_);
  }

 private:
  double alpha_;
};

class AdamOptimizer final : public Optimizer {
 public:
  explicit AdamOptimizer(AdamParams params) : params_(params) { params_.validate(); }
  void reset(const Problem& problem, const Vector&, std::uint64_t) override {
    state_ = AdamState(params_, problem.dimension());
  }
  Vector step(const Problem&, const StepContext&, const Vector& x, const Vector& grad) override {
    return adam_step(state_, x, grad);
  }

 private:
  AdamParams params_;
  AdamState state_;
};

class SvrgOptimizer final : public Optimizer {
 public:
  SvrgOptimizer(double alpha, std::size_t epoch_length) : alpha_(alpha), epoch_length_(epoch_length), rng_(0) {
    if (!(alpha_ > 0.0)) throw ParameterError("svrg: alpha must be > 0");
  }
  void reset(const Problem& problem, const Vector&, std::uint64_t seed) override {
    state_ = SvrgState{};
    state_.alpha = alpha_;
    state_.epoch_length = epoch_length_ ? epoch_length_ : 2 * problem.component_count();
    rng_ = SeededRng(stream_seed(seed, RunStream::kOptimizer));
  }
  Vector step(const Problem& problem, const StepContext&, const Vector& x, const Vector&) override {
    if (!state_.has_snapshot) svrg_refresh(state_, x, problem.gradient(x));
    const std::size_t i = static_cast<std::size_t>(rng_.below(problem.component_count()));
    return svrg_step(state_, x, problem.component_gradient(x, i),
                     problem.component_gradient(state_.snapshot_point, i));
  }

 private:
  double alpha_;
  std::size_t epoch_length_;
  SvrgState state_;
  SeededRng rng_;
};

class AdmmOptimizer final : public Optimizer {
 public:
  AdmmOptimizer(double rho, double step_scale) : rho_(rho), step_scale_(step_scale) {}
  void reset(const Problem& problem, const Vector& x0, std::uint64_t) override {
    const auto& dnmf = as_dnmf(problem);
    state_ = AdmmDnmfState(dnmf, dnmf.unpack(x0), rho_, step_scale_);
  }
  Vector step(const Problem& problem, const StepContext&, const Vector& x, const Vector&) override {
    const auto& dnmf = as_dnmf(problem);
    state_.primal = dnmf.unpack(x);
    admm_dnmf_step(state_, dnmf);
    return dnmf.pack(state_.primal);
  }

 private:
  static const DnmfProblem& as_dnmf(const Problem& problem) {
    const auto* dnmf = dynamic_cast<const DnmfProblem*>(&problem.base());
    if (!dnmf) throw ParameterError("admm: problem '" + problem.id() + "' is not a factorization problem");
    return *dnmf;
  }
  double rho_;
  double step_scale_;
  AdmmDnmfState state_;
};

}  // namespace

std::vector<std::string> registered_optimizers() { return {"adam", "admm", "gd", "svrg"}; }

std::unique_ptr<Optimizer> make_optimizer(const OptimizerConfig& c) {
  if (c.name == "gd") return std::make_unique<GdOptimizer>(c.resolved_alpha());
  if (c.name == "adam") {
    return std::make_unique<AdamOptimizer>(AdamParams{c.resolved_alpha(), c.beta1, c.beta2, c.eps_num, c.variant});
  }
  if (c.name == "svrg") return std::make_unique<SvrgOptimizer>(c.resolved_alpha(), c.epoch_length);
  if (c.name == "admm") return std::make_unique<AdmmOptimizer>(c.rho, c.resolved_alpha());
  std::string names;
  for (const auto& n : registered_optimizers()) names += (names.empty() ? "" : ", ") + n;
  throw RegistryError("unknown optimizer '" + c.name + "'; valid names: " + names);
}

std::uint64_t stream_seed(std::uint64_t run_seed, RunStream stream) {
  return mix_seed(run_seed, static_cast<std::uint64_t>(stream));
}

}  // namespace permutopt
