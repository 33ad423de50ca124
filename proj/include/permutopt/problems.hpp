#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "permutopt/numkit.hpp"
#include "permutopt/operators.hpp"
#include "permutopt/rng.hpp"

namespace permutopt {

/// What an objective oracle may know about the step being taken.
struct StepContext {
  std::size_t iteration = 0;  ///< 1-based
  std::uint64_t run_seed = 0;
};

/// Axis-aligned box; infinite bounds mean unconstrained.
struct DomainBox {
  Vector lo;
  Vector hi;

  static DomainBox unbounded(Index d);
  static DomainBox uniform(Index d, double lo, double hi);

  Index dimension() const { return lo.size(); }
  bool contains(const Vector& x) const;
  Vector clamp(const Vector& x) const;
};

/// Objective oracle over a flattened parameter vector. Implementations are
/// immutable after construction and safe to share between concurrent runs.
class Problem {
 public:
  virtual ~Problem() = default;

  virtual std::string id() const = 0;
  virtual Index dimension() const = 0;
  virtual DomainBox domain() const { return DomainBox::unbounded(dimension()); }
  virtual Vector initial_point(SeededRng& rng) const = 0;

  /// Value being minimized.
  virtual double objective(const Vector& x) const = 0;
  /// Exact (sub)gradient of objective().
  virtual Vector gradient(const Vector& x) const = 0;
  /// Gradient handed to the optimizer at a given step. Differs from
  /// gradient() only for perturbed oracles.
  virtual Vector observed_gradient(const Vector& x, const StepContext&) const { return gradient(x); }
  /// Value recorded in run records. Defaults to the objective.
  virtual double metric(const Vector& x) const { return objective(x); }

  /// Finite-sum structure: objective = mean of component objectives.
  virtual std::size_t component_count() const { return 1; }
  virtual Vector component_gradient(const Vector& x, std::size_t) const { return gradient(x); }

  /// Matrix blocks of the flattened vector, in order.
  virtual std::vector<Segment> segments() const { return {Segment{0, dimension(), "x"}}; }

  virtual std::optional<Vector> global_optimum() const { return std::nullopt; }

  /// Unwraps decorators such as NoisyGradientWrapper.
  virtual const Problem& base() const { return *this; }
};

// ---------------------------------------------------------------------------
// Deep nonlinear matrix factorization
//
//   S ~ (X_1 X_2 ... X_k) relu(Y) + Z
//
// X_1: rows x inner[0], X_i: inner[i-2] x inner[i-1], Y: inner[k-1] x cols,
// Z: rows x cols.
// ---------------------------------------------------------------------------

struct DnmfShapes {
  Index rows = 0;
  Index cols = 0;
  std::vector<Index> inner;  ///< one entry per layer

  std::size_t layers() const { return inner.size(); }
  friend bool operator==(const DnmfShapes&, const DnmfShapes&) = default;
};

struct DnmfParams {
  std::vector<DenseMatrix> x;
  DenseMatrix y;
  DenseMatrix z;
};

class DnmfProblem : public Problem {
 public:
  DnmfProblem(DenseMatrix s, std::vector<Index> inner, double l1_weight = 0.01, std::string id = "dnmf");

  const DenseMatrix& data() const { return s_; }
  const DnmfShapes& shapes() const { return shapes_; }
  double l1_weight() const { return l1_weight_; }
  double data_norm_sq() const { return s_norm_sq_; }
  /// Upper end of the uniform initialization interval [0, scale].
  double init_scale() const { return init_scale_; }

  DnmfParams unpack(const Vector& x) const;
  Vector pack(const DnmfParams& p) const;
  DnmfParams zeros() const;

  std::string id() const override { return id_; }
  Index dimension() const override { return dimension_; }
  Vector initial_point(SeededRng& rng) const override;
  double objective(const Vector& x) const override;
  Vector gradient(const Vector& x) const override;
  /// Pure reconstruction term, without the l1 penalty.
  double metric(const Vector& x) const override;
  std::size_t component_count() const override { return static_cast<std::size_t>(shapes_.rows); }
  Vector component_gradient(const Vector& x, std::size_t row) const override;
  std::vector<Segment> segments() const override;

 private:
  DenseMatrix s_;
  DnmfShapes shapes_;
  double l1_weight_;
  double s_norm_sq_;
  double init_scale_;
  Index dimension_;
  std::string id_;
};

/// X_1 ... X_k as one matrix.
DenseMatrix chain_product(const std::vector<DenseMatrix>& x);
/// (X_1 ... X_k) relu(Y) + Z
DenseMatrix dnmf_reconstruction(const DnmfParams& p);

/// ||(prod X) relu(Y) + Z - S||_F^2 / ||S||_F^2
double dnmf_reconstruction_loss(const DnmfProblem& problem, const DnmfParams& p);
/// Reconstruction loss + l1_weight * ||Z||_1.
double dnmf_loss(const DnmfProblem& problem, const DnmfParams& p);
/// Exact subgradient of dnmf_loss (ReLU and |.| subgradients 0 at their kinks).
DnmfParams dnmf_gradient(const DnmfProblem& problem, const DnmfParams& p);

/// Three-layer instance of the factorization model.
std::shared_ptr<DnmfProblem> make_stacked_problem(DenseMatrix s, Index inner, double l1_weight = 0.01,
                                                  std::string id = "stacked");

/// S = A B + noise * E with A, B entry-wise uniform on [0, 1] and E standard normal.
DenseMatrix gen_synthetic_matrix(Index rows, Index cols, Index rank, std::uint64_t seed, double noise);

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

class LogisticProblem : public Problem {
 public:
  LogisticProblem(DenseMatrix features, std::vector<double> labels, double l2_weight = 0.0,
                  std::string id = "logistic", double init_scale = 0.01);

  const DenseMatrix& features() const { return features_; }
  const std::vector<double>& labels() const { return labels_; }
  Index samples() const { return features_.rows(); }
  double l2_weight() const { return l2_weight_; }

  std::string id() const override { return id_; }
  Index dimension() const override { return features_.cols(); }
  Vector initial_point(SeededRng& rng) const override;
  double objective(const Vector& w) const override;
  Vector gradient(const Vector& w) const override;
  std::size_t component_count() const override { return static_cast<std::size_t>(features_.rows()); }
  Vector component_gradient(const Vector& w, std::size_t i) const override;

 private:
  DenseMatrix features_;
  std::vector<double> labels_;
  double l2_weight_;
  std::string id_;
  double init_scale_;
};

struct LossAndGradient {
  double loss = 0.0;
  Vector gradient;
};

/// Mean cross-entropy + (l2/2)||w||^2 and its gradient.
LossAndGradient logistic_loss_grad(const LogisticProblem& problem, const Vector& w);

// ---------------------------------------------------------------------------
// Separable multi-well objective
//
//   f(x) = sum_i min(|x_i - a_i|, |x_i - b_i| + c_i)
//
// Each coordinate has a well at a_i (depth 0) and one at b_i (depth c_i).
// Piecewise linear, 1-Lipschitz per coordinate, nonconvex when
// 0 < c_i < |a_i - b_i|.
// ---------------------------------------------------------------------------

struct MultiWellSpec {
  Vector a;
  Vector b;
  Vector c;
  DomainBox box;
  DomainBox init_box;
};

struct MultiWellEval {
  double value = 0.0;
  Vector subgradient;
  bool clamped = false;
};

class MultiWellProblem : public Problem {
 public:
  explicit MultiWellProblem(MultiWellSpec spec, std::string id = "multiwell");

  /// Same (a, b, c) on every coordinate.
  static MultiWellProblem uniform(Index d, double a, double b, double c, double lo, double hi);

  const MultiWellSpec& spec() const { return spec_; }
  /// Value of the deeper of the two wells summed over coordinates.
  double global_value() const;

  std::string id() const override { return id_; }
  Index dimension() const override { return spec_.a.size(); }
  DomainBox domain() const override { return spec_.box; }
  Vector initial_point(SeededRng& rng) const override;
  double objective(const Vector& x) const override;
  Vector gradient(const Vector& x) const override;
  std::optional<Vector> global_optimum() const override;

 private:
  MultiWellSpec spec_;
  std::string id_;
};

/// Value and selected subgradient (+-1 per coordinate, 0 at kinks and basin
/// boundaries). Points outside the box are clamped first and flagged.
MultiWellEval multiwell_eval_grad(const MultiWellProblem& problem, const Vector& x);

// ---------------------------------------------------------------------------
// Smooth convex quadratic  f(x) = 1/2 sum_i h_i (x_i - c_i)^2
// ---------------------------------------------------------------------------

class QuadraticProblem : public Problem {
 public:
  QuadraticProblem(Vector curvature, Vector center, DomainBox init_box, std::string id = "quadratic");

  std::string id() const override { return id_; }
  Index dimension() const override { return center_.size(); }
  Vector initial_point(SeededRng& rng) const override;
  double objective(const Vector& x) const override;
  Vector gradient(const Vector& x) const override;
  std::optional<Vector> global_optimum() const override { return center_; }

 private:
  Vector curvature_;
  Vector center_;
  DomainBox init_box_;
  std::string id_;
};

// ---------------------------------------------------------------------------
// Gradient noise
// ---------------------------------------------------------------------------

/// Adds N(0, scale^2 I) to the observed gradient on iterations that are
/// multiples of `period`. Noise at (run seed, iteration) is a pure function of
/// those values and the inner problem id.
class NoisyGradientWrapper : public Problem {
 public:
  NoisyGradientWrapper(std::shared_ptr<const Problem> inner, std::size_t period = 10, double scale = 0.1);

  const Problem& inner() const { return *inner_; }
  std::size_t period() const { return period_; }
  double scale() const { return scale_; }
  Vector noise(std::size_t iteration, std::uint64_t run_seed) const;

  std::string id() const override { return inner_->id() + "-noisy"; }
  Index dimension() const override { return inner_->dimension(); }
  DomainBox domain() const override { return inner_->domain(); }
  Vector initial_point(SeededRng& rng) const override { return inner_->initial_point(rng); }
  double objective(const Vector& x) const override { return inner_->objective(x); }
  Vector gradient(const Vector& x) const override { return inner_->gradient(x); }
  Vector observed_gradient(const Vector& x, const StepContext& ctx) const override;
  double metric(const Vector& x) const override { return inner_->metric(x); }
  std::size_t component_count() const override { return inner_->component_count(); }
  Vector component_gradient(const Vector& x, std::size_t i) const override {
    return inner_->component_gradient(x, i);
  }
  std::vector<Segment> segments() const override { return inner_->segments(); }
  std::optional<Vector> global_optimum() const override { return inner_->global_optimum(); }
  const Problem& base() const override { return inner_->base(); }

 private:
  std::shared_ptr<const Problem> inner_;
  std::size_t period_;
  double scale_;
};

Vector noisy_grad(const NoisyGradientWrapper& wrapper, std::size_t iteration, const Vector& x,
                  std::uint64_t run_seed = 0);

}  // namespace permutopt
