#include "permutopt/problems.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace permutopt {

DomainBox DomainBox::unbounded(Index d) {
  const double inf = std::numeric_limits<double>::infinity();
  return DomainBox{Vector::Constant(d, -inf), Vector::Constant(d, inf)};
}

DomainBox DomainBox::uniform(Index d, double lo, double hi) {
  if (!(lo <= hi)) throw ParameterError("DomainBox: lo must not exceed hi");
  return DomainBox{Vector::Constant(d, lo), Vector::Constant(d, hi)};
}

bool DomainBox::contains(const Vector& x) const {
  if (x.size() != lo.size()) throw ShapeError("DomainBox::contains: dimension mismatch");
  return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
}

Vector DomainBox::clamp(const Vector& x) const {
  if (x.size() != lo.size()) throw ShapeError("DomainBox::clamp: dimension mismatch");
  return x.cwiseMax(lo).cwiseMin(hi);
}

// ---------------------------------------------------------------------------
// DNMF
// ---------------------------------------------------------------------------

namespace {

std::vector<std::pair<Index, Index>> block_shapes(const DnmfShapes& s) {
  std::vector<std::pair<Index, Index>> out;
  Index prev = s.rows;
  for (Index d : s.inner) {
    out.emplace_back(prev, d);
    prev = d;
  }
  out.emplace_back(prev, s.cols);
  out.emplace_back(s.rows, s.cols);
  return out;
}

// Gradient of the reconstruction term given dL/dR, where R = P relu(Y) + Z - S.
DnmfParams reconstruction_gradient(const DnmfParams& p, const DenseMatrix& g) {
  const std::size_t k = p.x.size();
  const DenseMatrix n = relu(p.y);

  // prefix[i] = X_1 ... X_i (prefix[0] unused), suffix[i] = X_{i+1} ... X_k relu(Y)
  std::vector<DenseMatrix> prefix(k + 1);
  std::vector<DenseMatrix> suffix(k + 1);
  suffix[k] = n;
  for (std::size_t i = k; i-- > 0;) suffix[i] = p.x[i] * suffix[i + 1];
  prefix[1] = p.x[0];
  for (std::size_t i = 2; i <= k; ++i) prefix[i] = prefix[i - 1] * p.x[i - 1];

  DnmfParams out;
  out.x.resize(k);
  out.x[0] = g * suffix[1].transpose();
  for (std::size_t i = 2; i <= k; ++i) {
    out.x[i - 1] = prefix[i - 1].transpose() * g * suffix[i].transpose();
  }
  out.y = (prefix[k].transpose() * g).cwiseProduct(relu_gate(p.y));
  out.z = g;
  return out;
}

}  // namespace

DnmfProblem::DnmfProblem(DenseMatrix s, std::vector<Index> inner, double l1_weight, std::string id)
    : s_(std::move(s)), l1_weight_(l1_weight), id_(std::move(id)) {
  if (s_.size() == 0) throw ParameterError("DnmfProblem: empty data matrix");
  if (inner.empty()) throw ParameterError("DnmfProblem: at least one layer is required");
  for (Index d : inner) {
    if (d < 1) throw ParameterError("DnmfProblem: inner dimensions must be >= 1");
  }
  if (!(l1_weight >= 0.0)) throw ParameterError("DnmfProblem: l1_weight must be >= 0");
  if (!s_.allFinite()) throw NumericError("DnmfProblem: data matrix has non-finite entries");
  s_norm_sq_ = s_.squaredNorm();
  if (s_norm_sq_ == 0.0) throw DegenerateDataError("DnmfProblem: ||S||_F is zero");
  shapes_ = DnmfShapes{s_.rows(), s_.cols(), std::move(inner)};
  dimension_ = 0;
  for (auto [r, c] : block_shapes(shapes_)) dimension_ += r * c;

  // Uniform [0, u] entries give E[(prod X) relu(Y)] = (u/2)^(k+1) * prod(inner);
  // pick u so that this matches the mean of S.
  const double mean = s_.mean();
  double inner_prod = 1.0;
  for (Index d : shapes_.inner) inner_prod *= static_cast<double>(d);
  const double k1 = static_cast<double>(shapes_.layers() + 1);
  init_scale_ = mean > 0.0 ? 2.0 * std::pow(mean / inner_prod, 1.0 / k1) : 1.0;
}

DnmfParams DnmfProblem::unpack(const Vector& x) const {
  if (x.size() != dimension_) {
    throw ShapeError("DnmfProblem::unpack: vector of length " + std::to_string(x.size()) + ", expected " +
                     std::to_string(dimension_));
  }
  const auto shapes = block_shapes(shapes_);
  DnmfParams p;
  Index offset = 0;
  auto take = [&](std::pair<Index, Index> rc) {
    DenseMatrix m = Eigen::Map<const DenseMatrix>(x.data() + offset, rc.first, rc.second);
    offset += rc.first * rc.second;
    return m;
  };
  for (std::size_t i = 0; i < shapes_.layers(); ++i) p.x.push_back(take(shapes[i]));
  p.y = take(shapes[shapes_.layers()]);
  p.z = take(shapes[shapes_.layers() + 1]);
  return p;
}

Vector DnmfProblem::pack(const DnmfParams& p) const {
  const auto shapes = block_shapes(shapes_);
  if (p.x.size() != shapes_.layers()) throw ShapeError("DnmfProblem::pack: wrong number of X blocks");
  Vector out(dimension_);
  Index offset = 0;
  auto put = [&](const DenseMatrix& m, std::pair<Index, Index> rc, const char* name) {
    if (m.rows() != rc.first || m.cols() != rc.second) {
      throw ShapeError(std::string("DnmfProblem::pack: block ") + name + " is " + shape_string(m) + ", expected " +
                       shape_string(rc.first, rc.second));
    }
    Eigen::Map<DenseMatrix>(out.data() + offset, rc.first, rc.second) = m;
    offset += m.size();
  };
  for (std::size_t i = 0; i < p.x.size(); ++i) put(p.x[i], shapes[i], "X");
  put(p.y, shapes[shapes_.layers()], "Y");
  put(p.z, shapes[shapes_.layers() + 1], "Z");
  return out;
}

DnmfParams DnmfProblem::zeros() const { return unpack(Vector::Zero(dimension_)); }

Vector DnmfProblem::initial_point(SeededRng& rng) const {
  Vector x(dimension_);
  for (Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.0, init_scale_);
  return x;
}

double DnmfProblem::objective(const Vector& x) const { return dnmf_loss(*this, unpack(x)); }

Vector DnmfProblem::gradient(const Vector& x) const { return pack(dnmf_gradient(*this, unpack(x))); }

double DnmfProblem::metric(const Vector& x) const { return dnmf_reconstruction_loss(*this, unpack(x)); }

Vector DnmfProblem::component_gradient(const Vector& x, std::size_t row) const {
  if (row >= static_cast<std::size_t>(shapes_.rows)) throw ParameterError("DnmfProblem: component out of range");
  const DnmfParams p = unpack(x);
  const auto r = static_cast<Index>(row);
  DenseMatrix g = DenseMatrix::Zero(shapes_.rows, shapes_.cols);
  const DenseMatrix rec_row = chain_product(p.x).row(r) * relu(p.y) + p.z.row(r) - s_.row(r);
  g.row(r) = (2.0 * static_cast<double>(shapes_.rows) / s_norm_sq_) * rec_row;
  DnmfParams out = reconstruction_gradient(p, g);
  out.z += l1_weight_ * sign_or_zero(p.z);
  return pack(out);
}

std::vector<Segment> DnmfProblem::segments() const {
  const auto shapes = block_shapes(shapes_);
  std::vector<Segment> out;
  Index offset = 0;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    std::string name = i < shapes_.layers() ? "X" + std::to_string(i + 1) : (i == shapes_.layers() ? "Y" : "Z");
    const Index size = shapes[i].first * shapes[i].second;
    out.push_back(Segment{offset, size, std::move(name)});
    offset += size;
  }
  return out;
}

DenseMatrix chain_product(const std::vector<DenseMatrix>& x) {
  if (x.empty()) throw ParameterError("chain_product: empty chain");
  DenseMatrix p = x.front();
  for (std::size_t i = 1; i < x.size(); ++i) p = mat_mul(p, x[i]);
  return p;
}

DenseMatrix dnmf_reconstruction(const DnmfParams& p) {
  const DenseMatrix prod = mat_mul(chain_product(p.x), relu(p.y));
  if (prod.rows() != p.z.rows() || prod.cols() != p.z.cols()) {
    throw ShapeError("dnmf_reconstruction: product is " + shape_string(prod) + " but Z is " + shape_string(p.z));
  }
  return prod + p.z;
}

double dnmf_reconstruction_loss(const DnmfProblem& problem, const DnmfParams& p) {
  return (dnmf_reconstruction(p) - problem.data()).squaredNorm() / problem.data_norm_sq();
}

double dnmf_loss(const DnmfProblem& problem, const DnmfParams& p) {
  return dnmf_reconstruction_loss(problem, p) + problem.l1_weight() * p.z.cwiseAbs().sum();
}

DnmfParams dnmf_gradient(const DnmfProblem& problem, const DnmfParams& p) {
  const DenseMatrix g = (2.0 / problem.data_norm_sq()) * (dnmf_reconstruction(p) - problem.data());
  DnmfParams out = reconstruction_gradient(p, g);
  out.z += problem.l1_weight() * sign_or_zero(p.z);
  return out;
}

std::shared_ptr<DnmfProblem> make_stacked_problem(DenseMatrix s, Index inner, double l1_weight, std::string id) {
  return std::make_shared<DnmfProblem>(std::move(s), std::vector<Index>{inner, inner, inner}, l1_weight,
                                       std::move(id));
}

DenseMatrix gen_synthetic_matrix(Index rows, Index cols, Index rank, std::uint64_t seed, double noise) {
  if (rows < 1 || cols < 1) throw ParameterError("gen_synthetic_matrix: rows and cols must be >= 1");
  if (rank < 1 || rank > std::min(rows, cols)) {
    throw ParameterError("gen_synthetic_matrix: rank " + std::to_string(rank) + " not in [1, " +
                         std::to_string(std::min(rows, cols)) + "]");
  }
  if (!(noise >= 0.0)) throw ParameterError("gen_synthetic_matrix: noise must be >= 0");
  SeededRng rng(seed);
  const DenseMatrix a = random_uniform_matrix(rows, rank, rng);
  const DenseMatrix b = random_uniform_matrix(rank, cols, rng);
  DenseMatrix s = a * b;
  if (noise > 0.0) s += random_normal_matrix(rows, cols, rng, noise);
  return s;
}

// ---------------------------------------------------------------------------
// Logistic regression
// ---------------------------------------------------------------------------

namespace {

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

LogisticProblem::LogisticProblem(DenseMatrix features, std::vector<double> labels, double l2_weight, std::string id,
                                 double init_scale)
    : features_(std::move(features)),
      labels_(std::move(labels)),
      l2_weight_(l2_weight),
      id_(std::move(id)),
      init_scale_(init_scale) {
  if (features_.rows() < 1 || features_.cols() < 1) throw ParameterError("LogisticProblem: empty feature matrix");
  if (static_cast<Index>(labels_.size()) != features_.rows()) {
    throw ShapeError("LogisticProblem: " + std::to_string(labels_.size()) + " labels for " +
                     std::to_string(features_.rows()) + " samples");
  }
  for (double y : labels_) {
    if (y != 0.0 && y != 1.0) throw ParameterError("LogisticProblem: labels must be 0 or 1");
  }
  if (!(l2_weight >= 0.0)) throw ParameterError("LogisticProblem: l2_weight must be >= 0");
}

Vector LogisticProblem::initial_point(SeededRng& rng) const {
  Vector w(dimension());
  for (Index i = 0; i < w.size(); ++i) w[i] = rng.uniform(-init_scale_, init_scale_);
  return w;
}

LossAndGradient logistic_loss_grad(const LogisticProblem& problem, const Vector& w) {
  if (w.size() != problem.dimension()) {
    throw ShapeError("logistic_loss_grad: weights of length " + std::to_string(w.size()) + ", expected " +
                     std::to_string(problem.dimension()));
  }
  const Vector z = problem.features() * w;
  const auto n = static_cast<double>(problem.samples());
  double loss = 0.0;
  Vector residual(z.size());
  for (Index i = 0; i < z.size(); ++i) {
    const double y = problem.labels()[static_cast<std::size_t>(i)];
    loss += softplus(z[i]) - y * z[i];
    residual[i] = sigmoid(z[i]) - y;
  }
  LossAndGradient out;
  out.loss = loss / n + 0.5 * problem.l2_weight() * w.squaredNorm();
  out.gradient = problem.features().transpose() * residual / n + problem.l2_weight() * w;
  return out;
}

double LogisticProblem::objective(const Vector& w) const { return logistic_loss_grad(*this, w).loss; }

Vector LogisticProblem::gradient(const Vector& w) const { return logistic_loss_grad(*this, w).gradient; }

Vector LogisticProblem::component_gradient(const Vector& w, std::size_t i) const {
  if (i >= component_count()) throw ParameterError("LogisticProblem: component out of range");
  const auto r = static_cast<Index>(i);
  const double z = features_.row(r).dot(w);
  return features_.row(r).transpose() * (sigmoid(z) - labels_[i]) + l2_weight_ * w;
}

// ---------------------------------------------------------------------------
// Multi-well
// ---------------------------------------------------------------------------

MultiWellProblem::MultiWellProblem(MultiWellSpec spec, std::string id) : spec_(std::move(spec)), id_(std::move(id)) {
  const Index d = spec_.a.size();
  if (d < 1) throw ParameterError("MultiWellProblem: dimension must be >= 1");
  if (spec_.b.size() != d || spec_.c.size() != d || spec_.box.dimension() != d ||
      spec_.init_box.dimension() != d) {
    throw ShapeError("MultiWellProblem: a, b, c and boxes must share one dimension");
  }
  if (!(spec_.box.lo.array() <= spec_.box.hi.array()).all() ||
      !(spec_.init_box.lo.array() <= spec_.init_box.hi.array()).all()) {
    throw ParameterError("MultiWellProblem: box lo must not exceed hi");
  }
}

MultiWellProblem MultiWellProblem::uniform(Index d, double a, double b, double c, double lo, double hi) {
  MultiWellSpec spec{Vector::Constant(d, a), Vector::Constant(d, b), Vector::Constant(d, c),
                     DomainBox::uniform(d, lo, hi), DomainBox::uniform(d, lo, hi)};
  return MultiWellProblem(std::move(spec));
}

double MultiWellProblem::global_value() const { return spec_.c.cwiseMin(0.0).sum(); }

std::optional<Vector> MultiWellProblem::global_optimum() const {
  Vector x(dimension());
  for (Index i = 0; i < x.size(); ++i) x[i] = spec_.c[i] >= 0.0 ? spec_.a[i] : spec_.b[i];
  return x;
}

Vector MultiWellProblem::initial_point(SeededRng& rng) const {
  Vector x(dimension());
  for (Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(spec_.init_box.lo[i], spec_.init_box.hi[i]);
  return x;
}

MultiWellEval multiwell_eval_grad(const MultiWellProblem& problem, const Vector& x) {
  const auto& s = problem.spec();
  if (x.size() != problem.dimension()) throw ShapeError("multiwell_eval_grad: dimension mismatch");
  MultiWellEval out;
  const Vector xc = s.box.clamp(x);
  out.clamped = (xc.array() != x.array()).any();
  out.subgradient = Vector::Zero(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double to_a = std::abs(xc[i] - s.a[i]);
    const double to_b = std::abs(xc[i] - s.b[i]) + s.c[i];
    out.value += std::min(to_a, to_b);
    double g = 0.0;
    if (to_a < to_b) {
      g = xc[i] > s.a[i] ? 1.0 : (xc[i] < s.a[i] ? -1.0 : 0.0);
    } else if (to_b < to_a) {
      g = xc[i] > s.b[i] ? 1.0 : (xc[i] < s.b[i] ? -1.0 : 0.0);
    }
    out.subgradient[i] = g;
  }
  return out;
}

double MultiWellProblem::objective(const Vector& x) const { return multiwell_eval_grad(*this, x).value; }

Vector MultiWellProblem::gradient(const Vector& x) const { return multiwell_eval_grad(*this, x).subgradient; }

// ---------------------------------------------------------------------------
// Quadratic
// ---------------------------------------------------------------------------

QuadraticProblem::QuadraticProblem(Vector curvature, Vector center, DomainBox init_box, std::string id)
    : curvature_(std::move(curvature)), center_(std::move(center)), init_box_(std::move(init_box)), id_(std::move(id)) {
  if (curvature_.size() != center_.size() || init_box_.dimension() != center_.size()) {
    throw ShapeError("QuadraticProblem: curvature, center and box must share one dimension");
  }
  if ((curvature_.array() <= 0.0).any()) throw ParameterError("QuadraticProblem: curvature must be positive");
}

Vector QuadraticProblem::initial_point(SeededRng& rng) const {
  Vector x(dimension());
  for (Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(init_box_.lo[i], init_box_.hi[i]);
  return x;
}

double QuadraticProblem::objective(const Vector& x) const {
  return 0.5 * (curvature_.array() * (x - center_).array().square()).sum();
}

Vector QuadraticProblem::gradient(const Vector& x) const {
  return (curvature_.array() * (x - center_).array()).matrix();
}

// ---------------------------------------------------------------------------
// Noise
// ---------------------------------------------------------------------------

NoisyGradientWrapper::NoisyGradientWrapper(std::shared_ptr<const Problem> inner, std::size_t period, double scale)
    : inner_(std::move(inner)), period_(period), scale_(scale) {
  if (!inner_) throw ParameterError("NoisyGradientWrapper: null inner problem");
  if (period_ == 0) throw ParameterError("NoisyGradientWrapper: period must be >= 1");
  if (!(scale_ >= 0.0)) throw ParameterError("NoisyGradientWrapper: scale must be >= 0");
}

Vector NoisyGradientWrapper::noise(std::size_t iteration, std::uint64_t run_seed) const {
  SeededRng rng(mix_seed(mix_seed(run_seed, fnv1a64(inner_->id())), iteration));
  Vector e(dimension());
  for (Index i = 0; i < e.size(); ++i) e[i] = scale_ * rng.normal();
  return e;
}

Vector NoisyGradientWrapper::observed_gradient(const Vector& x, const StepContext& ctx) const {
  Vector g = inner_->observed_gradient(x, ctx);
  if (ctx.iteration % period_ == 0 && scale_ > 0.0) g += noise(ctx.iteration, ctx.run_seed);
  return g;
}

Vector noisy_grad(const NoisyGradientWrapper& wrapper, std::size_t iteration, const Vector& x,
                  std::uint64_t run_seed) {
  if (iteration < 1) throw ParameterError("noisy_grad: iteration must be >= 1");
  return wrapper.observed_gradient(x, StepContext{iteration, run_seed});
}

}  // namespace permutopt
