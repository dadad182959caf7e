#pragma once

// Geometry of symmetric positive-definite matrices under the affine-invariant
// Riemannian metric: eigenvalue functions, distance, log/exp maps, geodesics,
// the Karcher mean, and the matrix-backpropagation rule for eigenvalue
// functions that the SPD network layers are built on.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "beetl/errors.hpp"

namespace beetl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

namespace detail {

inline double max_abs(const Matrix& m) { return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff(); }

inline bool is_symmetric(const Matrix& m, double rel_tol = 1e-10) {
  if (m.rows() != m.cols()) return false;
  return max_abs(m - m.transpose()) <= rel_tol * max_abs(m);
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline void require_square(const Matrix& m, const char* what) {
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw ShapeError(std::string(what) + ": expected a nonempty square matrix, got " +
                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

inline void require_same_dim(Index a, Index b, const char* what) {
  if (a != b) {
    throw ShapeError(std::string(what) + ": dimension mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  }
}

}  // namespace detail

// Dense SPD matrix. Validated on construction (square, finite, symmetric
// within 1e-10 relative, Cholesky succeeds) and stored exactly symmetric.
class SpdMatrix {
 public:
  explicit SpdMatrix(const Matrix& m) {
    detail::require_square(m, "SpdMatrix");
    if (!m.allFinite()) throw NotPositiveDefinite("SpdMatrix: non-finite entries");
    if (!detail::is_symmetric(m)) throw NotPositiveDefinite("SpdMatrix: input is not symmetric");
    m_ = detail::symmetrize(m);
    Eigen::LLT<Matrix> llt(m_);
    if (llt.info() != Eigen::Success) {
      throw NotPositiveDefinite("SpdMatrix: input is not positive definite");
    }
  }

  static SpdMatrix identity(Index n) { return SpdMatrix(Matrix::Identity(n, n)); }

  Index dim() const noexcept { return m_.rows(); }
  const Matrix& matrix() const noexcept { return m_; }

 private:
  Matrix m_;
};

struct EigenFactorization {
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // orthonormal columns

  Index dim() const noexcept { return eigenvalues.size(); }

  template <class F>
  Matrix map(F&& f) const {
    Vector mapped = eigenvalues.unaryExpr(std::forward<F>(f));
    Matrix out = eigenvectors * mapped.asDiagonal() * eigenvectors.transpose();
    return detail::symmetrize(out);
  }

  Matrix reconstruct() const {
    return map([](double x) { return x; });
  }
};

// Symmetric eigendecomposition with ascending eigenvalues and the first
// component above 1e-12 in magnitude of every eigenvector made positive.
inline EigenFactorization eig_sym(const Matrix& s) {
  detail::require_square(s, "eig_sym");
  if (!s.allFinite()) throw DataError("eig_sym: non-finite input");
  if (!detail::is_symmetric(s)) throw DataError("eig_sym: input is not symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(detail::symmetrize(s));
  if (solver.info() != Eigen::Success) {
    throw NumericalError("eig_sym: eigen solver did not converge");
  }
  EigenFactorization out{solver.eigenvalues(), solver.eigenvectors()};
  for (Index j = 0; j < out.eigenvectors.cols(); ++j) {
    auto col = out.eigenvectors.col(j);
    for (Index i = 0; i < col.size(); ++i) {
      if (std::abs(col(i)) > 1e-12) {
        if (col(i) < 0) col = -col;
        break;
      }
    }
  }
  return out;
}

inline EigenFactorization eig_sym(const SpdMatrix& s) { return eig_sym(s.matrix()); }

// Scalar function applied to a spectrum, with its derivative and a divided
// difference that stays accurate for nearly equal arguments.
class ScalarFunction {
 public:
  enum class Kind { Identity, Log, Exp, Sqrt, InvSqrt, Pow, Rectify };

  static ScalarFunction identity() { return {Kind::Identity, 0.0}; }
  static ScalarFunction log() { return {Kind::Log, 0.0}; }
  static ScalarFunction exp() { return {Kind::Exp, 0.0}; }
  static ScalarFunction sqrt() { return {Kind::Sqrt, 0.0}; }
  static ScalarFunction invsqrt() { return {Kind::InvSqrt, 0.0}; }
  static ScalarFunction pow(double t) { return {Kind::Pow, t}; }
  // max(x, floor); derivative 0 below the floor.
  static ScalarFunction rectify(double floor) { return {Kind::Rectify, floor}; }

  Kind kind() const noexcept { return kind_; }
  double parameter() const noexcept { return param_; }

  bool requires_positive() const noexcept {
    return kind_ == Kind::Log || kind_ == Kind::Sqrt || kind_ == Kind::InvSqrt || kind_ == Kind::Pow;
  }

  double operator()(double x) const {
    switch (kind_) {
      case Kind::Identity: return x;
      case Kind::Log: return std::log(x);
      case Kind::Exp: return std::exp(x);
      case Kind::Sqrt: return std::sqrt(x);
      case Kind::InvSqrt: return 1.0 / std::sqrt(x);
      case Kind::Pow: return std::pow(x, param_);
      case Kind::Rectify: return std::max(x, param_);
    }
    return x;
  }

  double derivative(double x) const {
    switch (kind_) {
      case Kind::Identity: return 1.0;
      case Kind::Log: return 1.0 / x;
      case Kind::Exp: return std::exp(x);
      case Kind::Sqrt: return 0.5 / std::sqrt(x);
      case Kind::InvSqrt: return -0.5 / (x * std::sqrt(x));
      case Kind::Pow: return param_ * std::pow(x, param_ - 1.0);
      case Kind::Rectify: return x > param_ ? 1.0 : 0.0;
    }
    return 1.0;
  }

  // (f(a) - f(b)) / (a - b), for a != b.
  double divided_difference(double a, double b) const {
    const double d = a - b;
    switch (kind_) {
      case Kind::Identity: return 1.0;
      case Kind::Log: return std::log1p(d / b) / d;
      case Kind::Exp: return std::exp(b) * std::expm1(d) / d;
      case Kind::Sqrt: return 1.0 / (std::sqrt(a) + std::sqrt(b));
      case Kind::InvSqrt: {
        const double ra = std::sqrt(a), rb = std::sqrt(b);
        return -1.0 / (ra * rb * (ra + rb));
      }
      case Kind::Pow: return std::pow(b, param_) * std::expm1(param_ * std::log1p(d / b)) / d;
      case Kind::Rectify: return (std::max(a, param_) - std::max(b, param_)) / d;
    }
    return 1.0;
  }

  std::string name() const {
    switch (kind_) {
      case Kind::Identity: return "identity";
      case Kind::Log: return "log";
      case Kind::Exp: return "exp";
      case Kind::Sqrt: return "sqrt";
      case Kind::InvSqrt: return "invsqrt";
      case Kind::Pow: return "pow";
      case Kind::Rectify: return "rectify";
    }
    return "?";
  }

 private:
  ScalarFunction(Kind kind, double param) : kind_(kind), param_(param) {}

  Kind kind_;
  double param_;
};

// U·diag(f(λ))·Uᵀ on an existing factorization.
inline Matrix spd_apply(const EigenFactorization& e, const ScalarFunction& f) {
  if (f.requires_positive() && e.eigenvalues.size() > 0 && !(e.eigenvalues.minCoeff() > 0.0)) {
    throw NotPositiveDefinite("spd_apply(" + f.name() + "): non-positive eigenvalue " +
                              std::to_string(e.eigenvalues.minCoeff()));
  }
  return e.map([&f](double x) { return f(x); });
}

inline Matrix spd_apply(const Matrix& s, const ScalarFunction& f) { return spd_apply(eig_sym(s), f); }
inline Matrix spd_apply(const SpdMatrix& s, const ScalarFunction& f) { return spd_apply(s.matrix(), f); }

inline Matrix sqrtm(const SpdMatrix& s) { return spd_apply(s, ScalarFunction::sqrt()); }
inline Matrix invsqrtm(const SpdMatrix& s) { return spd_apply(s, ScalarFunction::invsqrt()); }
inline Matrix logm(const SpdMatrix& s) { return spd_apply(s, ScalarFunction::log()); }
inline SpdMatrix expm(const Matrix& sym) { return SpdMatrix(spd_apply(sym, ScalarFunction::exp())); }
inline SpdMatrix powm(const SpdMatrix& s, double t) { return SpdMatrix(spd_apply(s, ScalarFunction::pow(t))); }

// Lifts eigenvalues below `floor` to `floor`. A negative floor selects the
// default 1e-10·λ_max.
inline SpdMatrix regularize(const Matrix& s, double floor = -1.0) {
  EigenFactorization e = eig_sym(s);
  const double top = e.eigenvalues.size() ? e.eigenvalues.maxCoeff() : 0.0;
  if (floor < 0.0) floor = 1e-10 * top;
  if (!(floor > 0.0)) throw NotPositiveDefinite("regularize: matrix has no positive eigenvalue");
  return SpdMatrix(e.map([floor](double x) { return std::max(x, floor); }));
}

// Symmetric tangent vector at an SPD base point.
class TangentVector {
 public:
  TangentVector(SpdMatrix base, const Matrix& value) : base_(std::move(base)) {
    detail::require_same_dim(base_.dim(), value.rows(), "TangentVector");
    detail::require_square(value, "TangentVector");
    if (!detail::is_symmetric(value)) throw DataError("TangentVector: value is not symmetric");
    value_ = detail::symmetrize(value);
  }

  const SpdMatrix& base() const noexcept { return base_; }
  const Matrix& value() const noexcept { return value_; }

  // Norm in the affine-invariant metric at the base point.
  double norm() const {
    const Matrix q = invsqrtm(base_);
    return (q * value_ * q).norm();
  }

 private:
  SpdMatrix base_;
  Matrix value_;
};

inline double airm_distance(const SpdMatrix& a, const SpdMatrix& b) {
  detail::require_same_dim(a.dim(), b.dim(), "airm_distance");
  // Eigenvalues of A^{-1}B equal those of A^{-1/2} B A^{-1/2}.
  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(b.matrix(), a.matrix(), Eigen::EigenvaluesOnly);
  if (solver.info() != Eigen::Success) throw NumericalError("airm_distance: eigen solver failed");
  double sum = 0.0;
  for (Index i = 0; i < solver.eigenvalues().size(); ++i) {
    const double l = std::log(solver.eigenvalues()(i));
    sum += l * l;
  }
  return std::sqrt(sum);
}

inline TangentVector log_map(const SpdMatrix& base, const SpdMatrix& p) {
  detail::require_same_dim(base.dim(), p.dim(), "log_map");
  const EigenFactorization eb = eig_sym(base);
  const Matrix s = spd_apply(eb, ScalarFunction::sqrt());
  const Matrix q = spd_apply(eb, ScalarFunction::invsqrt());
  const Matrix inner = spd_apply(detail::symmetrize(q * p.matrix() * q), ScalarFunction::log());
  return TangentVector(base, detail::symmetrize(s * inner * s));
}

inline SpdMatrix exp_map(const SpdMatrix& base, const TangentVector& v) {
  detail::require_same_dim(base.dim(), v.value().rows(), "exp_map");
  const EigenFactorization eb = eig_sym(base);
  const Matrix s = spd_apply(eb, ScalarFunction::sqrt());
  const Matrix q = spd_apply(eb, ScalarFunction::invsqrt());
  const Matrix inner = spd_apply(detail::symmetrize(q * v.value() * q), ScalarFunction::exp());
  return SpdMatrix(detail::symmetrize(s * inner * s));
}

inline SpdMatrix geodesic(const SpdMatrix& a, const SpdMatrix& b, double t) {
  detail::require_same_dim(a.dim(), b.dim(), "geodesic");
  if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("t", "geodesic parameter must lie in [0, 1]");
  if (t == 0.0) return a;
  if (t == 1.0) return b;
  const EigenFactorization ea = eig_sym(a);
  const Matrix s = spd_apply(ea, ScalarFunction::sqrt());
  const Matrix q = spd_apply(ea, ScalarFunction::invsqrt());
  const Matrix inner = spd_apply(detail::symmetrize(q * b.matrix() * q), ScalarFunction::pow(t));
  return SpdMatrix(detail::symmetrize(s * inner * s));
}

// Gradient of ⟨upstream, U f(Λ) Uᵀ⟩ with respect to the symmetric input,
// through the Loewner (divided-difference) matrix.
inline Matrix eig_fn_backward(const EigenFactorization& e, const ScalarFunction& f, const Matrix& upstream) {
  detail::require_same_dim(e.dim(), upstream.rows(), "eig_fn_backward");
  const Index n = e.dim();
  const Vector& lambda = e.eigenvalues;
  const Matrix& u = e.eigenvectors;
  Matrix loewner(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      loewner(i, j) = std::abs(lambda(i) - lambda(j)) < 1e-10 ? f.derivative(lambda(i))
                                                               : f.divided_difference(lambda(i), lambda(j));
    }
  }
  const Matrix inner = u.transpose() * detail::symmetrize(upstream) * u;
  return detail::symmetrize(u * loewner.cwiseProduct(inner) * u.transpose());
}

inline Matrix eig_fn_backward(const Matrix& s, const ScalarFunction& f, const Matrix& upstream) {
  return eig_fn_backward(eig_sym(s), f, upstream);
}

// Gradients of Y = A·B·A (A, B symmetric) given Ȳ.
struct SandwichGrad {
  Matrix outer;  // Ā
  Matrix inner;  // B̄
};

inline SandwichGrad sandwich_backward(const Matrix& a, const Matrix& b, const Matrix& grad_y) {
  return {grad_y * a * b + b * a * grad_y, a * grad_y * a};
}

struct KarcherOptions {
  int max_iter = 50;
  double tol = 1e-10;
};

// Per-iteration factorizations recorded for backpropagation through the mean.
struct KarcherTape {
  struct Step {
    EigenFactorization base;                 // current iterate
    std::vector<EigenFactorization> whitened;  // G^{-1/2} P_i G^{-1/2}
    EigenFactorization tangent;              // Σ w_i log(...)
  };
  std::vector<Step> steps;
};

struct KarcherResult {
  SpdMatrix mean;
  int iterations;
  double residual;  // ‖Σ w_i log(G^{-1/2} P_i G^{-1/2})‖_F at the returned G
};

namespace detail {

inline std::vector<double> resolve_weights(std::size_t n, std::span<const double> weights) {
  if (weights.empty()) return std::vector<double>(n, 1.0 / static_cast<double>(n));
  if (weights.size() != n) throw ConfigError("weights", "expected one weight per matrix");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("weights", "weights must be finite and nonnegative");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("weights", "weights must sum to 1");
  return {weights.begin(), weights.end()};
}

}  // namespace detail

// Karcher flow with unit step, started from the weighted arithmetic mean.
inline KarcherResult frechet_mean_detailed(std::span<const SpdMatrix> mats, std::span<const double> weights = {},
                                           KarcherOptions options = {}, KarcherTape* tape = nullptr) {
  if (mats.empty()) throw DataError("frechet_mean: empty input");
  const Index n = mats.front().dim();
  for (const auto& m : mats) detail::require_same_dim(n, m.dim(), "frechet_mean");
  const std::vector<double> w = detail::resolve_weights(mats.size(), weights);
  if (tape) tape->steps.clear();

  Matrix g = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < mats.size(); ++i) g += w[i] * mats[i].matrix();
  g = detail::symmetrize(g);

  for (int it = 0;; ++it) {
    EigenFactorization eg = eig_sym(g);
    const Matrix q = spd_apply(eg, ScalarFunction::invsqrt());
    Matrix t = Matrix::Zero(n, n);
    std::vector<EigenFactorization> whitened;
    if (tape) whitened.reserve(mats.size());
    for (std::size_t i = 0; i < mats.size(); ++i) {
      EigenFactorization ea = eig_sym(detail::symmetrize(q * mats[i].matrix() * q));
      t += w[i] * spd_apply(ea, ScalarFunction::log());
      if (tape) whitened.push_back(std::move(ea));
    }
    const double residual = t.norm();
    if (residual <= options.tol) return {SpdMatrix(g), it, residual};
    if (it >= options.max_iter) {
      throw ConvergenceError("frechet_mean: Karcher flow did not converge", it, residual);
    }
    EigenFactorization et = eig_sym(t);
    const Matrix s = spd_apply(eg, ScalarFunction::sqrt());
    g = detail::symmetrize(s * spd_apply(et, ScalarFunction::exp()) * s);
    if (tape) tape->steps.push_back({std::move(eg), std::move(whitened), std::move(et)});
  }
}

inline SpdMatrix frechet_mean(std::span<const SpdMatrix> mats, std::span<const double> weights = {},
                              KarcherOptions options = {}) {
  return frechet_mean_detailed(mats, weights, options).mean;
}

// Gradient of ⟨grad_mean, frechet_mean(mats)⟩ with respect to every input,
// obtained by differentiating the recorded Karcher iterations and the
// arithmetic-mean initialization.
inline std::vector<Matrix> frechet_mean_backward(const KarcherTape& tape, std::span<const SpdMatrix> mats,
                                                 std::span<const double> weights, const Matrix& grad_mean) {
  const std::vector<double> w = detail::resolve_weights(mats.size(), weights);
  const Index n = grad_mean.rows();
  std::vector<Matrix> grads(mats.size(), Matrix::Zero(n, n));
  Matrix grad_g = detail::symmetrize(grad_mean);
  for (auto step = tape.steps.rbegin(); step != tape.steps.rend(); ++step) {
    const Matrix s = spd_apply(step->base, ScalarFunction::sqrt());
    const Matrix q = spd_apply(step->base, ScalarFunction::invsqrt());
    const Matrix e = spd_apply(step->tangent, ScalarFunction::exp());
    // G' = S·E·S
    const SandwichGrad outer = sandwich_backward(s, e, grad_g);
    const Matrix grad_t = eig_fn_backward(step->tangent, ScalarFunction::exp(), outer.inner);
    Matrix grad_q = Matrix::Zero(n, n);
    for (std::size_t i = 0; i < mats.size(); ++i) {
      const Matrix grad_a = eig_fn_backward(step->whitened[i], ScalarFunction::log(), w[i] * grad_t);
      const SandwichGrad inner = sandwich_backward(q, mats[i].matrix(), grad_a);
      grads[i] += inner.inner;
      grad_q += inner.outer;
    }
    grad_g = eig_fn_backward(step->base, ScalarFunction::sqrt(), outer.outer) +
             eig_fn_backward(step->base, ScalarFunction::invsqrt(), grad_q);
  }
  for (std::size_t i = 0; i < mats.size(); ++i) grads[i] += w[i] * grad_g;
  return grads;
}

}  // namespace beetl
