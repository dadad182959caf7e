#pragma once

// SPD network layers with hand-written backward passes.
//
// Matrices flowing between SPD layers are plain symmetric `Matrix` values;
// inputs are validated once at the model boundary. Every backward takes the
// cache its forward produced and returns gradients with respect to the
// layer input and parameters.

#include <cmath>
#include <random>
#include <span>
#include <vector>

#include "beetl/classify.hpp"
#include "beetl/errors.hpp"
#include "beetl/spd.hpp"

namespace beetl::spdnet {

using Rng = std::mt19937_64;

enum class Mode { Train, Eval };

inline Matrix gaussian_matrix(Rng& rng, Index rows, Index cols, double scale = 1.0) {
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
  return m;
}

// ---------------------------------------------------------------------------
// Stiefel manifold helpers

inline double stiefel_defect(const Matrix& w) {
  return (w.transpose() * w - Matrix::Identity(w.cols(), w.cols())).norm();
}

// Q factor of the thin QR decomposition, signs chosen so diag(R) > 0.
inline Matrix qr_retraction(const Matrix& a) {
  Eigen::HouseholderQR<Matrix> qr(a);
  Matrix q = qr.householderQ() * Matrix::Identity(a.rows(), a.cols());
  const Matrix r = qr.matrixQR().topRows(a.cols()).triangularView<Eigen::Upper>();
  for (Index j = 0; j < a.cols(); ++j)
    if (r(j, j) < 0) q.col(j) = -q.col(j);
  return q;
}

// Euclidean gradient projected to the tangent space of the Stiefel manifold at w.
inline Matrix stiefel_project(const Matrix& w, const Matrix& grad) {
  return grad - w * detail::symmetrize(w.transpose() * grad);
}

// ---------------------------------------------------------------------------
// BiMap: Y = Wᵀ X W with W semi-orthogonal (d_in × d_out, d_out ≤ d_in).

struct BiMapLayer {
  Matrix weight;

  static BiMapLayer random(Index in_dim, Index out_dim, Rng& rng) {
    if (out_dim > in_dim || out_dim <= 0) {
      throw ConfigError("bimap", "output width " + std::to_string(out_dim) + " must lie in [1, " +
                                     std::to_string(in_dim) + "]");
    }
    return {qr_retraction(gaussian_matrix(rng, in_dim, out_dim))};
  }

  Index in_dim() const noexcept { return weight.rows(); }
  Index out_dim() const noexcept { return weight.cols(); }

  Matrix forward(const Matrix& x) const {
    detail::require_same_dim(in_dim(), x.rows(), "bimap_forward");
    return detail::symmetrize(weight.transpose() * x * weight);
  }

  SpdMatrix forward(const SpdMatrix& x) const { return SpdMatrix(forward(x.matrix())); }

  struct Grad {
    Matrix input;
    Matrix weight;
  };

  Grad backward(const Matrix& x, const Matrix& grad_out) const {
    detail::require_same_dim(out_dim(), grad_out.rows(), "bimap_backward");
    return {detail::symmetrize(weight * grad_out * weight.transpose()),
            x * weight * (grad_out + grad_out.transpose())};
  }
};

// ---------------------------------------------------------------------------
// ReEig: eigenvalues mapped through max(λ, ε).

struct ReEigLayer {
  double eps = 1e-4;

  Matrix forward(const Matrix& x, EigenFactorization* cache = nullptr) const {
    if (!(eps > 0.0)) throw ConfigError("reeig_eps", "must be positive");
    EigenFactorization e = eig_sym(x);
    Matrix y = spd_apply(e, ScalarFunction::rectify(eps));
    if (cache) *cache = std::move(e);
    return y;
  }

  Matrix backward(const EigenFactorization& cache, const Matrix& grad_out) const {
    return eig_fn_backward(cache, ScalarFunction::rectify(eps), grad_out);
  }
};

// ---------------------------------------------------------------------------
// LogEig: matrix logarithm, vectorized as tangent features at the identity.

inline Vector logeig_forward(const Matrix& x, EigenFactorization* cache = nullptr) {
  EigenFactorization e = eig_sym(x);
  Vector v = upper_vectorize(spd_apply(e, ScalarFunction::log()));
  if (cache) *cache = std::move(e);
  return v;
}

inline Matrix logeig_backward(const EigenFactorization& cache, const Vector& grad_out) {
  return eig_fn_backward(cache, ScalarFunction::log(), upper_vectorize_backward(grad_out, cache.dim()));
}

// ---------------------------------------------------------------------------
// Riemannian batch normalization: center each X at the batch Karcher mean M
// (X' = M^{-1/2} X M^{-1/2}), then bias it by G (X'' = G^{1/2} X' G^{1/2}).
// Evaluation uses the running mean in place of M.

struct RbnLayer {
  Matrix bias;          // G, SPD
  Matrix running_mean;  // SPD
  double momentum = 0.9;
  KarcherOptions karcher{};

  static RbnLayer identity(Index n, double momentum = 0.9) {
    return {Matrix::Identity(n, n), Matrix::Identity(n, n), momentum, {}};
  }

  Index dim() const noexcept { return bias.rows(); }

  struct Cache {
    Mode mode = Mode::Eval;
    std::vector<SpdMatrix> inputs;
    KarcherTape tape;
    Matrix batch_mean;
    EigenFactorization mean_eig;
    Matrix mean_invsqrt;
    EigenFactorization bias_eig;
    Matrix bias_sqrt;
    std::vector<Matrix> centered;
  };

  std::vector<Matrix> forward(std::span<const Matrix> batch, Mode mode, Cache* cache = nullptr) const {
    if (batch.empty()) throw DataError("rbn_forward: empty batch");
    Cache local;
    Cache& c = cache ? *cache : local;
    c = Cache{};
    c.mode = mode;
    c.inputs.reserve(batch.size());
    for (const auto& x : batch) {
      detail::require_same_dim(dim(), x.rows(), "rbn_forward");
      c.inputs.emplace_back(x);
    }
    if (mode == Mode::Train) {
      c.batch_mean = frechet_mean_detailed(c.inputs, {}, karcher, &c.tape).mean.matrix();
    } else {
      c.batch_mean = running_mean;
    }
    c.mean_eig = eig_sym(c.batch_mean);
    c.mean_invsqrt = spd_apply(c.mean_eig, ScalarFunction::invsqrt());
    c.bias_eig = eig_sym(bias);
    c.bias_sqrt = spd_apply(c.bias_eig, ScalarFunction::sqrt());
    std::vector<Matrix> out;
    out.reserve(batch.size());
    for (const auto& x : c.inputs) {
      c.centered.push_back(detail::symmetrize(c.mean_invsqrt * x.matrix() * c.mean_invsqrt));
      out.push_back(detail::symmetrize(c.bias_sqrt * c.centered.back() * c.bias_sqrt));
    }
    return out;
  }

  std::vector<SpdMatrix> forward(std::span<const SpdMatrix> batch, Mode mode, Cache* cache = nullptr) const {
    std::vector<Matrix> plain;
    for (const auto& x : batch) plain.push_back(x.matrix());
    std::vector<SpdMatrix> out;
    for (auto& y : forward(plain, mode, cache)) out.emplace_back(y);
    return out;
  }

  // running_mean ← geodesic(running_mean, M, momentum)
  void update_running_mean(const Matrix& batch_mean) {
    running_mean = geodesic(SpdMatrix(running_mean), SpdMatrix(batch_mean), momentum).matrix();
  }

  struct Grad {
    std::vector<Matrix> inputs;
    Matrix bias;
  };

  Grad backward(const Cache& c, std::span<const Matrix> grad_out) const {
    detail::require_same_dim(static_cast<Index>(c.inputs.size()), static_cast<Index>(grad_out.size()),
                             "rbn_backward");
    const Index n = dim();
    Grad g{std::vector<Matrix>(c.inputs.size()), Matrix::Zero(n, n)};
    Matrix grad_bias_sqrt = Matrix::Zero(n, n);
    Matrix grad_invsqrt = Matrix::Zero(n, n);
    for (std::size_t i = 0; i < c.inputs.size(); ++i) {
      const SandwichGrad outer = sandwich_backward(c.bias_sqrt, c.centered[i], grad_out[i]);
      grad_bias_sqrt += outer.outer;
      const SandwichGrad inner = sandwich_backward(c.mean_invsqrt, c.inputs[i].matrix(), outer.inner);
      grad_invsqrt += inner.outer;
      g.inputs[i] = inner.inner;
    }
    g.bias = eig_fn_backward(c.bias_eig, ScalarFunction::sqrt(), grad_bias_sqrt);
    if (c.mode == Mode::Train) {
      const Matrix grad_mean = eig_fn_backward(c.mean_eig, ScalarFunction::invsqrt(), grad_invsqrt);
      const std::vector<Matrix> through_mean = frechet_mean_backward(c.tape, c.inputs, {}, grad_mean);
      for (std::size_t i = 0; i < c.inputs.size(); ++i) g.inputs[i] += through_mean[i];
    }
    for (auto& m : g.inputs) m = detail::symmetrize(m);
    return g;
  }
};

// ---------------------------------------------------------------------------
// Dense layer on column-stacked samples: Y = W X + b.

struct LinearLayer {
  Matrix weight;  // out × in
  Matrix bias;    // out × 1

  static LinearLayer random(Index in_dim, Index out_dim, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
    std::uniform_real_distribution<double> unif(-limit, limit);
    Matrix w(out_dim, in_dim);
    for (Index i = 0; i < out_dim; ++i)
      for (Index j = 0; j < in_dim; ++j) w(i, j) = unif(rng);
    return {w, Matrix::Zero(out_dim, 1)};
  }

  Index in_dim() const noexcept { return weight.cols(); }
  Index out_dim() const noexcept { return weight.rows(); }

  Matrix forward(const Matrix& x) const {
    detail::require_same_dim(in_dim(), x.rows(), "linear_forward");
    return (weight * x).colwise() + bias.col(0);
  }

  struct Grad {
    Matrix input;
    Matrix weight;
    Matrix bias;
  };

  Grad backward(const Matrix& x, const Matrix& grad_out) const {
    return {weight.transpose() * grad_out, grad_out * x.transpose(), grad_out.rowwise().sum()};
  }
};

// ---------------------------------------------------------------------------
// Deep-Set alignment over one subject's set of feature vectors (columns):
// m = mean_i Γ(z_i), z'_i = Λ([z_i; m]). Γ and Λ are affine.

struct DeepSetAlignLayer {
  LinearLayer gamma;   // feature → embed
  LinearLayer lambda;  // feature + embed → feature

  static DeepSetAlignLayer random(Index feature_dim, Index embed_dim, Rng& rng) {
    return {LinearLayer::random(feature_dim, embed_dim, rng), identity_lambda(feature_dim, embed_dim)};
  }

  // Λ = [I 0]: the layer passes features through unchanged.
  static LinearLayer identity_lambda(Index feature_dim, Index embed_dim) {
    Matrix w = Matrix::Zero(feature_dim, feature_dim + embed_dim);
    w.leftCols(feature_dim).setIdentity();
    return {w, Matrix::Zero(feature_dim, 1)};
  }

  Index feature_dim() const noexcept { return gamma.in_dim(); }
  Index embed_dim() const noexcept { return gamma.out_dim(); }

  struct Cache {
    Matrix input;
    Matrix stacked;
  };

  Matrix forward(const Matrix& z, Cache* cache = nullptr) const {
    if (z.cols() == 0) throw DataError("deepset_forward: empty set");
    detail::require_same_dim(feature_dim(), z.rows(), "deepset_forward");
    detail::require_same_dim(feature_dim() + embed_dim(), lambda.in_dim(), "deepset_forward");
    const Vector m = gamma.forward(z).rowwise().mean();
    Matrix stacked(feature_dim() + embed_dim(), z.cols());
    stacked.topRows(feature_dim()) = z;
    stacked.bottomRows(embed_dim()) = m.replicate(1, z.cols());
    Matrix out = lambda.forward(stacked);
    if (cache) *cache = {z, std::move(stacked)};
    return out;
  }

  struct Grad {
    Matrix input;
    LinearLayer::Grad gamma;
    LinearLayer::Grad lambda;
  };

  Grad backward(const Cache& c, const Matrix& grad_out) const {
    Grad g;
    g.lambda = lambda.backward(c.stacked, grad_out);
    const Index n = c.input.cols();
    const Vector grad_m = g.lambda.input.bottomRows(embed_dim()).rowwise().sum();
    // m = mean_i (W_Γ z_i + b_Γ)
    const Matrix grad_gamma_out = (grad_m / static_cast<double>(n)).replicate(1, n);
    g.gamma = gamma.backward(c.input, grad_gamma_out);
    g.input = g.lambda.input.topRows(feature_dim()) + g.gamma.input;
    return g;
  }
};

// ---------------------------------------------------------------------------
// Adam on Euclidean parameters.

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamSlot {
  Matrix m;
  Matrix v;
};

inline void adam_step(Matrix& param, const Matrix& grad, AdamSlot& slot, const AdamOptions& o, long step) {
  if (slot.m.size() == 0) {
    slot.m = Matrix::Zero(param.rows(), param.cols());
    slot.v = Matrix::Zero(param.rows(), param.cols());
  }
  slot.m = o.beta1 * slot.m + (1.0 - o.beta1) * grad;
  slot.v = o.beta2 * slot.v + (1.0 - o.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
  param.array() -= o.lr * (slot.m.array() / c1) / ((slot.v.array() / c2).sqrt() + o.eps);
}

}  // namespace beetl::spdnet
