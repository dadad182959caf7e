#pragma once

// Classifiers on the SPD manifold: minimum distance to Riemannian mean
// (MDRM), tangent-space features with a multinomial logistic head, and the
// pairwise distance matrix used for external embedding plots.

#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <set>
#include <span>
#include <vector>

#include "beetl/errors.hpp"
#include "beetl/spd.hpp"

namespace beetl {

namespace detail {

inline void require_labels(std::size_t n_items, std::span<const int> labels, const char* what) {
  if (n_items != labels.size()) throw ShapeError(std::string(what) + ": one label per item is required");
  if (n_items == 0) throw DataError(std::string(what) + ": empty training set");
  for (int l : labels)
    if (l < 0) throw DataError(std::string(what) + ": negative class label");
}

// First index of the maximum; ties go to the lowest index.
inline int argmax(const Vector& v) {
  Index best = 0;
  for (Index i = 1; i < v.size(); ++i)
    if (v(i) > v(best)) best = i;
  return static_cast<int>(best);
}

}  // namespace detail

struct MdrmModel {
  std::map<int, SpdMatrix> class_means;

  Index dim() const { return class_means.empty() ? 0 : class_means.begin()->second.dim(); }
};

struct MdrmPrediction {
  int label;
  std::map<int, double> distances;
};

inline MdrmModel fit_mdrm(std::span<const SpdMatrix> covs, std::span<const int> labels, KarcherOptions options = {}) {
  detail::require_labels(covs.size(), labels, "fit_mdrm");
  std::map<int, std::vector<SpdMatrix>> by_class;
  for (std::size_t i = 0; i < covs.size(); ++i) {
    detail::require_same_dim(covs.front().dim(), covs[i].dim(), "fit_mdrm");
    by_class[labels[i]].push_back(covs[i]);
  }
  if (by_class.size() < 2) throw DataError("fit_mdrm: need at least two classes");
  MdrmModel m;
  for (const auto& [label, members] : by_class) m.class_means.emplace(label, frechet_mean(members, {}, options));
  return m;
}

// Nearest class mean under the affine-invariant distance. Distances within
// kMdrmTieTolerance (relative) count as ties, which go to the lowest class.
inline constexpr double kMdrmTieTolerance = 1e-12;

inline MdrmPrediction predict_mdrm(const MdrmModel& m, const SpdMatrix& c) {
  if (m.class_means.empty()) throw DataError("predict_mdrm: model has no classes");
  detail::require_same_dim(m.dim(), c.dim(), "predict_mdrm");
  MdrmPrediction out{m.class_means.begin()->first, {}};
  double best = std::numeric_limits<double>::infinity();
  for (const auto& [label, mean] : m.class_means) {
    const double d = airm_distance(mean, c);
    out.distances.emplace(label, d);
    if (std::isinf(best) || d < best - kMdrmTieTolerance * std::max(1.0, best)) {
      best = d;
      out.label = label;
    }
  }
  return out;
}

inline std::vector<int> predict_mdrm(const MdrmModel& m, std::span<const SpdMatrix> covs) {
  std::vector<int> out;
  out.reserve(covs.size());
  for (const auto& c : covs) out.push_back(predict_mdrm(m, c).label);
  return out;
}

inline Index tangent_dim(Index n) { return n * (n + 1) / 2; }

// Row-major upper triangle of a symmetric matrix with off-diagonal entries
// scaled by √2, so the Euclidean norm equals the Frobenius norm.
inline Vector upper_vectorize(const Matrix& s) {
  const Index n = s.rows();
  Vector v(tangent_dim(n));
  Index k = 0;
  for (Index i = 0; i < n; ++i)
    for (Index j = i; j < n; ++j) v(k++) = i == j ? s(i, i) : std::sqrt(2.0) * s(i, j);
  return v;
}

// Adjoint of upper_vectorize restricted to symmetric matrices: returns the
// symmetric Ȳ with ⟨Ȳ, dY⟩ = ⟨ḡ, d vec(Y)⟩ for symmetric dY.
inline Matrix upper_vectorize_backward(const Vector& grad, Index n) {
  detail::require_same_dim(tangent_dim(n), grad.size(), "upper_vectorize_backward");
  Matrix g(n, n);
  Index k = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i; j < n; ++j, ++k) {
      if (i == j) {
        g(i, i) = grad(k);
      } else {
        g(i, j) = g(j, i) = grad(k) / std::sqrt(2.0);
      }
    }
  }
  return g;
}

// Whitened log map at `base`: vec(log(B^{-1/2} C B^{-1/2})). Its norm equals
// the affine-invariant distance between base and c.
inline Vector tangent_features(const SpdMatrix& c, const SpdMatrix& base) {
  detail::require_same_dim(base.dim(), c.dim(), "tangent_features");
  const Matrix q = invsqrtm(base);
  return upper_vectorize(spd_apply(detail::symmetrize(q * c.matrix() * q), ScalarFunction::log()));
}

struct LogisticOptions {
  int epochs = 500;
  double lr = 0.1;
};

// Multinomial logistic regression on standardized features, trained by
// full-batch gradient descent. A step that would raise the training loss is
// retried at half the step size, so the recorded loss never increases.
struct LogisticRegression {
  std::vector<int> classes;  // sorted class labels, row order of `weights`
  Vector feature_mean;
  Vector feature_scale;
  Matrix weights;  // classes × features
  Vector bias;
  std::vector<double> loss_history;

  Vector logits(const Vector& x) const {
    detail::require_same_dim(feature_mean.size(), x.size(), "LogisticRegression::logits");
    const Vector z = (x - feature_mean).cwiseQuotient(feature_scale);
    return weights * z + bias;
  }

  int predict(const Vector& x) const { return classes[static_cast<std::size_t>(detail::argmax(logits(x)))]; }
};

namespace detail {

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (Index i = 0; i < p.rows(); ++i) {
    const double mx = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - mx).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

inline double cross_entropy(const Matrix& logits, const std::vector<Index>& targets) {
  double loss = 0.0;
  for (Index i = 0; i < logits.rows(); ++i) {
    const double mx = logits.row(i).maxCoeff();
    const double lse = mx + std::log((logits.row(i).array() - mx).exp().sum());
    loss += lse - logits(i, targets[static_cast<std::size_t>(i)]);
  }
  return loss / static_cast<double>(logits.rows());
}

}  // namespace detail

// Rows of `features` are samples.
inline LogisticRegression fit_logistic(const Matrix& features, std::span<const int> labels,
                                       LogisticOptions options = {}) {
  detail::require_labels(static_cast<std::size_t>(features.rows()), labels, "fit_logistic");
  if (options.epochs < 0 || !(options.lr >= 0.0)) throw ConfigError("logistic", "epochs and lr must be nonnegative");
  LogisticRegression m;
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw DataError("fit_logistic: need at least two classes");
  m.classes.assign(distinct.begin(), distinct.end());
  std::map<int, Index> index_of;
  for (std::size_t k = 0; k < m.classes.size(); ++k) index_of[m.classes[k]] = static_cast<Index>(k);
  std::vector<Index> targets;
  for (int l : labels) targets.push_back(index_of.at(l));

  const Index n = features.rows(), d = features.cols(), k = static_cast<Index>(m.classes.size());
  m.feature_mean = features.colwise().mean().transpose();
  const Matrix centered = features.rowwise() - m.feature_mean.transpose();
  m.feature_scale = (centered.array().square().colwise().sum() / static_cast<double>(n))
                        .sqrt()
                        .transpose()
                        .cwiseMax(1e-12);
  const Matrix z = centered.array().rowwise() / m.feature_scale.transpose().array();
  Matrix onehot = Matrix::Zero(n, k);
  for (Index i = 0; i < n; ++i) onehot(i, targets[static_cast<std::size_t>(i)]) = 1.0;

  m.weights = Matrix::Zero(k, d);
  m.bias = Vector::Zero(k);
  auto logits_of = [&](const Matrix& w, const Vector& b) -> Matrix {
    return (z * w.transpose()).rowwise() + b.transpose();
  };
  double loss = detail::cross_entropy(logits_of(m.weights, m.bias), targets);
  m.loss_history.push_back(loss);
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const Matrix residual = (detail::softmax_rows(logits_of(m.weights, m.bias)) - onehot) / static_cast<double>(n);
    const Matrix grad_w = residual.transpose() * z;
    const Vector grad_b = residual.colwise().sum().transpose();
    double step = options.lr;
    for (int halving = 0; halving < 30; ++halving, step *= 0.5) {
      const Matrix w = m.weights - step * grad_w;
      const Vector b = m.bias - step * grad_b;
      const double trial = detail::cross_entropy(logits_of(w, b), targets);
      if (trial <= loss) {
        m.weights = w;
        m.bias = b;
        loss = trial;
        break;
      }
    }
    m.loss_history.push_back(loss);
  }
  return m;
}

struct TangentClassifier {
  SpdMatrix base;
  LogisticRegression head;

  int predict(const SpdMatrix& c) const { return head.predict(tangent_features(c, base)); }
};

inline Matrix tangent_feature_matrix(std::span<const SpdMatrix> covs, const SpdMatrix& base) {
  Matrix f(static_cast<Index>(covs.size()), tangent_dim(base.dim()));
  for (std::size_t i = 0; i < covs.size(); ++i) f.row(static_cast<Index>(i)) = tangent_features(covs[i], base);
  return f;
}

// Base point is the Karcher mean of the training covariances.
inline TangentClassifier fit_tangent_classifier(std::span<const SpdMatrix> covs, std::span<const int> labels,
                                                LogisticOptions options = {}) {
  detail::require_labels(covs.size(), labels, "fit_tangent_classifier");
  SpdMatrix base = frechet_mean(covs);
  LogisticRegression head = fit_logistic(tangent_feature_matrix(covs, base), labels, options);
  return {std::move(base), std::move(head)};
}

inline std::vector<int> predict_tangent(const TangentClassifier& m, std::span<const SpdMatrix> covs) {
  std::vector<int> out;
  out.reserve(covs.size());
  for (const auto& c : covs) out.push_back(m.predict(c));
  return out;
}

inline Matrix pairwise_distances(std::span<const SpdMatrix> covs) {
  const auto n = static_cast<Index>(covs.size());
  Matrix d = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    detail::require_same_dim(covs.front().dim(), covs[static_cast<std::size_t>(i)].dim(), "pairwise_distances");
    for (Index j = i + 1; j < n; ++j) {
      d(i, j) = d(j, i) = airm_distance(covs[static_cast<std::size_t>(i)], covs[static_cast<std::size_t>(j)]);
    }
  }
  return d;
}

// Header row ",0,1,...,n-1"; each row starts with its index.
inline void write_distance_csv(std::ostream& os, const Matrix& d) {
  os << std::setprecision(17);
  for (Index j = 0; j < d.cols(); ++j) os << ',' << j;
  os << '\n';
  for (Index i = 0; i < d.rows(); ++i) {
    os << i;
    for (Index j = 0; j < d.cols(); ++j) os << ',' << d(i, j);
    os << '\n';
  }
}

}  // namespace beetl
