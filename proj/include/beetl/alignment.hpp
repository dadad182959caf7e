#pragma once

// Domain-adaptation transforms on covariance inputs and latent features.
//
//  * Euclidean alignment whitens every subject by the inverse square root of
//    its arithmetic mean covariance, so each subject's mean becomes I.
//  * The Riemannian variant whitens by the Karcher mean instead.
//  * Label alignment maps the mean covariance of a source class onto the
//    mean covariance of a (possibly differently named) target class.
//  * Feature standardization normalizes latent features per group
//    (subject, or subject and session) to zero mean and unit variance.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "beetl/codec.hpp"
#include "beetl/errors.hpp"
#include "beetl/signal.hpp"
#include "beetl/spd.hpp"

namespace beetl {

enum class AlignmentKind { Euclidean, Riemannian };

inline std::string to_string(AlignmentKind k) { return k == AlignmentKind::Euclidean ? "euclidean" : "riemannian"; }

inline AlignmentKind alignment_kind_from_string(const std::string& s) {
  if (s == "euclidean") return AlignmentKind::Euclidean;
  if (s == "riemannian") return AlignmentKind::Riemannian;
  throw ConfigError("kind", "unknown alignment kind '" + s + "'");
}

inline SpdMatrix arithmetic_mean(std::span<const SpdMatrix> mats) {
  if (mats.empty()) throw DataError("arithmetic_mean: empty input");
  Matrix sum = Matrix::Zero(mats.front().dim(), mats.front().dim());
  for (const auto& m : mats) {
    detail::require_same_dim(sum.rows(), m.dim(), "arithmetic_mean");
    sum += m.matrix();
  }
  return SpdMatrix(sum / static_cast<double>(mats.size()));
}

// Whitening map T = R^{-1/2} for one scope (usually a subject).
struct AlignmentTransform {
  AlignmentKind kind;
  std::string scope;
  SpdMatrix reference;
  Matrix transform;

  Index dim() const noexcept { return reference.dim(); }
};

inline AlignmentTransform make_alignment(AlignmentKind kind, std::string scope, SpdMatrix reference) {
  Matrix t = invsqrtm(reference);
  return {kind, std::move(scope), std::move(reference), std::move(t)};
}

inline AlignmentTransform fit_euclidean_alignment(std::span<const SpdMatrix> covs, std::string scope = {}) {
  if (covs.empty()) throw DataError("fit_euclidean_alignment: no trials for scope '" + scope + "'");
  return make_alignment(AlignmentKind::Euclidean, std::move(scope), arithmetic_mean(covs));
}

// Reference is the Karcher mean rather than the arithmetic mean.
inline AlignmentTransform fit_riemannian_alignment(std::span<const SpdMatrix> covs, std::string scope = {},
                                                   KarcherOptions options = {}) {
  if (covs.empty()) throw DataError("fit_riemannian_alignment: no trials for scope '" + scope + "'");
  return make_alignment(AlignmentKind::Riemannian, std::move(scope), frechet_mean(covs, {}, options));
}

inline AlignmentTransform fit_alignment(AlignmentKind kind, std::span<const SpdMatrix> covs, std::string scope = {}) {
  return kind == AlignmentKind::Euclidean ? fit_euclidean_alignment(covs, std::move(scope))
                                          : fit_riemannian_alignment(covs, std::move(scope));
}

inline Trial apply_alignment(const AlignmentTransform& a, const Trial& t) {
  detail::require_same_dim(a.dim(), t.channels(), "apply_alignment");
  return Trial{a.transform * t.signal, t.rate, t.info};
}

inline SpdMatrix apply_alignment(const AlignmentTransform& a, const SpdMatrix& c) {
  detail::require_same_dim(a.dim(), c.dim(), "apply_alignment");
  return SpdMatrix(detail::symmetrize(a.transform * c.matrix() * a.transform.transpose()));
}

inline CovarianceEstimate apply_alignment(const AlignmentTransform& a, const CovarianceEstimate& c) {
  return {apply_alignment(a, c.cov), c.shrinkage, c.info};
}

struct ClassPair {
  int source;
  int target;
  bool operator==(const ClassPair&) const = default;
};

enum class ClassMean { Arithmetic, Frechet };

// Per-pair map T_c = R_t^{1/2} R_s^{-1/2}, so that T_c R_s T_cᵀ = R_t.
struct LabelAlignmentMap {
  struct Entry {
    ClassPair pair;
    SpdMatrix source_mean;
    SpdMatrix target_mean;
    Matrix transform;
  };
  std::vector<Entry> entries;

  const Entry* find_source(int source_class) const {
    for (const auto& e : entries)
      if (e.pair.source == source_class) return &e;
    return nullptr;
  }

  // Transformed covariance and its target label; empty if the class is unmapped.
  std::optional<std::pair<SpdMatrix, int>> apply(const SpdMatrix& c, int source_class) const {
    const Entry* e = find_source(source_class);
    if (!e) return std::nullopt;
    detail::require_same_dim(e->transform.rows(), c.dim(), "LabelAlignmentMap::apply");
    return std::pair{SpdMatrix(detail::symmetrize(e->transform * c.matrix() * e->transform.transpose())),
                     e->pair.target};
  }
};

namespace detail {

inline std::vector<SpdMatrix> class_subset(std::span<const SpdMatrix> covs, std::span<const int> labels, int c) {
  std::vector<SpdMatrix> out;
  for (std::size_t i = 0; i < covs.size(); ++i)
    if (labels[i] == c) out.push_back(covs[i]);
  return out;
}

}  // namespace detail

inline LabelAlignmentMap fit_label_alignment(std::span<const SpdMatrix> source, std::span<const int> source_labels,
                                             std::span<const SpdMatrix> target, std::span<const int> target_labels,
                                             std::span<const ClassPair> pairs,
                                             ClassMean mean = ClassMean::Arithmetic) {
  if (source.size() != source_labels.size() || target.size() != target_labels.size()) {
    throw ShapeError("fit_label_alignment: covariance and label counts differ");
  }
  if (pairs.empty()) throw ConfigError("class_pairs", "at least one class pair is required");
  LabelAlignmentMap out;
  for (const ClassPair& p : pairs) {
    if (out.find_source(p.source)) {
      throw ConfigError("class_pairs", "source class " + std::to_string(p.source) + " is paired twice");
    }
    const auto s = detail::class_subset(source, source_labels, p.source);
    const auto t = detail::class_subset(target, target_labels, p.target);
    if (s.empty()) throw DataError("fit_label_alignment: source class " + std::to_string(p.source) + " is empty");
    if (t.empty()) throw DataError("fit_label_alignment: target class " + std::to_string(p.target) + " is empty");
    SpdMatrix rs = mean == ClassMean::Arithmetic ? arithmetic_mean(s) : frechet_mean(s);
    SpdMatrix rt = mean == ClassMean::Arithmetic ? arithmetic_mean(t) : frechet_mean(t);
    detail::require_same_dim(rs.dim(), rt.dim(), "fit_label_alignment");
    Matrix transform = sqrtm(rt) * invsqrtm(rs);
    out.entries.push_back({p, std::move(rs), std::move(rt), std::move(transform)});
  }
  return out;
}

// Per-group feature mean and standard deviation (population convention).
struct FeatureStandardizer {
  struct Stats {
    Vector mean;
    Vector stddev;
  };
  std::map<std::string, Stats> groups;
  double floor = 1e-8;
};

inline constexpr double kDefaultStdFloor = 1e-8;

// Rows of `features` are samples.
inline FeatureStandardizer::Stats feature_stats(const Matrix& features, double floor) {
  if (features.rows() == 0) throw DataError("feature_stats: empty group");
  FeatureStandardizer::Stats s;
  s.mean = features.colwise().mean().transpose();
  if (features.rows() < 2) {
    s.stddev = Vector::Constant(features.cols(), floor);
    return s;
  }
  const Matrix centered = features.rowwise() - s.mean.transpose();
  s.stddev = (centered.array().square().colwise().sum() / static_cast<double>(features.rows()))
                 .sqrt()
                 .transpose()
                 .cwiseMax(floor);
  return s;
}

inline FeatureStandardizer fit_feature_standardizer(const std::map<std::string, Matrix>& groups,
                                                    double floor = kDefaultStdFloor) {
  if (!(floor > 0.0)) throw ConfigError("floor", "must be positive");
  FeatureStandardizer out;
  out.floor = floor;
  Index width = -1;
  for (const auto& [key, features] : groups) {
    if (width >= 0) detail::require_same_dim(width, features.cols(), "fit_feature_standardizer");
    width = features.cols();
    out.groups.emplace(key, feature_stats(features, floor));
  }
  return out;
}

// Adds or replaces one group's statistics, e.g. from unlabeled target trials.
inline void refit_group(FeatureStandardizer& s, const std::string& group, const Matrix& features) {
  s.groups.insert_or_assign(group, feature_stats(features, s.floor));
}

inline Matrix apply_standardizer(const FeatureStandardizer& s, const Matrix& features, const std::string& group) {
  auto it = s.groups.find(group);
  if (it == s.groups.end()) throw DataError("apply_standardizer: unknown group '" + group + "'");
  detail::require_same_dim(it->second.mean.size(), features.cols(), "apply_standardizer");
  return (features.rowwise() - it->second.mean.transpose()).array().rowwise() /
         it->second.stddev.transpose().array();
}

// JSON records with matrices stored as base64 row-major little-endian doubles.

inline nlohmann::json to_json(const AlignmentTransform& a) {
  return {{"kind", to_string(a.kind)},
          {"scope", a.scope},
          {"dim", a.dim()},
          {"reference", codec::encode_matrix(a.reference.matrix())},
          {"transform", codec::encode_matrix(a.transform)}};
}

inline AlignmentTransform alignment_from_json(const nlohmann::json& j) {
  try {
    const auto n = j.at("dim").get<Index>();
    if (n <= 0) throw DataError("alignment record: dim must be positive");
    return {alignment_kind_from_string(j.at("kind").get<std::string>()), j.at("scope").get<std::string>(),
            SpdMatrix(codec::decode_matrix(j.at("reference").get<std::string>(), n, n)),
            codec::decode_matrix(j.at("transform").get<std::string>(), n, n)};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("alignment record: ") + e.what());
  }
}

inline nlohmann::json to_json(const LabelAlignmentMap& m) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& e : m.entries) {
    entries.push_back({{"source", e.pair.source},
                       {"target", e.pair.target},
                       {"dim", e.source_mean.dim()},
                       {"source_mean", codec::encode_matrix(e.source_mean.matrix())},
                       {"target_mean", codec::encode_matrix(e.target_mean.matrix())},
                       {"transform", codec::encode_matrix(e.transform)}});
  }
  return {{"kind", "label"}, {"pairs", entries}};
}

inline LabelAlignmentMap label_alignment_from_json(const nlohmann::json& j) {
  try {
    if (j.at("kind") != "label") throw DataError("label alignment record: wrong kind");
    LabelAlignmentMap m;
    for (const auto& e : j.at("pairs")) {
      const auto n = e.at("dim").get<Index>();
      m.entries.push_back({{e.at("source").get<int>(), e.at("target").get<int>()},
                           SpdMatrix(codec::decode_matrix(e.at("source_mean").get<std::string>(), n, n)),
                           SpdMatrix(codec::decode_matrix(e.at("target_mean").get<std::string>(), n, n)),
                           codec::decode_matrix(e.at("transform").get<std::string>(), n, n)});
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("label alignment record: ") + e.what());
  }
}

}  // namespace beetl
