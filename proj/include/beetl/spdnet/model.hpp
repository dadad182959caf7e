#pragma once

// Multi-subject, multi-domain SPD network.
//
//   cov ─► front BiMap (per subject) ─► RBN ─► ReEig ─► BiMap ─► RBN ─► ReEig
//       ─► LogEig ─► [Deep-Set over each subject's trials] ─► ⊕ subject embedding
//       ─► FC ─► ReLU ─► dropout ─► per-domain linear head ─► logits
//
// Subjects without a front-end of their own are routed through the shared
// fallback entry (kFallbackSubject) for both front-end and embedding.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "beetl/classify.hpp"
#include "beetl/errors.hpp"
#include "beetl/spd.hpp"
#include "beetl/spdnet/layers.hpp"

namespace beetl::spdnet {

inline constexpr Index kSubjectEmbeddingDim = 15;
inline const std::string kFallbackSubject = "*";

struct Architecture {
  Index input_dim = 0;
  Index width1 = 16;
  Index width2 = 8;
  Index hidden = 32;
  bool deep_set = false;
  Index deep_set_embed = 8;
  double reeig_eps = 1e-4;
  double rbn_momentum = 0.9;
  double dropout = 0.5;

  Index feature_dim() const { return tangent_dim(width2); }
};

enum class ParamKind { Euclidean, Stiefel, Spd, Buffer };

using Gradients = std::map<std::string, Matrix>;

inline void accumulate(Gradients& g, const std::string& name, const Matrix& value) {
  auto [it, inserted] = g.try_emplace(name, value);
  if (!inserted) it->second += value;
}

struct Input {
  const Matrix* cov;
  std::string route;   // front-end and embedding key
  std::string group;   // Deep-Set set membership
  std::string domain;
};

struct ForwardCache {
  Mode mode = Mode::Eval;
  std::vector<Input> inputs;
  std::vector<Matrix> front_out;
  RbnLayer::Cache rbn1;
  std::vector<Matrix> rbn1_out;
  std::vector<EigenFactorization> reeig1;
  std::vector<Matrix> rect1;
  std::vector<Matrix> act1;
  RbnLayer::Cache rbn2;
  std::vector<Matrix> rbn2_out;
  std::vector<EigenFactorization> reeig2;
  std::vector<EigenFactorization> logeig;
  std::vector<std::pair<std::vector<Index>, DeepSetAlignLayer::Cache>> sets;
  Matrix fc_in;
  Matrix fc_pre;
  Matrix mask;
  Matrix hidden;
};

class SpdNetModel {
 public:
  Architecture arch;
  std::map<std::string, BiMapLayer> fronts;
  RbnLayer rbn1;
  ReEigLayer reeig;
  BiMapLayer bimap;
  RbnLayer rbn2;
  std::optional<DeepSetAlignLayer> deep_set;
  std::map<std::string, Matrix> embeddings;
  LinearLayer fc1;
  std::map<std::string, LinearLayer> heads;

  // Widths are clamped so the BiMap chain never widens. Every front-end
  // (fallback included) starts from the same semi-orthogonal matrix.
  static SpdNetModel create(Architecture arch, std::span<const std::string> subjects,
                            const std::map<std::string, Index>& domain_classes, std::uint64_t seed) {
    if (arch.input_dim < 1) throw ConfigError("input_dim", "must be positive");
    if (arch.width1 < 1 || arch.width2 < 1 || arch.hidden < 1 || arch.deep_set_embed < 1) {
      throw ConfigError("architecture", "layer widths must be positive");
    }
    if (!(arch.dropout >= 0.0 && arch.dropout < 1.0)) throw ConfigError("dropout", "must lie in [0, 1)");
    if (!(arch.reeig_eps > 0.0)) throw ConfigError("reeig_eps", "must be positive");
    if (!(arch.rbn_momentum > 0.0 && arch.rbn_momentum < 1.0)) throw ConfigError("rbn_momentum", "must lie in (0, 1)");
    if (subjects.empty()) throw ConfigError("subjects", "at least one subject is required");
    if (domain_classes.empty()) throw ConfigError("domains", "at least one domain is required");
    arch.width1 = std::min(arch.width1, arch.input_dim);
    arch.width2 = std::min(arch.width2, arch.width1);

    Rng rng(seed);
    SpdNetModel m;
    m.arch = arch;
    const BiMapLayer front = BiMapLayer::random(arch.input_dim, arch.width1, rng);
    std::vector<std::string> keys(subjects.begin(), subjects.end());
    std::sort(keys.begin(), keys.end());
    for (const auto& s : keys) {
      check_id(s, "subject");
      if (!m.fronts.emplace(s, front).second) throw ConfigError("subjects", "duplicate subject '" + s + "'");
    }
    keys.push_back(kFallbackSubject);
    m.fronts.emplace(kFallbackSubject, front);
    m.rbn1 = RbnLayer::identity(arch.width1, arch.rbn_momentum);
    m.reeig = ReEigLayer{arch.reeig_eps};
    m.bimap = BiMapLayer::random(arch.width1, arch.width2, rng);
    m.rbn2 = RbnLayer::identity(arch.width2, arch.rbn_momentum);
    if (arch.deep_set) m.deep_set = DeepSetAlignLayer::random(arch.feature_dim(), arch.deep_set_embed, rng);
    for (const auto& s : keys) m.embeddings.emplace(s, gaussian_matrix(rng, kSubjectEmbeddingDim, 1, 0.1));
    m.fc1 = LinearLayer::random(arch.feature_dim() + kSubjectEmbeddingDim, arch.hidden, rng);
    for (const auto& [d, classes] : domain_classes) {
      check_id(d, "domain");
      if (classes < 1) throw ConfigError("domains", "domain '" + d + "' needs at least one class");
      m.heads.emplace(d, LinearLayer::random(arch.hidden, classes, rng));
    }
    return m;
  }

  bool knows_subject(const std::string& s) const { return fronts.contains(s); }
  std::string route_for(const std::string& s) const { return knows_subject(s) ? s : kFallbackSubject; }

  Index classes(const std::string& domain) const {
    const auto it = heads.find(domain);
    if (it == heads.end()) throw DataError("unknown domain '" + domain + "'");
    return it->second.out_dim();
  }

  // f(name, matrix, kind) over every parameter and buffer, in a fixed order.
  template <class F>
  void visit_parameters(F&& f) {
    visit_impl(*this, f);
  }
  template <class F>
  void visit_parameters(F&& f) const {
    visit_impl(*this, f);
  }

  std::vector<Vector> forward(std::span<const Input> batch, Mode mode, ForwardCache* cache = nullptr,
                              Rng* dropout_rng = nullptr) const {
    if (batch.empty()) throw DataError("model_forward: empty batch");
    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c = ForwardCache{};
    c.mode = mode;
    c.inputs.assign(batch.begin(), batch.end());
    const auto n = batch.size();
    const auto cols = static_cast<Index>(n);

    for (const auto& in : batch) {
      if (!heads.contains(in.domain)) throw DataError("unknown domain '" + in.domain + "'");
      const auto front = fronts.find(in.route);
      if (front == fronts.end()) throw DataError("no front-end for subject '" + in.route + "'");
      c.front_out.push_back(front->second.forward(*in.cov));
    }
    c.rbn1_out = rbn1.forward(c.front_out, mode, &c.rbn1);
    c.reeig1.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      c.rect1.push_back(reeig.forward(c.rbn1_out[i], &c.reeig1[i]));
      c.act1.push_back(bimap.forward(c.rect1.back()));
    }
    c.rbn2_out = rbn2.forward(c.act1, mode, &c.rbn2);
    c.reeig2.resize(n);
    c.logeig.resize(n);
    Matrix features(arch.feature_dim(), cols);
    for (std::size_t i = 0; i < n; ++i) {
      const auto col = static_cast<Index>(i);
      features.col(col) = logeig_forward(reeig.forward(c.rbn2_out[i], &c.reeig2[i]), &c.logeig[i]);
    }

    if (deep_set) {
      std::map<std::string, std::vector<Index>> members;
      for (std::size_t i = 0; i < n; ++i) members[batch[i].group].push_back(static_cast<Index>(i));
      Matrix aligned(features.rows(), cols);
      for (auto& [group, idx] : members) {
        Matrix set(features.rows(), static_cast<Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) set.col(static_cast<Index>(k)) = features.col(idx[k]);
        DeepSetAlignLayer::Cache dc;
        const Matrix out = deep_set->forward(set, &dc);
        for (std::size_t k = 0; k < idx.size(); ++k) aligned.col(idx[k]) = out.col(static_cast<Index>(k));
        c.sets.emplace_back(std::move(idx), std::move(dc));
      }
      features = std::move(aligned);
    }

    c.fc_in.resize(arch.feature_dim() + kSubjectEmbeddingDim, cols);
    c.fc_in.topRows(arch.feature_dim()) = features;
    for (std::size_t i = 0; i < n; ++i) {
      const auto e = embeddings.find(batch[i].route);
      if (e == embeddings.end()) throw DataError("no embedding for subject '" + batch[i].route + "'");
      c.fc_in.bottomRows(kSubjectEmbeddingDim).col(static_cast<Index>(i)) = e->second;
    }
    c.fc_pre = fc1.forward(c.fc_in);
    c.mask = Matrix::Ones(arch.hidden, cols);
    if (mode == Mode::Train && arch.dropout > 0.0) {
      if (!dropout_rng) throw ConfigError("dropout", "training forward needs a random generator");
      std::bernoulli_distribution keep(1.0 - arch.dropout);
      for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < arch.hidden; ++i) c.mask(i, j) = keep(*dropout_rng) ? 1.0 / (1.0 - arch.dropout) : 0.0;
    }
    c.hidden = c.fc_pre.cwiseMax(0.0).cwiseProduct(c.mask);

    std::vector<Vector> logits;
    logits.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      const LinearLayer& head = heads.at(batch[i].domain);
      logits.push_back(head.weight * c.hidden.col(static_cast<Index>(i)) + head.bias.col(0));
    }
    return logits;
  }

  Gradients backward(const ForwardCache& c, std::span<const Vector> grad_logits) const {
    const auto n = c.inputs.size();
    detail::require_same_dim(static_cast<Index>(n), static_cast<Index>(grad_logits.size()), "model_backward");
    Gradients g;
    Matrix grad_hidden(arch.hidden, static_cast<Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
      const auto col = static_cast<Index>(i);
      const std::string& d = c.inputs[i].domain;
      const LinearLayer& head = heads.at(d);
      accumulate(g, "head/" + d + "/weight", grad_logits[i] * c.hidden.col(col).transpose());
      accumulate(g, "head/" + d + "/bias", grad_logits[i]);
      grad_hidden.col(col) = head.weight.transpose() * grad_logits[i];
    }
    const Matrix grad_pre =
        grad_hidden.cwiseProduct(c.mask).cwiseProduct((c.fc_pre.array() > 0.0).cast<double>().matrix());
    const LinearLayer::Grad fc = fc1.backward(c.fc_in, grad_pre);
    accumulate(g, "fc1/weight", fc.weight);
    accumulate(g, "fc1/bias", fc.bias);
    for (std::size_t i = 0; i < n; ++i) {
      accumulate(g, "embedding/" + c.inputs[i].route,
                 fc.input.bottomRows(kSubjectEmbeddingDim).col(static_cast<Index>(i)));
    }

    Matrix grad_features = fc.input.topRows(arch.feature_dim());
    if (deep_set) {
      Matrix through(grad_features.rows(), grad_features.cols());
      for (const auto& [idx, dc] : c.sets) {
        Matrix upstream(grad_features.rows(), static_cast<Index>(idx.size()));
        for (std::size_t k = 0; k < idx.size(); ++k) upstream.col(static_cast<Index>(k)) = grad_features.col(idx[k]);
        const DeepSetAlignLayer::Grad dg = deep_set->backward(dc, upstream);
        accumulate(g, "deepset/gamma/weight", dg.gamma.weight);
        accumulate(g, "deepset/gamma/bias", dg.gamma.bias);
        accumulate(g, "deepset/lambda/weight", dg.lambda.weight);
        accumulate(g, "deepset/lambda/bias", dg.lambda.bias);
        for (std::size_t k = 0; k < idx.size(); ++k) through.col(idx[k]) = dg.input.col(static_cast<Index>(k));
      }
      grad_features = std::move(through);
    }

    std::vector<Matrix> grad(n);
    for (std::size_t i = 0; i < n; ++i) {
      grad[i] = reeig.backward(c.reeig2[i], logeig_backward(c.logeig[i], grad_features.col(static_cast<Index>(i))));
    }
    RbnLayer::Grad r2 = rbn2.backward(c.rbn2, grad);
    accumulate(g, "rbn2/bias", r2.bias);
    for (std::size_t i = 0; i < n; ++i) {
      const BiMapLayer::Grad bg = bimap.backward(c.rect1[i], r2.inputs[i]);
      accumulate(g, "trunk/bimap/weight", bg.weight);
      grad[i] = reeig.backward(c.reeig1[i], bg.input);
    }
    const RbnLayer::Grad r1 = rbn1.backward(c.rbn1, grad);
    accumulate(g, "rbn1/bias", r1.bias);
    for (std::size_t i = 0; i < n; ++i) {
      const std::string& route = c.inputs[i].route;
      accumulate(g, "front/" + route + "/weight", fronts.at(route).backward(*c.inputs[i].cov, r1.inputs[i]).weight);
    }
    return g;
  }

  // Running means follow the batch means seen in training mode.
  void update_running_stats(const ForwardCache& c) {
    if (c.mode != Mode::Train) return;
    rbn1.update_running_mean(c.rbn1.batch_mean);
    rbn2.update_running_mean(c.rbn2.batch_mean);
  }

  double max_stiefel_defect() const {
    double worst = stiefel_defect(bimap.weight);
    for (const auto& [s, f] : fronts) worst = std::max(worst, stiefel_defect(f.weight));
    return worst;
  }

 private:
  static void check_id(const std::string& id, const char* what) {
    if (id.empty() || id.find('/') != std::string::npos || id == kFallbackSubject) {
      throw ConfigError(what, "invalid identifier '" + id + "'");
    }
  }

  template <class Self, class F>
  static void visit_impl(Self& m, F& f) {
    for (auto& [s, layer] : m.fronts) f("front/" + s + "/weight", layer.weight, ParamKind::Stiefel);
    f(std::string("rbn1/bias"), m.rbn1.bias, ParamKind::Spd);
    f(std::string("rbn1/running_mean"), m.rbn1.running_mean, ParamKind::Buffer);
    f(std::string("trunk/bimap/weight"), m.bimap.weight, ParamKind::Stiefel);
    f(std::string("rbn2/bias"), m.rbn2.bias, ParamKind::Spd);
    f(std::string("rbn2/running_mean"), m.rbn2.running_mean, ParamKind::Buffer);
    if (m.deep_set) {
      f(std::string("deepset/gamma/weight"), m.deep_set->gamma.weight, ParamKind::Euclidean);
      f(std::string("deepset/gamma/bias"), m.deep_set->gamma.bias, ParamKind::Euclidean);
      f(std::string("deepset/lambda/weight"), m.deep_set->lambda.weight, ParamKind::Euclidean);
      f(std::string("deepset/lambda/bias"), m.deep_set->lambda.bias, ParamKind::Euclidean);
    }
    for (auto& [s, e] : m.embeddings) f("embedding/" + s, e, ParamKind::Euclidean);
    f(std::string("fc1/weight"), m.fc1.weight, ParamKind::Euclidean);
    f(std::string("fc1/bias"), m.fc1.bias, ParamKind::Euclidean);
    for (auto& [d, head] : m.heads) {
      f("head/" + d + "/weight", head.weight, ParamKind::Euclidean);
      f("head/" + d + "/bias", head.bias, ParamKind::Euclidean);
    }
  }
};

// Eval-mode logits for one trial.
inline Vector model_forward(const SpdNetModel& m, const SpdMatrix& cov, const std::string& subject,
                            const std::string& domain) {
  const Input in{&cov.matrix(), m.route_for(subject), subject, domain};
  return m.forward(std::span(&in, 1), Mode::Eval).front();
}

// Eval-mode class indices for a set of trials from one subject. With the
// Deep-Set layer enabled the whole set is summarized together.
inline std::vector<int> predict(const SpdNetModel& m, std::span<const SpdMatrix> covs, const std::string& subject,
                                const std::string& domain) {
  if (covs.empty()) return {};
  std::vector<Input> batch;
  batch.reserve(covs.size());
  const std::string route = m.route_for(subject);
  for (const auto& c : covs) batch.push_back({&c.matrix(), route, subject, domain});
  std::vector<int> out;
  out.reserve(covs.size());
  for (const auto& z : m.forward(batch, Mode::Eval)) out.push_back(detail::argmax(z));
  return out;
}

}  // namespace beetl::spdnet
