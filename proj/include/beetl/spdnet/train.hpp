#pragma once

// Multi-task training: every step draws one mini-batch per domain and
// minimizes the weighted sum of per-domain cross-entropies.
//
// Euclidean parameters use Adam. BiMap weights take a projected gradient step
// followed by QR retraction; RBN biases step along the affine-invariant
// exponential map. Both manifold updates are plain SGD at the same rate.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "beetl/errors.hpp"
#include "beetl/spd.hpp"
#include "beetl/spdnet/layers.hpp"
#include "beetl/spdnet/model.hpp"

namespace beetl::spdnet {

struct LabeledCovariance {
  SpdMatrix cov;
  std::string subject;
  std::string domain;
  int label;
};

struct TrainConfig {
  double lr = 1e-3;          // Adam, Euclidean parameters and the RBN bias
  double stiefel_lr = 0.1;   // plain SGD on BiMap weights
  int epochs = 20;
  int target_batch = 16;
  int source_batch = 64;
  std::set<std::string> target_domains;
  std::map<std::string, double> loss_weights;  // missing domains weigh 1
  double dropout = 0.5;
  double reeig_eps = 1e-4;
  double rbn_momentum = 0.9;
  double fallback_rate = 0.1;  // share of trials routed through the fallback front-end
  std::uint64_t seed = 0;

  double weight(const std::string& domain) const {
    const auto it = loss_weights.find(domain);
    return it == loss_weights.end() ? 1.0 : it->second;
  }

  void validate() const {
    if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("lr", "must be a finite nonnegative number");
    if (!(stiefel_lr >= 0.0) || !std::isfinite(stiefel_lr)) {
      throw ConfigError("stiefel_lr", "must be a finite nonnegative number");
    }
    if (epochs < 0) throw ConfigError("epochs", "must be nonnegative");
    if (target_batch < 1) throw ConfigError("target_batch", "must be positive");
    if (source_batch < 1) throw ConfigError("source_batch", "must be positive");
    for (const auto& [d, w] : loss_weights)
      if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss_weights", "weight of '" + d + "' must be >= 0");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout", "must lie in [0, 1)");
    if (!(reeig_eps > 0.0)) throw ConfigError("reeig_eps", "must be positive");
    if (!(rbn_momentum > 0.0 && rbn_momentum < 1.0)) throw ConfigError("rbn_momentum", "must lie in (0, 1)");
    if (!(fallback_rate >= 0.0 && fallback_rate < 1.0)) throw ConfigError("fallback_rate", "must lie in [0, 1)");
  }
};

struct LossRecord {
  int epoch;
  long step;
  std::string domain;
  double loss;
};

struct TrainResult {
  std::vector<LossRecord> curve;
  double max_stiefel_defect = 0.0;
  long steps = 0;
};

inline void write_loss_csv(std::ostream& os, std::span<const LossRecord> curve) {
  os << "epoch,step,domain,loss\n" << std::setprecision(17);
  for (const auto& r : curve) os << r.epoch << ',' << r.step << ',' << r.domain << ',' << r.loss << '\n';
}

class Optimizer {
 public:
  Optimizer(AdamOptions adam, double stiefel_lr) : adam_(adam), stiefel_lr_(stiefel_lr) {}

  void step(SpdNetModel& model, const Gradients& grads) {
    ++t_;
    model.visit_parameters([&](const std::string& name, Matrix& p, ParamKind kind) {
      const auto g = grads.find(name);
      switch (kind) {
        case ParamKind::Euclidean:
          adam_step(p, g == grads.end() ? Matrix::Zero(p.rows(), p.cols()) : g->second, slots_[name], adam_, t_);
          break;
        case ParamKind::Stiefel:
          if (g != grads.end()) p = qr_retraction(p - stiefel_lr_ * stiefel_project(p, g->second));
          break;
        case ParamKind::Spd:
          if (g != grads.end()) {
            const Matrix riemannian = p * detail::symmetrize(g->second) * p;
            p = exp_map(SpdMatrix(p), TangentVector(SpdMatrix(p), -adam_.lr * riemannian)).matrix();
          }
          break;
        case ParamKind::Buffer:
          break;
      }
    });
  }

 private:
  AdamOptions adam_;
  double stiefel_lr_;
  long t_ = 0;
  std::map<std::string, AdamSlot> slots_;
};

namespace impl {

// Per-domain cycling through a shuffled order, reshuffled after each pass.
class DomainSampler {
 public:
  DomainSampler(std::vector<std::size_t> items, std::size_t batch) : items_(std::move(items)), batch_(batch) {}

  std::size_t steps_per_pass() const { return (items_.size() + batch_ - 1) / batch_; }

  std::vector<std::size_t> next(Rng& rng) {
    const std::size_t take = std::min(batch_, items_.size());
    std::vector<std::size_t> out;
    out.reserve(take);
    while (out.size() < take) {
      if (cursor_ == 0) std::shuffle(items_.begin(), items_.end(), rng);
      out.push_back(items_[cursor_]);
      cursor_ = (cursor_ + 1) % items_.size();
    }
    return out;
  }

 private:
  std::vector<std::size_t> items_;
  std::size_t batch_;
  std::size_t cursor_ = 0;
};

}  // namespace impl

// One epoch is enough steps for the largest domain to be seen once.
inline TrainResult train(SpdNetModel& model, std::span<const LabeledCovariance> data, const TrainConfig& cfg) {
  cfg.validate();
  if (data.empty()) throw DataError("train: no training data");
  std::map<std::string, std::vector<std::size_t>> by_domain;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& d = data[i];
    const Index classes = model.classes(d.domain);
    if (d.label < 0 || d.label >= classes) {
      throw DataError("train: label " + std::to_string(d.label) + " outside domain '" + d.domain + "'");
    }
    if (!model.knows_subject(d.subject)) throw DataError("train: no front-end for subject '" + d.subject + "'");
    detail::require_same_dim(model.arch.input_dim, d.cov.dim(), "train");
    by_domain[d.domain].push_back(i);
  }
  for (const auto& [d, w] : cfg.loss_weights)
    if (!by_domain.contains(d)) throw DataError("train: domain '" + d + "' has no training data");

  model.arch.dropout = cfg.dropout;
  model.arch.reeig_eps = cfg.reeig_eps;
  model.arch.rbn_momentum = cfg.rbn_momentum;
  model.reeig.eps = cfg.reeig_eps;
  model.rbn1.momentum = model.rbn2.momentum = cfg.rbn_momentum;

  std::vector<std::pair<std::string, impl::DomainSampler>> samplers;
  std::size_t steps_per_epoch = 0;
  for (auto& [d, idx] : by_domain) {
    const int b = cfg.target_domains.contains(d) ? cfg.target_batch : cfg.source_batch;
    samplers.emplace_back(d, impl::DomainSampler(idx, static_cast<std::size_t>(b)));
    steps_per_epoch = std::max(steps_per_epoch, samplers.back().second.steps_per_pass());
  }

  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Optimizer opt(AdamOptions{cfg.lr}, cfg.stiefel_lr);
  TrainResult result;
  result.max_stiefel_defect = model.max_stiefel_defect();
  ForwardCache cache;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < steps_per_epoch; ++s, ++result.steps) {
      std::vector<Input> batch;
      std::vector<int> labels;
      std::vector<std::pair<std::size_t, std::size_t>> spans;  // [begin, end) per sampler
      for (auto& [d, sampler] : samplers) {
        const std::size_t begin = batch.size();
        for (std::size_t i : sampler.next(rng)) {
          const auto& x = data[i];
          const bool fallback = unit(rng) < cfg.fallback_rate;
          batch.push_back({&x.cov.matrix(), fallback ? kFallbackSubject : x.subject, x.subject, x.domain});
          labels.push_back(x.label);
        }
        spans.emplace_back(begin, batch.size());
      }
      const std::vector<Vector> logits = model.forward(batch, Mode::Train, &cache, &rng);
      std::vector<Vector> grad(batch.size());
      for (std::size_t k = 0; k < samplers.size(); ++k) {
        const std::string& d = samplers[k].first;
        const auto [begin, end] = spans[k];
        const double n = static_cast<double>(end - begin);
        const double w = cfg.weight(d);
        double loss = 0.0;
        for (std::size_t i = begin; i < end; ++i) {
          const Vector& z = logits[i];
          const double mx = z.maxCoeff();
          const Vector e = (z.array() - mx).exp();
          const double sum = e.sum();
          const int label = labels[i];
          loss += mx + std::log(sum) - z(label);
          grad[i] = e / sum;
          grad[i](label) -= 1.0;
          grad[i] *= w / n;
        }
        loss /= n;
        if (!std::isfinite(loss)) {
          throw NumericalError("train: non-finite loss for domain '" + d + "' at step " + std::to_string(result.steps));
        }
        result.curve.push_back({epoch, result.steps, d, loss});
      }
      const Gradients g = model.backward(cache, grad);
      model.update_running_stats(cache);
      opt.step(model, g);
      result.max_stiefel_defect = std::max(result.max_stiefel_defect, model.max_stiefel_defect());
    }
  }
  return result;
}

}  // namespace beetl::spdnet
