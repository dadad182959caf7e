#pragma once

// End-to-end evaluation: harmonize channels, resample, estimate covariances,
// align per subject, then for every target subject run block-wise
// cross-validation over its calibration trials, vote the fold models on its
// test trials and score them by balanced accuracy.
//
// Fold models for classifier=spdnet are seeded per cell with
// cell_seed(seed, index), where cells are numbered in report order.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "beetl/alignment.hpp"
#include "beetl/bench/dataset.hpp"
#include "beetl/bench/protocol.hpp"
#include "beetl/classify.hpp"
#include "beetl/errors.hpp"
#include "beetl/signal.hpp"
#include "beetl/spd.hpp"
#include "beetl/spdnet/model.hpp"
#include "beetl/spdnet/train.hpp"

namespace beetl::bench {

inline constexpr int kReportSchemaVersion = 1;

enum class AlignmentMethod { None, Euclidean, Riemannian, LabelEuclidean };
enum class ClassifierKind { Mdrm, Tangent, SpdNet };

inline std::string to_string(AlignmentMethod m) {
  switch (m) {
    case AlignmentMethod::None: return "none";
    case AlignmentMethod::Euclidean: return "euclidean";
    case AlignmentMethod::Riemannian: return "riemannian";
    case AlignmentMethod::LabelEuclidean: return "label+euclidean";
  }
  return {};
}

inline AlignmentMethod alignment_method_from_string(const std::string& s) {
  for (auto m : {AlignmentMethod::None, AlignmentMethod::Euclidean, AlignmentMethod::Riemannian,
                 AlignmentMethod::LabelEuclidean}) {
    if (to_string(m) == s) return m;
  }
  throw ConfigError("alignment", "unknown method '" + s + "' (none, euclidean, riemannian, label+euclidean)");
}

inline std::string to_string(ClassifierKind k) {
  switch (k) {
    case ClassifierKind::Mdrm: return "mdrm";
    case ClassifierKind::Tangent: return "tangent";
    case ClassifierKind::SpdNet: return "spdnet";
  }
  return {};
}

inline ClassifierKind classifier_from_string(const std::string& s) {
  for (auto k : {ClassifierKind::Mdrm, ClassifierKind::Tangent, ClassifierKind::SpdNet})
    if (to_string(k) == s) return k;
  throw ConfigError("classifier", "unknown classifier '" + s + "' (mdrm, tangent, spdnet)");
}

struct SpdNetSettings {
  Index width1 = 16;
  Index width2 = 8;
  Index hidden = 32;
  bool deep_set = false;
  Index deep_set_embed = 8;
  spdnet::TrainConfig train;
};

struct PipelineConfig {
  std::string dataset;
  std::string channel_policy = "intersection";
  double resample_rate = 0.0;  // 0: lowest rate among the domains
  double shrinkage = kDefaultShrinkage;
  AlignmentMethod alignment = AlignmentMethod::Euclidean;
  ClassifierKind classifier = ClassifierKind::Mdrm;
  int folds = 5;
  bool use_calibration = true;
  std::vector<std::string> target_subjects;  // empty: every target subject
  std::uint64_t seed = 0;
  SpdNetSettings spdnet;

  void validate() const {
    if (channel_policy != "intersection") throw ConfigError("channel_policy", "only 'intersection' is supported");
    if (!(resample_rate >= 0.0)) throw ConfigError("resample_rate", "must be nonnegative");
    if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) throw ConfigError("shrinkage", "must lie in [0, 1]");
    if (folds < 1) throw ConfigError("cv.folds", "must be at least 1");
    if (alignment == AlignmentMethod::LabelEuclidean && !use_calibration) {
      throw ConfigError("alignment", "label alignment needs target calibration data");
    }
    if (spdnet.width1 < 1 || spdnet.width2 < 1 || spdnet.hidden < 1 || spdnet.deep_set_embed < 1) {
      throw ConfigError("spdnet", "layer widths must be positive");
    }
    spdnet.train.validate();
  }
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  const auto& t = c.spdnet.train;
  return {{"dataset", c.dataset},
          {"channel_policy", c.channel_policy},
          {"resample_rate", c.resample_rate},
          {"shrinkage", c.shrinkage},
          {"alignment", to_string(c.alignment)},
          {"classifier", to_string(c.classifier)},
          {"cv", {{"folds", c.folds}, {"use_calibration", c.use_calibration}}},
          {"target_subjects", c.target_subjects},
          {"seed", c.seed},
          {"spdnet",
           {{"width1", c.spdnet.width1},
            {"width2", c.spdnet.width2},
            {"hidden", c.spdnet.hidden},
            {"deep_set", c.spdnet.deep_set},
            {"deep_set_embed", c.spdnet.deep_set_embed},
            {"lr", t.lr},
            {"stiefel_lr", t.stiefel_lr},
            {"epochs", t.epochs},
            {"target_batch", t.target_batch},
            {"source_batch", t.source_batch},
            {"dropout", t.dropout},
            {"reeig_eps", t.reeig_eps},
            {"rbn_momentum", t.rbn_momentum},
            {"fallback_rate", t.fallback_rate},
            {"loss_weights", t.loss_weights}}}};
}

namespace impl {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& known, const std::string& prefix) {
  if (!j.is_object()) throw ConfigError(prefix.empty() ? "config" : prefix, "an object is required");
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError(prefix + key, "unknown field");
}

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& into, const std::string& prefix = {}) {
  if (!j.contains(key)) return;
  try {
    j.at(key).get_to(into);
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(prefix + key, "has the wrong type");
  }
}

}  // namespace impl

// Fields left out keep their defaults; unknown fields are rejected.
inline PipelineConfig pipeline_config_from_json(const nlohmann::json& j) {
  impl::reject_unknown(j,
                         {"dataset", "channel_policy", "resample_rate", "shrinkage", "alignment", "classifier", "cv",
                          "target_subjects", "seed", "spdnet"},
                         "");
  PipelineConfig c;
  impl::read_field(j, "dataset", c.dataset);
  impl::read_field(j, "channel_policy", c.channel_policy);
  impl::read_field(j, "resample_rate", c.resample_rate);
  impl::read_field(j, "shrinkage", c.shrinkage);
  impl::read_field(j, "target_subjects", c.target_subjects);
  impl::read_field(j, "seed", c.seed);
  std::string text;
  if (j.contains("alignment")) {
    impl::read_field(j, "alignment", text);
    c.alignment = alignment_method_from_string(text);
  }
  if (j.contains("classifier")) {
    impl::read_field(j, "classifier", text);
    c.classifier = classifier_from_string(text);
  }
  if (j.contains("cv")) {
    const auto& cv = j.at("cv");
    impl::reject_unknown(cv, {"folds", "use_calibration"}, "cv.");
    impl::read_field(cv, "folds", c.folds, "cv.");
    impl::read_field(cv, "use_calibration", c.use_calibration, "cv.");
  }
  if (j.contains("spdnet")) {
    const auto& s = j.at("spdnet");
    impl::reject_unknown(s,
                           {"width1", "width2", "hidden", "deep_set", "deep_set_embed", "lr", "stiefel_lr", "epochs", "target_batch",
                            "source_batch", "dropout", "reeig_eps", "rbn_momentum", "fallback_rate", "loss_weights"},
                           "spdnet.");
    auto& t = c.spdnet.train;
    impl::read_field(s, "width1", c.spdnet.width1, "spdnet.");
    impl::read_field(s, "width2", c.spdnet.width2, "spdnet.");
    impl::read_field(s, "hidden", c.spdnet.hidden, "spdnet.");
    impl::read_field(s, "deep_set", c.spdnet.deep_set, "spdnet.");
    impl::read_field(s, "deep_set_embed", c.spdnet.deep_set_embed, "spdnet.");
    impl::read_field(s, "lr", t.lr, "spdnet.");
    impl::read_field(s, "stiefel_lr", t.stiefel_lr, "spdnet.");
    impl::read_field(s, "epochs", t.epochs, "spdnet.");
    impl::read_field(s, "target_batch", t.target_batch, "spdnet.");
    impl::read_field(s, "source_batch", t.source_batch, "spdnet.");
    impl::read_field(s, "dropout", t.dropout, "spdnet.");
    impl::read_field(s, "reeig_eps", t.reeig_eps, "spdnet.");
    impl::read_field(s, "rbn_momentum", t.rbn_momentum, "spdnet.");
    impl::read_field(s, "fallback_rate", t.fallback_rate, "spdnet.");
    impl::read_field(s, "loss_weights", t.loss_weights, "spdnet.");
  }
  c.validate();
  return c;
}

// SplitMix64 finalizer over master + (index+1)·golden gamma.
inline std::uint64_t cell_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + (index + 1) * 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// Preprocessing

struct PreparedTrial {
  SpdMatrix cov;
  std::string domain;
  std::string subject;
  int block;
  std::optional<int> label;
  Split split;
};

struct PreparedData {
  ChannelMap channels;
  double rate = 0.0;
  std::vector<PreparedTrial> trials;
};

inline PreparedData prepare(const Dataset& ds, const PipelineConfig& cfg) {
  std::vector<ChannelMap> maps;
  double lowest = 0.0;
  for (const auto& d : ds.manifest.domains) {
    maps.push_back(d.channels);
    lowest = lowest == 0.0 ? d.rate : std::min(lowest, d.rate);
  }
  PreparedData out;
  out.channels = common_channels(maps);
  if (out.channels.size() < 2) throw DataError("prepare: fewer than two channels are shared by all domains");
  out.rate = cfg.resample_rate > 0.0 ? cfg.resample_rate : lowest;
  out.trials.reserve(ds.trials.size());
  for (std::size_t i = 0; i < ds.trials.size(); ++i) {
    const TrialRecord& r = ds.manifest.trials[i];
    Trial t = select_channels(ds.trials[i], ds.manifest.domain(r.domain).channels, out.channels);
    if (t.rate != out.rate) t = resample(t, out.rate);
    out.trials.push_back({sample_covariance(t, cfg.shrinkage).cov, r.domain, r.subject, r.block, r.label, r.split});
  }
  return out;
}

// One transform per subject, fitted on all of that subject's trials (labels
// are not used) and applied in place. Label alignment starts from the
// Euclidean stage; its class-wise stage runs inside each fold.
inline std::vector<AlignmentTransform> align_subjects(PreparedData& data, AlignmentMethod method) {
  if (method == AlignmentMethod::None) return {};
  const AlignmentKind kind = method == AlignmentMethod::Riemannian ? AlignmentKind::Riemannian : AlignmentKind::Euclidean;
  std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < data.trials.size(); ++i) members[{data.trials[i].domain, data.trials[i].subject}].push_back(i);
  std::vector<AlignmentTransform> out;
  for (const auto& [key, idx] : members) {
    std::vector<SpdMatrix> covs;
    for (auto i : idx) covs.push_back(data.trials[i].cov);
    out.push_back(fit_alignment(kind, covs, key.first + "/" + key.second));
    for (auto i : idx) data.trials[i].cov = apply_alignment(out.back(), data.trials[i].cov);
  }
  return out;
}

// Source label → target label by class name.
inline std::map<int, int> label_translation(const DatasetManifest& m, const std::string& from, const std::string& to) {
  const DomainInfo& a = m.domain(from);
  const DomainInfo& b = m.domain(to);
  std::map<int, int> out;
  for (std::size_t i = 0; i < a.classes.size(); ++i) {
    const auto it = std::find(b.classes.begin(), b.classes.end(), a.classes[i]);
    if (it != b.classes.end()) out[static_cast<int>(i)] = static_cast<int>(it - b.classes.begin());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Classifiers behind one interface

struct TrainingItem {
  SpdMatrix cov;
  std::string domain;
  std::string subject;
  int label;
};

struct FitOutput {
  std::vector<std::vector<int>> predictions;  // one vector per evaluation set
  std::vector<spdnet::LossRecord> loss_curve;
};

inline spdnet::SpdNetModel fit_spdnet(std::span<const TrainingItem> items, const DatasetManifest& manifest,
                                      const SpdNetSettings& settings, std::set<std::string> target_domains,
                                      std::uint64_t seed, spdnet::TrainResult* result = nullptr) {
  if (items.empty()) throw DataError("fit_spdnet: no training data");
  std::set<std::string> subjects;
  std::map<std::string, Index> domains;
  std::vector<spdnet::LabeledCovariance> data;
  for (const auto& it : items) {
    subjects.insert(it.subject);
    domains[it.domain] = static_cast<Index>(manifest.domain(it.domain).classes.size());
    data.push_back({it.cov, it.subject, it.domain, it.label});
  }
  spdnet::Architecture arch;
  arch.input_dim = items.front().cov.dim();
  arch.width1 = settings.width1;
  arch.width2 = settings.width2;
  arch.hidden = settings.hidden;
  arch.deep_set = settings.deep_set;
  arch.deep_set_embed = settings.deep_set_embed;
  arch.dropout = settings.train.dropout;
  arch.reeig_eps = settings.train.reeig_eps;
  arch.rbn_momentum = settings.train.rbn_momentum;
  const std::vector<std::string> subject_list(subjects.begin(), subjects.end());
  spdnet::SpdNetModel model = spdnet::SpdNetModel::create(arch, subject_list, domains, seed);
  spdnet::TrainConfig tc = settings.train;
  tc.seed = cell_seed(seed, 0);
  tc.target_domains = std::move(target_domains);
  spdnet::TrainResult r = spdnet::train(model, data, tc);
  if (result) *result = std::move(r);
  return model;
}

// Items must already carry target-domain labels for mdrm and tangent.
inline FitOutput fit_and_predict(ClassifierKind kind, std::span<const TrainingItem> items,
                                 const std::vector<std::vector<SpdMatrix>>& eval_sets, const std::string& subject,
                                 const std::string& domain, const DatasetManifest& manifest,
                                 const SpdNetSettings& settings, std::uint64_t seed) {
  FitOutput out;
  if (kind == ClassifierKind::SpdNet) {
    spdnet::TrainResult tr;
    const spdnet::SpdNetModel model = fit_spdnet(items, manifest, settings, {domain}, seed, &tr);
    out.loss_curve = std::move(tr.curve);
    for (const auto& set : eval_sets) out.predictions.push_back(spdnet::predict(model, set, subject, domain));
    return out;
  }
  std::vector<SpdMatrix> covs;
  std::vector<int> labels;
  for (const auto& it : items) {
    covs.push_back(it.cov);
    labels.push_back(it.label);
  }
  if (kind == ClassifierKind::Mdrm) {
    const MdrmModel m = fit_mdrm(covs, labels);
    for (const auto& set : eval_sets) out.predictions.push_back(predict_mdrm(m, set));
  } else {
    const TangentClassifier m = fit_tangent_classifier(covs, labels);
    for (const auto& set : eval_sets) out.predictions.push_back(predict_tangent(m, set));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Report

struct FoldResult {
  int fold = 0;
  std::vector<int> blocks;
  std::size_t train_trials = 0;
  std::size_t validation_trials = 0;
  std::optional<double> validation_balanced_accuracy;
  std::vector<int> test_predictions;
  std::vector<spdnet::LossRecord> loss_curve;
};

struct SubjectResult {
  std::string domain;
  std::string subject;
  std::vector<FoldResult> folds;
  std::vector<int> y_true;
  std::vector<int> y_pred;
  Confusion confusion;
  std::map<int, double> recall;
  double balanced_accuracy = 0.0;
};

struct TaskScore {
  std::string domain;
  double score = 0.0;  // percent
};

struct EvalReport {
  PipelineConfig config;
  std::vector<SubjectResult> subjects;
  std::vector<TaskScore> tasks;
  double leaderboard = 0.0;
};

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json subjects = nlohmann::json::array();
  for (const auto& s : r.subjects) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : s.folds) {
      folds.push_back({{"fold", f.fold},
                       {"blocks", f.blocks},
                       {"train_trials", f.train_trials},
                       {"validation_trials", f.validation_trials},
                       {"validation_balanced_accuracy",
                        f.validation_balanced_accuracy ? nlohmann::json(*f.validation_balanced_accuracy)
                                                       : nlohmann::json(nullptr)}});
    }
    nlohmann::json counts = nlohmann::json::array();
    for (Index i = 0; i < s.confusion.counts.rows(); ++i) {
      std::vector<int> row;
      for (Index j = 0; j < s.confusion.counts.cols(); ++j) row.push_back(static_cast<int>(s.confusion.counts(i, j)));
      counts.push_back(row);
    }
    nlohmann::json recall = nlohmann::json::object();
    for (const auto& [c, v] : s.recall) recall[std::to_string(c)] = v;
    subjects.push_back({{"domain", s.domain},
                        {"subject", s.subject},
                        {"test_trials", s.y_true.size()},
                        {"balanced_accuracy", s.balanced_accuracy},
                        {"per_class_recall", recall},
                        {"confusion", {{"classes", s.confusion.classes}, {"counts", counts}}},
                        {"predictions", s.y_pred},
                        {"folds", folds}});
  }
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : r.tasks) tasks.push_back({{"domain", t.domain}, {"score", t.score}});
  return {{"schema_version", kReportSchemaVersion},
          {"config", to_json(r.config)},
          {"seed", r.config.seed},
          {"subjects", subjects},
          {"tasks", tasks},
          {"leaderboard_score", r.leaderboard}};
}

// Recomputes every subject's balanced accuracy from its confusion matrix.
// Returns the largest disagreement with the recorded value.
inline double check_report(const nlohmann::json& report) {
  if (report.value("schema_version", 0) != kReportSchemaVersion) throw DataError("report: unsupported schema_version");
  double worst = 0.0;
  for (const auto& s : report.at("subjects")) {
    const auto& counts = s.at("confusion").at("counts");
    double sum = 0.0;
    int present = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
      double support = 0.0;
      for (const auto& v : counts[i]) support += v.get<double>();
      if (support > 0.0) {
        sum += counts[i][i].get<double>() / support;
        ++present;
      }
    }
    if (present == 0) throw DataError("report: empty confusion matrix");
    worst = std::max(worst, std::abs(sum / present - s.at("balanced_accuracy").get<double>()));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Pipeline

inline EvalReport run_pipeline(const Dataset& ds, const PipelineConfig& cfg) {
  cfg.validate();
  PreparedData data = prepare(ds, cfg);
  align_subjects(data, cfg.alignment);
  const DatasetManifest& manifest = ds.manifest;

  EvalReport report{cfg, {}, {}, 0.0};
  std::uint64_t cell = 0;
  for (const DomainInfo& target : manifest.domains) {
    if (!target.target) continue;
    std::vector<double> scores;
    for (const std::string& subject : target.subjects) {
      if (!cfg.target_subjects.empty() &&
          std::find(cfg.target_subjects.begin(), cfg.target_subjects.end(), subject) == cfg.target_subjects.end()) {
        continue;
      }
      SubjectResult sr{target.id, subject, {}, {}, {}, {}, {}, 0.0};
      std::vector<std::size_t> calibration, test;
      for (std::size_t i = 0; i < data.trials.size(); ++i) {
        const auto& t = data.trials[i];
        if (t.domain != target.id || t.subject != subject) continue;
        if (t.split == Split::Calibration) calibration.push_back(i);
        if (t.split == Split::Test) test.push_back(i);
      }
      if (test.empty()) throw DataError("run_pipeline: subject " + subject + " has no test trials");
      std::vector<SpdMatrix> test_covs;
      for (auto i : test) {
        if (!data.trials[i].label) throw DataError("run_pipeline: test trials need labels for scoring");
        test_covs.push_back(data.trials[i].cov);
        sr.y_true.push_back(*data.trials[i].label);
      }

      FoldSpec spec;
      if (cfg.use_calibration) {
        std::vector<int> blocks;
        for (auto i : calibration) blocks.push_back(data.trials[i].block);
        spec = blockwise_folds(blocks, cfg.folds);
      } else {
        spec.folds.emplace_back();
      }

      std::vector<std::vector<int>> votes;
      for (std::size_t f = 0; f < spec.folds.size(); ++f, ++cell) {
        FoldResult fr;
        fr.fold = static_cast<int>(f);
        fr.blocks = spec.folds[f];
        std::vector<TrainingItem> target_train;
        std::vector<SpdMatrix> validation;
        std::vector<int> validation_labels;
        if (cfg.use_calibration) {
          for (auto i : calibration) {
            const auto& t = data.trials[i];
            if (spec.folds.size() > 1 && spec.fold_of(t.block) == static_cast<int>(f)) {
              validation.push_back(t.cov);
              validation_labels.push_back(*t.label);
            } else {
              target_train.push_back({t.cov, t.domain, t.subject, *t.label});
            }
          }
        }

        std::vector<TrainingItem> items = target_train;
        std::map<std::string, std::vector<std::size_t>> sources;
        for (std::size_t i = 0; i < data.trials.size(); ++i)
          if (data.trials[i].split == Split::Source) sources[data.trials[i].domain].push_back(i);
        for (const auto& [domain, idx] : sources) {
          const std::map<int, int> to_target = label_translation(manifest, domain, target.id);
          std::optional<LabelAlignmentMap> la;
          if (cfg.alignment == AlignmentMethod::LabelEuclidean) {
            std::vector<SpdMatrix> src, tgt;
            std::vector<int> src_labels, tgt_labels;
            for (auto i : idx) {
              const auto it = to_target.find(*data.trials[i].label);
              if (it == to_target.end()) continue;
              src.push_back(data.trials[i].cov);
              src_labels.push_back(it->second);
            }
            for (const auto& t : target_train) {
              tgt.push_back(t.cov);
              tgt_labels.push_back(t.label);
            }
            std::vector<ClassPair> pairs;
            const std::set<int> have_src(src_labels.begin(), src_labels.end());
            for (int c : std::set<int>(tgt_labels.begin(), tgt_labels.end()))
              if (have_src.contains(c)) pairs.push_back({c, c});
            if (pairs.empty()) throw DataError("run_pipeline: no class is shared with domain " + domain);
            la = fit_label_alignment(src, src_labels, tgt, tgt_labels, pairs);
          }
          for (auto i : idx) {
            const auto& t = data.trials[i];
            const auto mapped = to_target.find(*t.label);
            SpdMatrix cov = t.cov;
            if (la) {
              if (mapped == to_target.end()) continue;
              auto moved = la->apply(cov, mapped->second);
              if (!moved) continue;
              cov = std::move(moved->first);
            }
            if (cfg.classifier == ClassifierKind::SpdNet) {
              items.push_back({std::move(cov), t.domain, t.subject, *t.label});
            } else if (mapped != to_target.end()) {
              items.push_back({std::move(cov), t.domain, t.subject, mapped->second});
            }
          }
        }
        fr.train_trials = items.size();
        fr.validation_trials = validation.size();

        std::vector<std::vector<SpdMatrix>> eval_sets{test_covs};
        if (!validation.empty()) eval_sets.push_back(validation);
        FitOutput fit = fit_and_predict(cfg.classifier, items, eval_sets, subject, target.id, manifest, cfg.spdnet,
                                        cell_seed(cfg.seed, cell));
        fr.test_predictions = fit.predictions[0];
        if (!validation.empty()) fr.validation_balanced_accuracy = balanced_accuracy(validation_labels, fit.predictions[1]);
        fr.loss_curve = std::move(fit.loss_curve);
        votes.push_back(fr.test_predictions);
        sr.folds.push_back(std::move(fr));
      }

      sr.y_pred = majority_vote(votes);
      sr.confusion = confusion_matrix(sr.y_true, sr.y_pred);
      sr.recall = per_class_recall(sr.confusion);
      sr.balanced_accuracy = balanced_accuracy(sr.y_true, sr.y_pred);
      scores.push_back(sr.balanced_accuracy);
      report.subjects.push_back(std::move(sr));
    }
    if (!scores.empty()) {
      double mean = 0.0;
      for (double s : scores) mean += s;
      report.tasks.push_back({target.id, 100.0 * mean / static_cast<double>(scores.size())});
    }
  }
  if (report.subjects.empty()) throw DataError("run_pipeline: no target subject to evaluate");
  std::vector<double> task_scores;
  for (const auto& t : report.tasks) task_scores.push_back(t.score);
  report.leaderboard = leaderboard_score(task_scores);
  return report;
}

inline EvalReport run_pipeline(const PipelineConfig& cfg) {
  if (cfg.dataset.empty()) throw ConfigError("dataset", "a dataset path is required");
  return run_pipeline(load_dataset(cfg.dataset), cfg);
}

}  // namespace beetl::bench
