#pragma once

// Synthetic multi-domain EEG-like data with controlled covariate shift.
//
// Signals live in a canonical channel space (the union of all domain
// montages). Class c has prototype covariance C_c = I + s·B_c B_cᵀ with B_c
// a random n×r matrix scaled by 1/√r; subject u has mixing matrix
// A_u = I + σ_s·S_u with S_u symmetric Gaussian scaled by 1/√n. A trial of
// class c from subject u is Gaussian with covariance A_u C_c A_uᵀ, plus
// optional isotropic noise, restricted to the domain's channels.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "beetl/bench/dataset.hpp"
#include "beetl/errors.hpp"
#include "beetl/signal.hpp"
#include "beetl/spd.hpp"

namespace beetl::bench {

struct SyntheticDomain {
  std::string id;
  std::vector<std::string> channels;
  double rate = 128.0;
  int samples = 256;
  int subjects = 1;
  bool target = false;
};

struct SyntheticConfig {
  int classes = 3;
  std::vector<SyntheticDomain> domains;
  int trials_per_class = 40;
  int trials_per_block = 6;
  double subject_shift = 0.4;
  double class_separation = 1.0;
  int class_rank = 2;
  double noise = 0.0;
  double calibration_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const {
    if (classes < 2) throw ConfigError("classes", "at least two classes are required");
    if (domains.empty()) throw ConfigError("domains", "at least one domain is required");
    for (const auto& d : domains) {
      if (d.id.empty() || d.id.find('/') != std::string::npos) throw ConfigError("domains.id", "invalid id '" + d.id + "'");
      if (d.channels.empty()) throw ConfigError("domains.channels", "domain " + d.id + " has no channels");
      ChannelMap check(d.channels);
      if (!(d.rate > 0.0)) throw ConfigError("domains.rate", "must be positive");
      if (d.samples < 2) throw ConfigError("domains.samples", "must be at least 2");
      if (d.subjects < 1) throw ConfigError("domains.subjects", "must be positive");
    }
    if (trials_per_class < 1) throw ConfigError("trials_per_class", "must be positive");
    if (trials_per_block < 1) throw ConfigError("trials_per_block", "must be positive");
    if (!(subject_shift >= 0.0)) throw ConfigError("subject_shift", "must be nonnegative");
    if (!(class_separation > 0.0)) throw ConfigError("class_separation", "must be positive");
    if (class_rank < 1) throw ConfigError("class_rank", "must be positive");
    if (!(noise >= 0.0)) throw ConfigError("noise", "must be nonnegative");
    if (!(calibration_fraction > 0.0 && calibration_fraction < 1.0)) {
      throw ConfigError("calibration_fraction", "must lie in (0, 1)");
    }
  }
};

inline nlohmann::json to_json(const SyntheticConfig& c) {
  nlohmann::json domains = nlohmann::json::array();
  for (const auto& d : c.domains) {
    domains.push_back({{"id", d.id},
                       {"channels", d.channels},
                       {"rate", d.rate},
                       {"samples", d.samples},
                       {"subjects", d.subjects},
                       {"role", d.target ? "target" : "source"}});
  }
  return {{"classes", c.classes},
          {"domains", domains},
          {"trials_per_class", c.trials_per_class},
          {"trials_per_block", c.trials_per_block},
          {"subject_shift", c.subject_shift},
          {"class_separation", c.class_separation},
          {"class_rank", c.class_rank},
          {"noise", c.noise},
          {"calibration_fraction", c.calibration_fraction},
          {"seed", c.seed}};
}

inline SyntheticConfig synthetic_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"classes",          "domains", "trials_per_class", "trials_per_block",
                                           "subject_shift",    "class_separation", "class_rank", "noise",
                                           "calibration_fraction", "seed"};
  for (const auto& [key, value] : j.items())
    if (!known.contains(key)) throw ConfigError(key, "unknown field");
  SyntheticConfig c;
  auto read = [&j](const char* key, auto& into) {
    if (!j.contains(key)) return;
    try {
      j.at(key).get_to(into);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(key, "has the wrong type");
    }
  };
  read("classes", c.classes);
  read("trials_per_class", c.trials_per_class);
  read("trials_per_block", c.trials_per_block);
  read("subject_shift", c.subject_shift);
  read("class_separation", c.class_separation);
  read("class_rank", c.class_rank);
  read("noise", c.noise);
  read("calibration_fraction", c.calibration_fraction);
  read("seed", c.seed);
  if (!j.contains("domains") || !j.at("domains").is_array()) throw ConfigError("domains", "an array is required");
  for (const auto& d : j.at("domains")) {
    SyntheticDomain sd;
    try {
      sd.id = d.at("id").get<std::string>();
      sd.channels = d.at("channels").get<std::vector<std::string>>();
      sd.rate = d.value("rate", sd.rate);
      sd.samples = d.value("samples", sd.samples);
      sd.subjects = d.value("subjects", sd.subjects);
      const std::string role = d.value("role", "source");
      if (role != "source" && role != "target") throw ConfigError("domains.role", "must be source or target");
      sd.target = role == "target";
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("domains", e.what());
    }
    c.domains.push_back(std::move(sd));
  }
  c.validate();
  return c;
}

// The generated dataset with the ground truth it was drawn from.
struct SyntheticDataset {
  Dataset dataset;
  std::vector<std::string> canonical_channels;
  std::vector<Matrix> prototypes;        // per class, canonical space
  std::map<std::string, Matrix> mixing;  // per subject, canonical space

  // Expected covariance of a (subject, class) trial in its domain's channels.
  Matrix expected_covariance(const std::string& domain, const std::string& subject, int label, double noise) const {
    const Matrix& a = mixing.at(subject);
    const Matrix full = a * prototypes.at(static_cast<std::size_t>(label)) * a.transpose() +
                        noise * noise * Matrix::Identity(a.rows(), a.cols());
    const DomainInfo& d = dataset.manifest.domain(domain);
    const auto n = static_cast<Index>(d.channels.size());
    Matrix out(n, n);
    std::vector<Index> rows;
    for (const auto& name : d.channels.names()) {
      rows.push_back(static_cast<Index>(
          std::find(canonical_channels.begin(), canonical_channels.end(), name) - canonical_channels.begin()));
    }
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < n; ++j) out(i, j) = full(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(j)]);
    return out;
  }
};

inline std::string synthetic_subject_id(const std::string& domain, int k) {
  return domain + "-s" + std::to_string(k + 1);
}

inline SyntheticDataset generate_synthetic(const SyntheticConfig& cfg) {
  cfg.validate();
  SyntheticDataset out;
  for (const auto& d : cfg.domains)
    for (const auto& ch : d.channels)
      if (std::find(out.canonical_channels.begin(), out.canonical_channels.end(), ch) == out.canonical_channels.end()) {
        out.canonical_channels.push_back(ch);
      }
  const auto n = static_cast<Index>(out.canonical_channels.size());

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto gaussian = [&](Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = normal(rng);
    return m;
  };

  std::vector<Matrix> roots;
  for (int c = 0; c < cfg.classes; ++c) {
    const Matrix b = gaussian(n, cfg.class_rank) / std::sqrt(static_cast<double>(cfg.class_rank));
    out.prototypes.push_back(Matrix::Identity(n, n) + cfg.class_separation * b * b.transpose());
    roots.push_back(sqrtm(SpdMatrix(out.prototypes.back())));
  }

  std::vector<std::string> class_names;
  for (int c = 0; c < cfg.classes; ++c) class_names.push_back("class" + std::to_string(c));

  DatasetManifest& manifest = out.dataset.manifest;
  for (const auto& d : cfg.domains) {
    DomainInfo info{d.id, d.id, ChannelMap(d.channels), d.rate, class_names, d.target, {}};
    std::vector<Index> rows;
    for (const auto& ch : d.channels) {
      rows.push_back(static_cast<Index>(
          std::find(out.canonical_channels.begin(), out.canonical_channels.end(), ch) - out.canonical_channels.begin()));
    }

    for (int k = 0; k < d.subjects; ++k) {
      const std::string subject = synthetic_subject_id(d.id, k);
      info.subjects.push_back(subject);
      const Matrix g = gaussian(n, n);
      const Matrix mix =
          Matrix::Identity(n, n) + cfg.subject_shift * 0.5 * (g + g.transpose()) / std::sqrt(static_cast<double>(n));
      out.mixing.emplace(subject, mix);

      std::vector<int> order;
      for (int c = 0; c < cfg.classes; ++c) order.insert(order.end(), static_cast<std::size_t>(cfg.trials_per_class), c);
      std::shuffle(order.begin(), order.end(), rng);
      const auto calibration = static_cast<std::size_t>(std::llround(cfg.calibration_fraction * static_cast<double>(order.size())));

      for (std::size_t t = 0; t < order.size(); ++t) {
        const int label = order[t];
        Matrix x = mix * roots[static_cast<std::size_t>(label)] * gaussian(n, d.samples);
        if (cfg.noise > 0.0) x += cfg.noise * gaussian(n, d.samples);
        Trial trial;
        trial.rate = d.rate;
        trial.signal.resize(static_cast<Index>(rows.size()), d.samples);
        for (std::size_t r = 0; r < rows.size(); ++r) trial.signal.row(static_cast<Index>(r)) = x.row(rows[r]);

        TrialRecord rec;
        char name[32];
        std::snprintf(name, sizeof name, "trial_%04zu.bin", t);
        rec.file = d.id + "/" + subject + "/" + name;
        rec.domain = d.id;
        rec.subject = subject;
        rec.session = "0";
        rec.block = static_cast<int>(t) / cfg.trials_per_block;
        rec.label = label;
        rec.split = !d.target ? Split::Source : t < calibration ? Split::Calibration : Split::Test;
        trial.info = {rec.subject, rec.domain, rec.session, rec.block, rec.label};
        manifest.trials.push_back(std::move(rec));
        out.dataset.trials.push_back(std::move(trial));
      }
    }
    manifest.domains.push_back(std::move(info));
  }
  validate_manifest(manifest);
  return out;
}

}  // namespace beetl::bench
