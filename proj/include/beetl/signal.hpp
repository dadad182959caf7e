#pragma once

// Epoched multichannel trials, channel harmonization, sampling-rate
// alignment and shrinkage covariance estimation.

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "beetl/errors.hpp"
#include "beetl/spd.hpp"

namespace beetl {

struct TrialInfo {
  std::string subject_id;
  std::string domain_id;
  std::string session_id;
  int block_index = 0;
  std::optional<int> label;

  bool operator==(const TrialInfo&) const = default;
};

// channels × samples signal (µV) with its acquisition metadata.
struct Trial {
  Matrix signal;
  double rate = 0.0;
  TrialInfo info;

  Index channels() const noexcept { return signal.rows(); }
  Index samples() const noexcept { return signal.cols(); }
  // Fewer than two samples per channel gives a poorly conditioned estimate.
  bool well_sampled() const noexcept { return samples() >= 2 * channels(); }
};

inline void validate_trial(const Trial& t) {
  if (!(t.rate > 0.0) || !std::isfinite(t.rate)) throw DataError("trial: sampling rate must be positive");
  if (!t.signal.allFinite()) throw DataError("trial: non-finite samples");
}

class ChannelMap {
 public:
  ChannelMap() = default;
  explicit ChannelMap(std::vector<std::string> names) : names_(std::move(names)) {
    if (names_.empty()) throw DataError("channel map: empty");
    std::unordered_set<std::string> seen;
    for (const auto& n : names_) {
      if (!seen.insert(n).second) throw DataError("channel map: duplicate channel '" + n + "'");
    }
  }

  const std::vector<std::string>& names() const noexcept { return names_; }
  std::size_t size() const noexcept { return names_.size(); }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names_.begin());
  }

  bool operator==(const ChannelMap&) const = default;

 private:
  std::vector<std::string> names_;
};

struct CovarianceEstimate {
  SpdMatrix cov;
  double shrinkage;
  TrialInfo info;
};

inline constexpr double kDefaultShrinkage = 0.05;

// (1−α)·C₀ + α·(tr C₀ / n)·I with C₀ the row-centred estimate over samples−1.
inline CovarianceEstimate sample_covariance(const Trial& t, double shrinkage = kDefaultShrinkage) {
  validate_trial(t);
  if (!(shrinkage >= 0.0 && shrinkage <= 1.0)) throw ConfigError("shrinkage", "must lie in [0, 1]");
  if (t.channels() < 2) throw ShapeError("sample_covariance: need at least 2 channels");
  if (t.samples() < 2) throw ShapeError("sample_covariance: need at least 2 samples");
  const Index n = t.channels();
  const Matrix centered = t.signal.colwise() - t.signal.rowwise().mean();
  Matrix c0 = centered * centered.transpose() / static_cast<double>(t.samples() - 1);
  c0 = detail::symmetrize(c0);
  const double mu = c0.trace() / static_cast<double>(n);
  Matrix c = (1.0 - shrinkage) * c0;
  c.diagonal().array() += shrinkage * mu;
  try {
    return {SpdMatrix(c), shrinkage, t.info};
  } catch (const NotPositiveDefinite&) {
    throw NotPositiveDefinite("sample_covariance: singular estimate for subject '" + t.info.subject_id +
                              "' block " + std::to_string(t.info.block_index));
  }
}

// Intersection of all maps, in the first map's order.
inline ChannelMap common_channels(std::span<const ChannelMap> maps) {
  if (maps.empty()) throw DataError("common_channels: no channel maps");
  std::vector<std::string> keep;
  for (const auto& name : maps.front().names()) {
    bool everywhere = true;
    for (const auto& m : maps.subspan(1)) everywhere = everywhere && m.find(name).has_value();
    if (everywhere) keep.push_back(name);
  }
  if (keep.empty()) throw DataError("common_channels: channel maps have no channel in common");
  return ChannelMap(std::move(keep));
}

inline Trial select_channels(const Trial& t, const ChannelMap& from, const ChannelMap& keep) {
  if (static_cast<std::size_t>(t.channels()) != from.size()) {
    throw ShapeError("select_channels: trial has " + std::to_string(t.channels()) + " rows but map has " +
                     std::to_string(from.size()) + " channels");
  }
  Trial out{Matrix(static_cast<Index>(keep.size()), t.samples()), t.rate, t.info};
  for (std::size_t i = 0; i < keep.size(); ++i) {
    auto row = from.find(keep.names()[i]);
    if (!row) throw DataError("select_channels: unknown channel '" + keep.names()[i] + "'");
    out.signal.row(static_cast<Index>(i)) = t.signal.row(static_cast<Index>(*row));
  }
  return out;
}

// Linear interpolation onto a uniform grid at target_rate; the output has
// round(samples·target/rate) samples and holds the last sample past the end.
inline Trial resample(const Trial& t, double target_rate) {
  validate_trial(t);
  if (!(target_rate > 0.0) || !std::isfinite(target_rate)) throw ConfigError("target_rate", "must be positive");
  if (target_rate == t.rate) return t;
  const Index in_n = t.samples();
  const auto out_n = static_cast<Index>(std::llround(static_cast<double>(in_n) * target_rate / t.rate));
  Trial out{Matrix(t.channels(), out_n), target_rate, t.info};
  const double ratio = t.rate / target_rate;
  for (Index j = 0; j < out_n; ++j) {
    const double x = static_cast<double>(j) * ratio;
    const auto lo = std::min(static_cast<Index>(std::floor(x)), in_n - 1);
    const Index hi = std::min(lo + 1, in_n - 1);
    const double frac = std::clamp(x - static_cast<double>(lo), 0.0, 1.0);
    out.signal.col(j) = (1.0 - frac) * t.signal.col(lo) + frac * t.signal.col(hi);
  }
  return out;
}

}  // namespace beetl
