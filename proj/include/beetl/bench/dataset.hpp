#pragma once

// On-disk dataset: a JSON manifest plus one binary file per trial.
//
// Trial file layout (all little-endian):
//   8 bytes  magic "BEETL1\0\0"
//   u32      channel count
//   u32      sample count
//   f64      sampling rate (Hz)
//   f32      channels × samples values, row-major

#include <array>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "beetl/errors.hpp"
#include "beetl/signal.hpp"

namespace beetl::bench {

namespace fs = std::filesystem;

inline constexpr int kManifestVersion = 1;
inline constexpr std::array<char, 8> kTrialMagic{'B', 'E', 'E', 'T', 'L', '1', '\0', '\0'};
inline constexpr std::size_t kTrialHeaderBytes = 8 + 4 + 4 + 8;

enum class DatasetErrorKind { BadMagic, Truncated, Inconsistent, Io };

class DatasetError : public DataError {
 public:
  DatasetError(DatasetErrorKind kind, const std::string& message) : DataError(message), kind_(kind) {}
  DatasetErrorKind kind() const noexcept { return kind_; }

 private:
  DatasetErrorKind kind_;
};

enum class Split { Source, Calibration, Test };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::Source: return "source";
    case Split::Calibration: return "calibration";
    case Split::Test: return "test";
  }
  return {};
}

inline Split split_from_string(const std::string& s) {
  if (s == "source") return Split::Source;
  if (s == "calibration") return Split::Calibration;
  if (s == "test") return Split::Test;
  throw DatasetError(DatasetErrorKind::Inconsistent, "manifest: unknown split '" + s + "'");
}

struct DomainInfo {
  std::string id;
  std::string name;
  ChannelMap channels;
  double rate = 0.0;
  std::vector<std::string> classes;
  bool target = false;
  std::vector<std::string> subjects;

  bool operator==(const DomainInfo&) const = default;
};

struct TrialRecord {
  std::string file;  // relative to the manifest directory
  std::string domain;
  std::string subject;
  std::string session;
  int block = 0;
  std::optional<int> label;
  Split split = Split::Source;

  bool operator==(const TrialRecord&) const = default;
};

struct DatasetManifest {
  int format_version = kManifestVersion;
  std::vector<DomainInfo> domains;
  std::vector<TrialRecord> trials;

  const DomainInfo& domain(const std::string& id) const {
    for (const auto& d : domains)
      if (d.id == id) return d;
    throw DatasetError(DatasetErrorKind::Inconsistent, "manifest: unknown domain '" + id + "'");
  }

  bool operator==(const DatasetManifest&) const = default;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Trial> trials;  // parallel to manifest.trials
};

// ---------------------------------------------------------------------------
// Trial files

inline std::string encode_trial(const Trial& t) {
  std::string out(kTrialMagic.begin(), kTrialMagic.end());
  auto put = [&out](auto v, int bytes) {
    for (int b = 0; b < bytes; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
  };
  put(static_cast<std::uint32_t>(t.channels()), 4);
  put(static_cast<std::uint32_t>(t.samples()), 4);
  put(std::bit_cast<std::uint64_t>(t.rate), 8);
  out.reserve(out.size() + static_cast<std::size_t>(t.signal.size()) * 4);
  for (Index i = 0; i < t.channels(); ++i)
    for (Index j = 0; j < t.samples(); ++j) put(std::bit_cast<std::uint32_t>(static_cast<float>(t.signal(i, j))), 4);
  return out;
}

inline Trial decode_trial(const std::string& bytes, const std::string& where = "trial") {
  if (bytes.size() < kTrialMagic.size()) throw DatasetError(DatasetErrorKind::Truncated, where + ": shorter than header");
  if (!std::equal(kTrialMagic.begin(), kTrialMagic.end(), bytes.begin())) {
    throw DatasetError(DatasetErrorKind::BadMagic, where + ": bad magic");
  }
  if (bytes.size() < kTrialHeaderBytes) throw DatasetError(DatasetErrorKind::Truncated, where + ": shorter than header");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + kTrialMagic.size();
  auto get = [&p](int n) {
    std::uint64_t v = 0;
    for (int b = 0; b < n; ++b) v |= static_cast<std::uint64_t>(p[b]) << (8 * b);
    p += n;
    return v;
  };
  const auto channels = static_cast<Index>(get(4));
  const auto samples = static_cast<Index>(get(4));
  Trial t;
  t.rate = std::bit_cast<double>(get(8));
  const auto expected = kTrialHeaderBytes + static_cast<std::size_t>(channels * samples) * 4;
  if (bytes.size() < expected) {
    throw DatasetError(DatasetErrorKind::Truncated, where + ": header claims " + std::to_string(channels) + "x" +
                                                        std::to_string(samples) + " samples but the file is short");
  }
  if (bytes.size() > expected) throw DatasetError(DatasetErrorKind::Inconsistent, where + ": trailing bytes");
  t.signal.resize(channels, samples);
  for (Index i = 0; i < channels; ++i)
    for (Index j = 0; j < samples; ++j) t.signal(i, j) = std::bit_cast<float>(static_cast<std::uint32_t>(get(4)));
  return t;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(DatasetErrorKind::Io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DatasetError(DatasetErrorKind::Io, "cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// Manifest

inline nlohmann::json to_json(const DatasetManifest& m) {
  nlohmann::json j;
  j["format_version"] = m.format_version;
  j["domains"] = nlohmann::json::array();
  for (const auto& d : m.domains) {
    j["domains"].push_back({{"id", d.id},
                            {"name", d.name},
                            {"channels", d.channels.names()},
                            {"rate", d.rate},
                            {"classes", d.classes},
                            {"role", d.target ? "target" : "source"},
                            {"subjects", d.subjects}});
  }
  j["trials"] = nlohmann::json::array();
  for (const auto& t : m.trials) {
    nlohmann::json r{{"file", t.file},       {"domain", t.domain}, {"subject", t.subject},
                     {"session", t.session}, {"block", t.block},   {"split", to_string(t.split)}};
    r["label"] = t.label ? nlohmann::json(*t.label) : nlohmann::json(nullptr);
    j["trials"].push_back(std::move(r));
  }
  return j;
}

// Checks cross-references: known domains and subjects, labels within the
// domain's class range, calibration and test trials only in target domains.
inline void validate_manifest(const DatasetManifest& m) {
  if (m.format_version != kManifestVersion) {
    throw DatasetError(DatasetErrorKind::Inconsistent,
                       "manifest: unsupported format_version " + std::to_string(m.format_version));
  }
  std::set<std::string> ids;
  for (const auto& d : m.domains) {
    if (!ids.insert(d.id).second) throw DatasetError(DatasetErrorKind::Inconsistent, "manifest: duplicate domain " + d.id);
    if (!(d.rate > 0.0)) throw DatasetError(DatasetErrorKind::Inconsistent, "manifest: domain " + d.id + " has no rate");
    if (d.classes.empty()) throw DatasetError(DatasetErrorKind::Inconsistent, "manifest: domain " + d.id + " has no classes");
  }
  for (const auto& t : m.trials) {
    const DomainInfo& d = m.domain(t.domain);
    if (std::find(d.subjects.begin(), d.subjects.end(), t.subject) == d.subjects.end()) {
      throw DatasetError(DatasetErrorKind::Inconsistent, "manifest: subject '" + t.subject + "' not listed in " + d.id);
    }
    if (t.label && (*t.label < 0 || *t.label >= static_cast<int>(d.classes.size()))) {
      throw DatasetError(DatasetErrorKind::Inconsistent, "manifest: label out of range in " + t.file);
    }
    if (t.split != Split::Source && !d.target) {
      throw DatasetError(DatasetErrorKind::Inconsistent, "manifest: " + to_string(t.split) + " trial in source domain");
    }
    if (t.split != Split::Test && !t.label) {
      throw DatasetError(DatasetErrorKind::Inconsistent, "manifest: training trial without label: " + t.file);
    }
  }
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  try {
    DatasetManifest m;
    m.format_version = j.at("format_version").get<int>();
    for (const auto& d : j.at("domains")) {
      DomainInfo info;
      info.id = d.at("id").get<std::string>();
      info.name = d.value("name", info.id);
      info.channels = ChannelMap(d.at("channels").get<std::vector<std::string>>());
      info.rate = d.at("rate").get<double>();
      info.classes = d.at("classes").get<std::vector<std::string>>();
      const std::string role = d.value("role", "source");
      if (role != "source" && role != "target") {
        throw DatasetError(DatasetErrorKind::Inconsistent, "manifest: unknown role '" + role + "'");
      }
      info.target = role == "target";
      info.subjects = d.at("subjects").get<std::vector<std::string>>();
      m.domains.push_back(std::move(info));
    }
    for (const auto& r : j.at("trials")) {
      TrialRecord t;
      t.file = r.at("file").get<std::string>();
      t.domain = r.at("domain").get<std::string>();
      t.subject = r.at("subject").get<std::string>();
      t.session = r.value("session", "0");
      t.block = r.at("block").get<int>();
      if (r.contains("label") && !r.at("label").is_null()) t.label = r.at("label").get<int>();
      t.split = split_from_string(r.value("split", "source"));
      m.trials.push_back(std::move(t));
    }
    validate_manifest(m);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(DatasetErrorKind::Inconsistent, std::string("manifest: ") + e.what());
  }
}

inline constexpr const char* kManifestName = "manifest.json";

inline void save_dataset(const fs::path& dir, const Dataset& ds) {
  validate_manifest(ds.manifest);
  if (ds.trials.size() != ds.manifest.trials.size()) {
    throw DatasetError(DatasetErrorKind::Inconsistent, "save_dataset: one signal per trial record is required");
  }
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DatasetError(DatasetErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < ds.trials.size(); ++i) {
    const fs::path file = dir / ds.manifest.trials[i].file;
    fs::create_directories(file.parent_path(), ec);
    write_file(file, encode_trial(ds.trials[i]));
  }
  write_file(dir / kManifestName, to_json(ds.manifest).dump(2) + "\n");
}

// Accepts the dataset directory or the manifest path itself.
inline Dataset load_dataset(const fs::path& path) {
  const fs::path manifest_path = fs::is_directory(path) ? path / kManifestName : path;
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(manifest_path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DatasetError(DatasetErrorKind::Inconsistent, "manifest: " + std::string(e.what()));
  }
  Dataset ds{manifest_from_json(j), {}};
  const fs::path root = manifest_path.parent_path();
  ds.trials.reserve(ds.manifest.trials.size());
  for (const auto& r : ds.manifest.trials) {
    Trial t = decode_trial(read_file(root / r.file), r.file);
    const DomainInfo& d = ds.manifest.domain(r.domain);
    if (static_cast<std::size_t>(t.channels()) != d.channels.size() || t.rate != d.rate) {
      throw DatasetError(DatasetErrorKind::Inconsistent, r.file + ": channel count or rate disagrees with the manifest");
    }
    t.info = {r.subject, r.domain, r.session, r.block, r.label};
    ds.trials.push_back(std::move(t));
  }
  return ds;
}

}  // namespace beetl::bench
