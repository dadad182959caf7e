#pragma once

// Binary model checkpoint:
//
//   "SPDN"  u32 version  u32 tensor_count
//   per tensor: u32 name_length, name bytes (UTF-8), u32 rank, u32 dims[rank],
//               doubles (little-endian, row-major)
//
// All integers are little-endian. The architecture travels as the tensor
// "config/architecture"; subjects and domains are recovered from names.

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "beetl/codec.hpp"
#include "beetl/errors.hpp"
#include "beetl/spdnet/model.hpp"

namespace beetl::spdnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr std::array<char, 4> kCheckpointMagic{'S', 'P', 'D', 'N'};
inline constexpr Index kMaxTensorElements = Index{1} << 26;

namespace impl {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string bytes(std::size_t n) {
    std::string s(n, '\0');
    if (n > 0 && !in_.read(s.data(), static_cast<std::streamsize>(n))) throw DataError("checkpoint: truncated file");
    return s;
  }

  std::uint32_t u32() {
    const std::string b = bytes(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[i])) << (8 * i);
    return v;
  }

  double f64() {
    const std::string b = bytes(8);
    return codec::get_f64_le(reinterpret_cast<const unsigned char*>(b.data()));
  }

 private:
  std::istream& in_;
};

inline Matrix architecture_tensor(const Architecture& a) {
  Matrix t(9, 1);
  t << static_cast<double>(a.input_dim), static_cast<double>(a.width1), static_cast<double>(a.width2),
      static_cast<double>(a.hidden), a.deep_set ? 1.0 : 0.0, static_cast<double>(a.deep_set_embed), a.reeig_eps,
      a.rbn_momentum, a.dropout;
  return t;
}

inline Architecture architecture_from_tensor(const Matrix& t) {
  if (t.size() != 9) throw DataError("checkpoint: malformed architecture record");
  Architecture a;
  a.input_dim = static_cast<Index>(t(0));
  a.width1 = static_cast<Index>(t(1));
  a.width2 = static_cast<Index>(t(2));
  a.hidden = static_cast<Index>(t(3));
  a.deep_set = t(4) != 0.0;
  a.deep_set_embed = static_cast<Index>(t(5));
  a.reeig_eps = t(6);
  a.rbn_momentum = t(7);
  a.dropout = t(8);
  return a;
}

inline std::vector<std::string> names_between(const std::map<std::string, Matrix>& tensors, const std::string& prefix,
                                              const std::string& suffix) {
  std::vector<std::string> out;
  for (const auto& [name, t] : tensors) {
    if (name.size() > prefix.size() + suffix.size() && name.starts_with(prefix) && name.ends_with(suffix)) {
      out.push_back(name.substr(prefix.size(), name.size() - prefix.size() - suffix.size()));
    }
  }
  return out;
}

}  // namespace impl

inline void save_checkpoint(const SpdNetModel& model, std::ostream& os) {
  std::vector<std::pair<std::string, Matrix>> tensors{{"config/architecture", impl::architecture_tensor(model.arch)}};
  model.visit_parameters([&](const std::string& name, const Matrix& m, ParamKind) { tensors.emplace_back(name, m); });

  std::string out(kCheckpointMagic.begin(), kCheckpointMagic.end());
  impl::put_u32(out, kCheckpointVersion);
  impl::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, m] : tensors) {
    impl::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    impl::put_u32(out, 2);
    impl::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    impl::put_u32(out, static_cast<std::uint32_t>(m.cols()));
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) codec::put_f64_le(out, m(i, j));
  }
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw DataError("checkpoint: write failed");
}

inline SpdNetModel load_checkpoint(std::istream& in) {
  impl::Reader r(in);
  const std::string magic = r.bytes(4);
  if (magic != std::string(kCheckpointMagic.begin(), kCheckpointMagic.end())) throw DataError("checkpoint: bad magic");
  if (const auto v = r.u32(); v != kCheckpointVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(v));
  }
  std::map<std::string, Matrix> tensors;
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    const std::uint32_t name_length = r.u32();
    if (name_length > 4096) throw DataError("checkpoint: implausible tensor name length");
    std::string name = r.bytes(name_length);
    const std::uint32_t rank = r.u32();
    if (rank > 2) throw DataError("checkpoint: tensor '" + name + "' has rank " + std::to_string(rank));
    std::array<Index, 2> dims{1, 1};
    for (std::uint32_t d = 0; d < rank; ++d) dims[d] = r.u32();
    if (dims[0] * dims[1] > kMaxTensorElements) throw DataError("checkpoint: tensor '" + name + "' is implausibly large");
    Matrix m(dims[0], dims[1]);
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = r.f64();
    if (!tensors.emplace(std::move(name), std::move(m)).second) throw DataError("checkpoint: duplicate tensor");
  }

  const auto arch_it = tensors.find("config/architecture");
  if (arch_it == tensors.end()) throw DataError("checkpoint: missing architecture record");
  const Architecture arch = impl::architecture_from_tensor(arch_it->second);
  std::vector<std::string> subjects;
  for (auto& s : impl::names_between(tensors, "front/", "/weight"))
    if (s != kFallbackSubject) subjects.push_back(std::move(s));
  std::map<std::string, Index> domains;
  for (const auto& d : impl::names_between(tensors, "head/", "/weight")) domains[d] = tensors.at("head/" + d + "/weight").rows();

  SpdNetModel model = SpdNetModel::create(arch, subjects, domains, 0);
  model.visit_parameters([&](const std::string& name, Matrix& m, ParamKind) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw DataError("checkpoint: missing tensor '" + name + "'");
    if (it->second.rows() != m.rows() || it->second.cols() != m.cols()) {
      throw DataError("checkpoint: tensor '" + name + "' has the wrong shape");
    }
    m = it->second;
  });
  return model;
}

}  // namespace beetl::spdnet
