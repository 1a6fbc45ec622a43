#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "relay/error.hpp"
#include "relay/policyopt/policy.hpp"

namespace relay::harness {

// Layout, all integers and floats little-endian:
//   "RBPC" | u32 version | u64 config hash | u8 uses_switch | u32 array count
//   per array: u32 name length | name bytes | u32 rank | u64 dims[rank] | f32 payload
//   normalizer: u32 dims | f64 count | f64 sum[dims] | f64 mean[dims] | f64 m2[dims]
inline constexpr char kCheckpointMagic[4] = {'R', 'B', 'P', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  policyopt::Policy policy;
  std::uint64_t config_hash = 0;
};

namespace detail {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const char*>(p);
    out_.insert(out_.end(), b, b + n);
  }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void f32(float v) { uint(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  const std::vector<char>& data() const noexcept { return out_; }

 private:
  std::vector<char> out_;
};

class Reader {
 public:
  Reader(const std::vector<char>& in, std::string source) : in_(in), source_(std::move(source)) {}

  void need(std::size_t n) const {
    if (in_.size() - pos_ < n) throw FormatError(source_ + ": truncated checkpoint at byte " + std::to_string(pos_));
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  float f32() { return std::bit_cast<float>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(in_.begin() + static_cast<std::ptrdiff_t>(pos_), in_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
  }
  bool at_end() const noexcept { return pos_ == in_.size(); }
  std::size_t remaining() const noexcept { return in_.size() - pos_; }
  const std::string& source() const noexcept { return source_; }

 private:
  const std::vector<char>& in_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<char> encode_checkpoint(const policyopt::Policy& policy, std::uint64_t config_hash) {
  detail::Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.uint<std::uint32_t>(kCheckpointVersion);
  w.uint<std::uint64_t>(config_hash);
  w.uint<std::uint8_t>(policy.uses_switch() ? 1 : 0);
  const auto params = policy.net().parameters();
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    w.uint<std::uint32_t>(static_cast<std::uint32_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.uint<std::uint32_t>(2);
    w.uint<std::uint64_t>(p.array->rows());
    w.uint<std::uint64_t>(p.array->cols());
    for (float v : p.array->values()) w.f32(v);
  }
  const auto& n = policy.normalizer();
  w.uint<std::uint32_t>(static_cast<std::uint32_t>(n.dims()));
  w.f64(n.count());
  for (double v : n.sum()) w.f64(v);
  for (double v : n.mean()) w.f64(v);
  for (double v : n.m2()) w.f64(v);
  return w.data();
}

inline Checkpoint decode_checkpoint(const std::vector<char>& bytes, const std::string& source = "<checkpoint>") {
  detail::Reader r(bytes, source);
  if (r.str(4) != std::string(kCheckpointMagic, 4)) throw FormatError(source + ": bad magic, not a checkpoint");
  const auto version = r.uint<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(source + ": unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  }
  Checkpoint ck;
  ck.config_hash = r.uint<std::uint64_t>();
  const auto uses_switch = r.uint<std::uint8_t>();
  if (uses_switch > 1) throw FormatError(source + ": bad switch flag");
  const auto count = r.uint<std::uint32_t>();
  std::vector<std::pair<std::string, diffcore::Matrix<float>>> arrays;
  for (std::uint32_t a = 0; a < count; ++a) {
    const auto name = r.str(r.uint<std::uint32_t>());
    const auto rank = r.uint<std::uint32_t>();
    if (rank != 2) throw FormatError(source + ": array '" + name + "' has rank " + std::to_string(rank));
    const auto rows = r.uint<std::uint64_t>();
    const auto cols = r.uint<std::uint64_t>();
    if (cols != 0 && rows > r.remaining() / 4 / cols) throw FormatError(source + ": truncated payload for '" + name + "'");
    diffcore::Matrix<float> m(rows, cols);
    for (auto& v : m.values()) v = r.f32();
    arrays.emplace_back(name, std::move(m));
  }
  auto net = policyopt::Net::from_arrays(arrays);
  if (net.parameters().size() != arrays.size()) throw FormatError(source + ": unexpected extra parameter arrays");
  const auto dims = r.uint<std::uint32_t>();
  const double n = r.f64();
  std::vector<double> sum(dims), mean(dims), m2(dims);
  for (auto& v : sum) v = r.f64();
  for (auto& v : mean) v = r.f64();
  for (auto& v : m2) v = r.f64();
  if (!r.at_end()) throw FormatError(source + ": trailing bytes after checkpoint");
  try {
    ck.policy = policyopt::Policy(std::move(net), policyopt::RunningNormalizer(n, sum, mean, m2), uses_switch == 1);
  } catch (const InvalidInput& e) {
    throw FormatError(source + ": " + e.what());
  }
  return ck;
}

inline void save_checkpoint(const std::string& path, const policyopt::Policy& policy, std::uint64_t config_hash) {
  const auto bytes = encode_checkpoint(policy, config_hash);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw InvalidInput("cannot write checkpoint '" + path + "'");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw InvalidInput("failed writing checkpoint '" + path + "'");
}

/// Reads `path`; a hash different from `expected_hash` produces a warning
/// on `warn`, not an error.
inline Checkpoint load_checkpoint(const std::string& path, std::optional<std::uint64_t> expected_hash = std::nullopt,
                                  std::ostream* warn = nullptr) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InvalidInput("cannot open checkpoint '" + path + "'");
  std::vector<char> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  auto ck = decode_checkpoint(bytes, path);
  if (expected_hash && *expected_hash != ck.config_hash && warn != nullptr) {
    *warn << "warning: checkpoint '" << path << "' was written under config hash " << std::hex << ck.config_hash
          << ", current config hash is " << *expected_hash << std::dec << "\n";
  }
  return ck;
}

/// All-or-nothing load into `dst`.
inline std::uint64_t load_checkpoint_into(policyopt::Policy& dst, const std::string& path,
                                          std::optional<std::uint64_t> expected_hash = std::nullopt,
                                          std::ostream* warn = nullptr) {
  auto ck = load_checkpoint(path, expected_hash, warn);
  dst = std::move(ck.policy);
  return ck.config_hash;
}

}  // namespace relay::harness
