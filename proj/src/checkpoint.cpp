#include "cpe/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace cpe {

namespace {

constexpr std::size_t kMagicLen = sizeof(kCheckpointMagic) - 1;
// Guards against absurd allocations from corrupt files.
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) {
    throw CheckpointError("truncated checkpoint");
  }
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

void put_f64(std::ostream& out, double d) {
  put_u64(out, std::bit_cast<std::uint64_t>(d));
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace

void write_checkpoint(std::ostream& out, const NamedTensors& tensors) {
  out.write(kCheckpointMagic, kMagicLen);
  put_u64(out, tensors.size());
  for (const auto& [name, t] : tensors) {
    put_u64(out, name.size());
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u64(out, t.rank());
    for (std::size_t d : t.shape()) put_u64(out, d);
    for (double v : t.data()) put_f64(out, v);
  }
  if (!out) throw CheckpointError("failed to write checkpoint");
}

NamedTensors read_checkpoint(std::istream& in) {
  char magic[kMagicLen];
  if (!in.read(magic, kMagicLen) ||
      std::memcmp(magic, kCheckpointMagic, kMagicLen) != 0) {
    throw CheckpointError("missing CPE-CKPT-1 header");
  }
  const std::uint64_t count = get_u64(in);
  NamedTensors out;
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::uint64_t len = get_u64(in);
    if (len > 4096) throw CheckpointError("implausible tensor name length");
    std::string name(len, '\0');
    if (!in.read(name.data(), static_cast<std::streamsize>(len))) {
      throw CheckpointError("truncated checkpoint");
    }
    const std::uint64_t rank = get_u64(in);
    if (rank > 8) throw CheckpointError("implausible rank for " + name);
    tc::Shape shape(rank);
    std::uint64_t n = 1;
    for (auto& d : shape) {
      d = get_u64(in);
      n *= d;
      if (n > kMaxElements) throw CheckpointError("tensor too large: " + name);
    }
    std::vector<double> values(n);
    for (auto& v : values) v = get_f64(in);
    out.emplace_back(std::move(name), tc::Tensor(std::move(shape), std::move(values)));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path,
                     const NamedTensors& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open " + path.string());
  write_checkpoint(out, tensors);
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace cpe
