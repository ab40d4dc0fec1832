#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cpe/tensor.hpp"

namespace cpe {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using NamedTensors = std::vector<std::pair<std::string, tc::Tensor>>;

// Binary layout, all integers u64 little-endian, values f64 little-endian:
//
//   "CPE-CKPT-1"                      10-byte version header
//   count
//   repeated count times:
//     name_len, name bytes
//     rank, dims[rank]
//     values[prod(dims)]
inline constexpr char kCheckpointMagic[] = "CPE-CKPT-1";

void write_checkpoint(std::ostream& out, const NamedTensors& tensors);
NamedTensors read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path,
                     const NamedTensors& tensors);
NamedTensors load_checkpoint(const std::filesystem::path& path);

}  // namespace cpe
