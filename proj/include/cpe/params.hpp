#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "cpe/checkpoint.hpp"
#include "cpe/tensor.hpp"

namespace cpe {

/// Seeded generator with platform-independent real-valued draws.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Uniform on [0, 1) from the top 53 bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Integer uniform on [lo, hi].
  std::int64_t integer(std::int64_t lo, std::int64_t hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(engine_() % span);
  }
  /// Standard normal via Box-Muller.
  double normal();
  std::uint64_t bits() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

/// Affine map y = x W^T + b with W [out, in].
struct Linear {
  tc::Tensor weight;
  tc::Tensor bias;

  /// W, b ~ U(-1/sqrt(in), 1/sqrt(in)).
  static Linear init(std::size_t out, std::size_t in, Rng& rng);
  static Linear zeros(std::size_t out, std::size_t in);

  tc::Tensor operator()(const tc::Tensor& x) const {
    return tc::linear(x, weight, bias);
  }
  std::size_t in_dim() const { return weight.dim(1); }
  std::size_t out_dim() const { return weight.dim(0); }

  void collect(NamedTensors& out, const std::string& prefix) const;
};

tc::Tensor uniform_tensor(tc::Shape shape, double bound, Rng& rng);

/// Replaces the values of each named tensor in `dst` with the matching entry
/// of `src`. Throws CheckpointError on a missing name or shape mismatch.
void assign_params(const NamedTensors& dst, const NamedTensors& src);

}  // namespace cpe
