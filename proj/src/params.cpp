#include "cpe/params.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cpe {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u = uniform();
  while (u <= 0.0) u = uniform();
  const double v = uniform();
  const double r = std::sqrt(-2.0 * std::log(u));
  const double a = 2.0 * std::numbers::pi * v;
  spare_ = r * std::sin(a);
  has_spare_ = true;
  return r * std::cos(a);
}

tc::Tensor uniform_tensor(tc::Shape shape, double bound, Rng& rng) {
  std::vector<double> v(tc::numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return tc::Tensor(std::move(shape), std::move(v), true);
}

Linear Linear::init(std::size_t out, std::size_t in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  Linear l;
  l.weight = uniform_tensor({out, in}, bound, rng);
  l.bias = uniform_tensor({out}, bound, rng);
  return l;
}

Linear Linear::zeros(std::size_t out, std::size_t in) {
  return {tc::Tensor::zeros({out, in}, true), tc::Tensor::zeros({out}, true)};
}

void Linear::collect(NamedTensors& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".weight", weight);
  out.emplace_back(prefix + ".bias", bias);
}

void assign_params(const NamedTensors& dst, const NamedTensors& src) {
  for (const auto& [name, t] : dst) {
    auto it = std::find_if(src.begin(), src.end(),
                           [&](const auto& e) { return e.first == name; });
    if (it == src.end()) throw CheckpointError("checkpoint lacks " + name);
    if (it->second.shape() != t.shape()) {
      throw CheckpointError("shape mismatch for " + name + ": " +
                            tc::shape_str(it->second.shape()) + " vs " +
                            tc::shape_str(t.shape()));
    }
    tc::Tensor target = t;
    std::copy(it->second.data().begin(), it->second.data().end(),
              target.mutable_data().begin());
  }
}

}  // namespace cpe
