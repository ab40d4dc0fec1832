#pragma once

#include <vector>

#include "cpe/tensor.hpp"

namespace cpe {

/// Image-level multi-label target, entries in {0, 1}.
struct ImageLabel {
  std::vector<double> y;

  std::size_t num_classes() const { return y.size(); }
  bool any_positive() const;
  /// Throws InvalidInput unless every entry is 0 or 1.
  void validate() const;
  tc::Tensor as_tensor() const;
};

/// Probability floor used by the image-level cross-entropy.
inline constexpr double kProbEps = 1e-6;

/// -sum_c [y_c log s_c + (1 - y_c) log(1 - s_c)] with s clamped to
/// [eps, 1 - eps]. `scores` has shape [C].
tc::Tensor image_bce(const tc::Tensor& scores, const ImageLabel& label,
                     double eps = kProbEps);

}  // namespace cpe
