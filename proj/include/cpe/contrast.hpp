#pragma once

#include <array>
#include <iosfwd>
#include <utility>
#include <vector>

#include "cpe/geometry.hpp"
#include "cpe/tensor.hpp"

namespace cpe {

struct FusionConfig {
  double alpha = 0.5;
  double epsilon = 1e-12;

  void validate() const;
};

/// |S^B - S^B_L| elementwise, [N, C].
tc::Tensor raw_contrast(const tc::Tensor& score_initial,
                        const tc::Tensor& score_extended);

/// Min-max normalisation over the whole matrix. When the range is below
/// `eps` the result is an all-zero constant. Gradients flow through the
/// extreme entries as well as the rest.
tc::Tensor normalize_contrast(const tc::Tensor& raw, double eps);

/// alpha (nL + nR) + (1 - alpha) (nB + nT).
tc::Tensor fuse_directions(const tc::Tensor& n_left, const tc::Tensor& n_right,
                           const tc::Tensor& n_bottom, const tc::Tensor& n_top,
                           const FusionConfig& cfg);

/// Pair of decoder losses (initial encoder, extended encoder) per direction.
using DirectionLosses = std::pair<tc::Tensor, tc::Tensor>;

/// Sum within each direction, mean across directions. Takes any non-empty
/// set of directions; the full module passes four.
tc::Tensor cpe_loss(const std::vector<DirectionLosses>& per_direction);

/// Rows of the contrast debug dump for one image.
struct ContrastDump {
  std::vector<Direction> directions;
  std::vector<tc::Tensor> score_initial;   // per direction [N, C]
  std::vector<tc::Tensor> score_extended;  // per direction [N, C]
  std::vector<tc::Tensor> contrast;        // per direction [N, C]
  tc::Tensor fused;                        // [N, C]
};

/// CSV with one row per (proposal, class): S^B, S^B_L and contrast for each
/// direction, then the fused value.
void write_contrast_csv(std::ostream& out, const ContrastDump& dump);

}  // namespace cpe
