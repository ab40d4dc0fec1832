#pragma once

#include <cstddef>
#include <vector>

#include "cpe/geometry.hpp"
#include "cpe/tensor.hpp"

namespace cpe {

/// Backbone-style activation volume [channels, height, width] together with
/// the pixel -> feature-cell scale.
class FeatureMap {
 public:
  FeatureMap(tc::Tensor values, double spatial_scale);

  std::size_t channels() const { return values_.dim(0); }
  std::size_t height() const { return values_.dim(1); }
  std::size_t width() const { return values_.dim(2); }
  double spatial_scale() const { return scale_; }
  const tc::Tensor& values() const { return values_; }
  /// Image extent in pixels covered by the map.
  ImageDims image_dims() const;

 private:
  tc::Tensor values_;
  double scale_;
};

/// A pooled grid [rows, cols]. Zero columns (or rows) is legal and denotes the
/// empty extension strip of a border-clamped proposal.
struct PooledFeature {
  tc::Tensor values;

  std::size_t rows() const { return values.dim(0); }
  std::size_t cols() const { return values.dim(1); }
};

/// Pooling sizes: `steps` bins along the non-extension axis (the per-step
/// vector length), `base` bins across the proposal along the extension axis,
/// `extra` bins across the extension strip.
struct PoolingSpec {
  std::size_t steps = 7;
  std::size_t base = 7;
  std::size_t extra = 3;
};

/// Ordered per-step vectors fed to the recurrent encoder. Each step has
/// shape [len].
struct StepSequence {
  std::vector<tc::Tensor> steps;
  Direction direction = Direction::T2B;
};

/// Channel mean of the feature map, shape [height, width]. Differentiable.
tc::Tensor channel_average(const FeatureMap& fm);

/// Max pooling of `grid` [H, W] over box `b` (pixel coordinates) into an
/// out_rows x out_cols grid. The box is clipped to the grid extent, mapped by
/// `scale`, and split into equal real-valued bins that are rounded outward to
/// whole cells. A bin that rounds to nothing takes its nearest cell.
/// Differentiable: gradients route to each bin's first maximal cell.
PooledFeature roi_pool(const tc::Tensor& grid, const Box& b,
                       std::size_t out_rows, std::size_t out_cols,
                       double scale);

struct PooledPair {
  PooledFeature initial;   // proposal b
  PooledFeature strip;     // b_ext minus b
  PooledFeature extended;  // the two above joined along the extension axis
};

/// Pools a proposal and its extension strip with independent binning and
/// joins them on the side where the strip physically lies, so that orienting
/// the extended feature yields the proposal's steps followed by the strip's.
/// Horizontal directions produce [steps, cols] grids; vertical directions
/// produce [rows, steps] grids.
PooledPair pool_pair(const tc::Tensor& grid, const Box& b, const Box& b_ext,
                     Direction dir, const PoolingSpec& spec, double scale);

/// Reads a pooled grid as a sequence that walks towards the extension:
/// T2B rows top-down, B2T rows bottom-up, L2R columns left-right,
/// R2L columns right-left.
StepSequence orient(const PooledFeature& x, Direction dir);

/// Inverse of `orient`.
PooledFeature unorient(const StepSequence& seq);

/// Stacks per-proposal sequences of equal length into per-step batches of
/// shape [N, len].
std::vector<tc::Tensor> batch_steps(const std::vector<StepSequence>& seqs);

}  // namespace cpe
