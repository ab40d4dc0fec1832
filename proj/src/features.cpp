#include "cpe/features.hpp"

#include <algorithm>
#include <cmath>

namespace cpe {

FeatureMap::FeatureMap(tc::Tensor values, double spatial_scale)
    : values_(std::move(values)), scale_(spatial_scale) {
  if (values_.rank() != 3 || values_.dim(0) == 0 || values_.dim(1) == 0 ||
      values_.dim(2) == 0) {
    throw InvalidInput("feature map must be [C, H, W] with positive dims, got " +
                       tc::shape_str(values_.shape()));
  }
  if (!(spatial_scale > 0)) throw InvalidInput("spatial scale must be > 0");
}

ImageDims FeatureMap::image_dims() const {
  return ImageDims(static_cast<double>(width()) / scale_,
                   static_cast<double>(height()) / scale_);
}

tc::Tensor channel_average(const FeatureMap& fm) {
  const tc::Tensor flat =
      tc::reshape(fm.values(), {fm.channels(), fm.height() * fm.width()});
  return tc::reshape(tc::mean_axis(flat, 0), {fm.height(), fm.width()});
}

namespace {

struct CellRange {
  std::size_t begin, end;  // [begin, end)
};

// Bin `j` of `n` over the feature-space interval [lo, hi], rounded outward
// to cells of a length-`cells` axis.
CellRange bin_cells(double lo, double hi, std::size_t j, std::size_t n,
                    std::size_t cells) {
  constexpr double kSlack = 1e-9;
  const double step = (hi - lo) / static_cast<double>(n);
  const double a = lo + step * static_cast<double>(j);
  const double b = (j + 1 == n) ? hi : lo + step * static_cast<double>(j + 1);
  const auto last = static_cast<double>(cells);
  const double first_cell = std::clamp(std::floor(a + kSlack), 0.0, last);
  const double end_cell = std::clamp(std::ceil(b - kSlack), 0.0, last);
  if (end_cell > first_cell) {
    return {static_cast<std::size_t>(first_cell),
            static_cast<std::size_t>(end_cell)};
  }
  const double mid = std::clamp(std::floor(0.5 * (a + b)), 0.0, last - 1.0);
  const auto c = static_cast<std::size_t>(mid);
  return {c, c + 1};
}

}  // namespace

PooledFeature roi_pool(const tc::Tensor& grid, const Box& b,
                       std::size_t out_rows, std::size_t out_cols,
                       double scale) {
  if (grid.rank() != 2 || grid.dim(0) == 0 || grid.dim(1) == 0) {
    throw InvalidInput("roi_pool needs a non-empty [H, W] grid");
  }
  if (!(scale > 0)) throw InvalidInput("roi_pool scale must be > 0");
  const std::size_t gh = grid.dim(0), gw = grid.dim(1);
  if (out_rows == 0 || out_cols == 0) {
    return {tc::Tensor({out_rows, out_cols}, {})};
  }
  const ImageDims extent(static_cast<double>(gw) / scale,
                         static_cast<double>(gh) / scale);
  const Box c = clip_box(b, extent);
  const double x0 = c.x() * scale, x1 = c.right() * scale;
  const double y0 = c.y() * scale, y1 = c.bottom() * scale;

  const auto values = grid.data();
  std::vector<std::size_t> index;
  index.reserve(out_rows * out_cols);
  for (std::size_t r = 0; r < out_rows; ++r) {
    const CellRange rows = bin_cells(y0, y1, r, out_rows, gh);
    for (std::size_t q = 0; q < out_cols; ++q) {
      const CellRange cols = bin_cells(x0, x1, q, out_cols, gw);
      std::size_t best = rows.begin * gw + cols.begin;
      for (std::size_t i = rows.begin; i < rows.end; ++i) {
        for (std::size_t j = cols.begin; j < cols.end; ++j) {
          if (values[i * gw + j] > values[best]) best = i * gw + j;
        }
      }
      index.push_back(best);
    }
  }
  return {tc::gather(grid, std::move(index), {out_rows, out_cols})};
}

PooledPair pool_pair(const tc::Tensor& grid, const Box& b, const Box& b_ext,
                     Direction dir, const PoolingSpec& spec, double scale) {
  if (!b_ext.contains(b)) {
    throw InvalidInput("extended box does not contain the proposal");
  }
  const bool horiz = is_horizontal(dir);
  const std::size_t axis = horiz ? 1 : 0;
  auto pool = [&](const Box& box, std::size_t along) {
    return horiz ? roi_pool(grid, box, spec.steps, along, scale)
                 : roi_pool(grid, box, along, spec.steps, scale);
  };
  PooledPair out;
  out.initial = pool(b, spec.base);
  const std::optional<Box> strip = extension_strip(b, b_ext, dir);
  if (strip) {
    out.strip = pool(*strip, spec.extra);
  } else {
    out.strip = {horiz ? tc::Tensor({spec.steps, 0}, {})
                       : tc::Tensor({0, spec.steps}, {})};
  }
  const bool strip_first = dir == Direction::R2L || dir == Direction::B2T;
  out.extended = {strip_first
                      ? tc::concat({out.strip.values, out.initial.values}, axis)
                      : tc::concat({out.initial.values, out.strip.values}, axis)};
  return out;
}

StepSequence orient(const PooledFeature& x, Direction dir) {
  StepSequence seq;
  seq.direction = dir;
  const bool horiz = is_horizontal(dir);
  const std::size_t count = horiz ? x.cols() : x.rows();
  const std::size_t len = horiz ? x.rows() : x.cols();
  const bool reversed = dir == Direction::R2L || dir == Direction::B2T;
  seq.steps.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t i = reversed ? count - 1 - k : k;
    seq.steps.push_back(
        tc::reshape(tc::slice(x.values, horiz ? 1 : 0, i, i + 1), {len}));
  }
  return seq;
}

PooledFeature unorient(const StepSequence& seq) {
  const Direction dir = seq.direction;
  const bool horiz = is_horizontal(dir);
  if (seq.steps.empty()) return {tc::Tensor({0, 0}, {})};
  const bool reversed = dir == Direction::R2L || dir == Direction::B2T;
  std::vector<tc::Tensor> ordered(seq.steps.begin(), seq.steps.end());
  if (reversed) std::reverse(ordered.begin(), ordered.end());
  // Rows stack along axis 0; columns along axis 1.
  return {tc::stack(ordered, horiz ? 1 : 0)};
}

std::vector<tc::Tensor> batch_steps(const std::vector<StepSequence>& seqs) {
  std::vector<tc::Tensor> out;
  if (seqs.empty()) return out;
  const std::size_t count = seqs.front().steps.size();
  for (const auto& s : seqs) {
    if (s.steps.size() != count) {
      throw InvalidInput("batch_steps: sequences differ in length");
    }
  }
  out.reserve(count);
  std::vector<tc::Tensor> column(seqs.size());
  for (std::size_t k = 0; k < count; ++k) {
    for (std::size_t n = 0; n < seqs.size(); ++n) column[n] = seqs[n].steps[k];
    out.push_back(tc::stack(column, 0));
  }
  return out;
}

}  // namespace cpe
