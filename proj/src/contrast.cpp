#include "cpe/contrast.hpp"

#include <cmath>
#include <ostream>

namespace cpe {

void FusionConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InvalidParameter("alpha must lie in (0, 1)");
  }
  if (!(epsilon > 0.0)) throw InvalidParameter("epsilon must be > 0");
}

tc::Tensor raw_contrast(const tc::Tensor& score_initial,
                        const tc::Tensor& score_extended) {
  if (score_initial.shape() != score_extended.shape()) {
    throw tc::ShapeError("raw_contrast: " +
                         tc::shape_str(score_initial.shape()) + " vs " +
                         tc::shape_str(score_extended.shape()));
  }
  return tc::abs(tc::sub(score_initial, score_extended));
}

tc::Tensor normalize_contrast(const tc::Tensor& raw, double eps) {
  const tc::Tensor lo = tc::min_all(raw);
  const tc::Tensor hi = tc::max_all(raw);
  if (!(hi.item() - lo.item() >= eps)) {
    return tc::Tensor::zeros(raw.shape());
  }
  return tc::div(tc::sub(raw, lo), tc::sub(hi, lo));
}

tc::Tensor fuse_directions(const tc::Tensor& n_left, const tc::Tensor& n_right,
                           const tc::Tensor& n_bottom, const tc::Tensor& n_top,
                           const FusionConfig& cfg) {
  cfg.validate();
  const tc::Shape& s = n_left.shape();
  if (n_right.shape() != s || n_bottom.shape() != s || n_top.shape() != s) {
    throw tc::ShapeError("fuse_directions: shapes differ");
  }
  return tc::add(tc::scale(tc::add(n_left, n_right), cfg.alpha),
                 tc::scale(tc::add(n_bottom, n_top), 1.0 - cfg.alpha));
}

tc::Tensor cpe_loss(const std::vector<DirectionLosses>& per_direction) {
  if (per_direction.empty()) throw InvalidInput("cpe_loss: no directions");
  tc::Tensor total;
  for (const auto& [first, second] : per_direction) {
    if (std::isnan(first.item()) || std::isnan(second.item())) {
      throw std::domain_error("cpe_loss: NaN decoder loss");
    }
    const tc::Tensor pair = tc::add(first, second);
    total = total.defined() ? tc::add(total, pair) : pair;
  }
  return tc::scale(total, 1.0 / static_cast<double>(per_direction.size()));
}

void write_contrast_csv(std::ostream& out, const ContrastDump& dump) {
  out << "proposal_id,class_id";
  for (Direction d : dump.directions) {
    const auto name = to_string(d);
    out << ",S_B_" << name << ",S_BL_" << name << ",N_" << name;
  }
  out << ",N_fused\n";
  const std::size_t n = dump.fused.dim(0), c = dump.fused.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      out << i << ',' << j;
      for (std::size_t k = 0; k < dump.directions.size(); ++k) {
        out << ',' << format_real(dump.score_initial[k].at(i, j)) << ','
            << format_real(dump.score_extended[k].at(i, j)) << ','
            << format_real(dump.contrast[k].at(i, j));
      }
      out << ',' << format_real(dump.fused.at(i, j)) << '\n';
    }
  }
}

}  // namespace cpe
