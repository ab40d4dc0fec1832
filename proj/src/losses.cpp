#include "cpe/losses.hpp"

#include <algorithm>

#include "cpe/geometry.hpp"

namespace cpe {

bool ImageLabel::any_positive() const {
  return std::any_of(y.begin(), y.end(), [](double v) { return v == 1.0; });
}

void ImageLabel::validate() const {
  for (double v : y) {
    if (v != 0.0 && v != 1.0) throw InvalidInput("labels must be 0 or 1");
  }
}

tc::Tensor ImageLabel::as_tensor() const { return tc::Tensor::vector(y); }

tc::Tensor image_bce(const tc::Tensor& scores, const ImageLabel& label,
                     double eps) {
  label.validate();
  if (scores.size() != label.num_classes()) {
    throw tc::ShapeError("image_bce: " + std::to_string(scores.size()) +
                         " scores for " + std::to_string(label.num_classes()) +
                         " labels");
  }
  const tc::Tensor s = tc::reshape(tc::clamp(scores, eps, 1.0 - eps),
                                   {label.num_classes()});
  const tc::Tensor y = label.as_tensor();
  std::vector<double> neg(label.y.size());
  std::transform(label.y.begin(), label.y.end(), neg.begin(),
                 [](double v) { return 1.0 - v; });
  const tc::Tensor pos_term = tc::mul(tc::log(s), y);
  const tc::Tensor neg_term =
      tc::mul(tc::log(tc::add_scalar(tc::neg(s), 1.0)), tc::Tensor::vector(neg));
  return tc::neg(tc::sum(tc::add(pos_term, neg_term)));
}

}  // namespace cpe
