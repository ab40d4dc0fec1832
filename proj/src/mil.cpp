#include "cpe/mil.hpp"

#include <cmath>

namespace cpe {

MilParams MilParams::init(std::size_t feature_dim, std::size_t hidden_dim,
                          std::size_t num_classes, std::size_t branches,
                          Rng& rng, double contrast_init) {
  if (num_classes == 0 || branches == 0) {
    throw InvalidParameter("need at least one class and one refinement branch");
  }
  MilParams p;
  p.fc1 = Linear::init(hidden_dim, feature_dim, rng);
  p.fc2 = Linear::init(hidden_dim, hidden_dim, rng);
  p.cls = Linear::init(num_classes, hidden_dim, rng);
  p.dec = Linear::init(num_classes, hidden_dim, rng);
  for (Linear* f : {&p.fuse_cls, &p.fuse_dec}) {
    *f = Linear::zeros(num_classes, 2 * num_classes);
    auto w = f->weight.mutable_data();
    for (std::size_t c = 0; c < num_classes; ++c) {
      w[c * 2 * num_classes + c] = 1.0;
      w[c * 2 * num_classes + num_classes + c] = contrast_init;
    }
  }
  for (std::size_t k = 0; k < branches; ++k) {
    p.refine.push_back(Linear::init(num_classes + 1, hidden_dim, rng));
  }
  return p;
}

void MilParams::collect(NamedTensors& out, const std::string& prefix) const {
  fc1.collect(out, prefix + ".fc1");
  fc2.collect(out, prefix + ".fc2");
  cls.collect(out, prefix + ".cls");
  dec.collect(out, prefix + ".dec");
  collect_fusion(out, prefix);
  for (std::size_t k = 0; k < refine.size(); ++k) {
    refine[k].collect(out, prefix + ".refine" + std::to_string(k));
  }
}

void MilParams::collect_fusion(NamedTensors& out,
                               const std::string& prefix) const {
  fuse_cls.collect(out, prefix + ".fuse_cls");
  fuse_dec.collect(out, prefix + ".fuse_dec");
}

tc::Tensor proposal_embedding(const MilParams& p, const tc::Tensor& features) {
  if (features.rank() != 2 || features.dim(0) == 0) {
    throw InvalidInput("proposal features must be [N, F] with N >= 1");
  }
  return tc::tanh(p.fc2(tc::tanh(p.fc1(features))));
}

std::pair<tc::Tensor, tc::Tensor> mil_streams(const MilParams& p,
                                              const tc::Tensor& embedding) {
  return {p.cls(embedding), p.dec(embedding)};
}

std::pair<tc::Tensor, tc::Tensor> fuse_semantics(const MilParams& p,
                                                 const tc::Tensor& x_cls,
                                                 const tc::Tensor& x_dec,
                                                 const tc::Tensor& contrast) {
  if (x_cls.shape() != contrast.shape() || x_dec.shape() != contrast.shape()) {
    throw tc::ShapeError("fuse_semantics: stream and contrast shapes differ");
  }
  return {p.fuse_cls(tc::concat({x_cls, contrast}, 1)),
          p.fuse_dec(tc::concat({x_dec, contrast}, 1))};
}

ProposalScores proposal_and_image_scores(const tc::Tensor& x_rcls,
                                         const tc::Tensor& x_rdec) {
  if (x_rcls.shape() != x_rdec.shape() || x_rcls.rank() != 2) {
    throw tc::ShapeError("proposal scores: stream shapes differ");
  }
  const tc::Tensor x_s =
      tc::mul(tc::softmax_rows(x_rcls), tc::softmax_cols(x_rdec));
  return {x_s, tc::sum_axis(x_s, 0)};
}

tc::Tensor wsddn_loss(const tc::Tensor& sigma, const ImageLabel& label) {
  return image_bce(sigma, label);
}

tc::Tensor refinement_scores(const MilParams& p, std::size_t k,
                             const tc::Tensor& embedding) {
  return tc::softmax_rows(p.refine.at(k)(embedding));
}

std::vector<std::size_t> refine_labels(const tc::Tensor& scores,
                                       const std::vector<Box>& boxes,
                                       const ImageLabel& label, double tau) {
  label.validate();
  const std::size_t n = boxes.size();
  const std::size_t c = label.num_classes();
  if (n == 0) throw InvalidInput("refine_labels: no proposals");
  if (!(tau > 0.0 && tau < 1.0)) throw InvalidParameter("tau must lie in (0, 1)");
  if (!label.any_positive()) {
    throw InvalidInput("refine_labels: image has no positive class");
  }
  if (scores.rank() != 2 || scores.dim(0) != n || scores.dim(1) < c) {
    throw tc::ShapeError("refine_labels: scores " +
                         tc::shape_str(scores.shape()) + " for " +
                         std::to_string(n) + " proposals and " +
                         std::to_string(c) + " classes");
  }
  const std::size_t width = scores.dim(1);
  const auto s = scores.data();

  std::vector<std::size_t> labels(n, c);
  std::vector<double> best_overlap(n, -1.0);
  for (std::size_t cls = 0; cls < c; ++cls) {
    if (label.y[cls] != 1.0) continue;
    std::size_t seed = 0;
    for (std::size_t i = 1; i < n; ++i) {
      if (s[i * width + cls] > s[seed * width + cls]) seed = i;
    }
    for (std::size_t i = 0; i < n; ++i) {
      const double overlap = iou(boxes[i], boxes[seed]);
      // Classes are visited in increasing order, so strict > keeps the
      // lower index on ties.
      if (overlap > tau && overlap > best_overlap[i]) {
        best_overlap[i] = overlap;
        labels[i] = cls;
      }
    }
  }
  return labels;
}

tc::Tensor refinement_loss(const tc::Tensor& phi,
                           const std::vector<std::size_t>& labels) {
  if (phi.rank() != 2 || phi.dim(0) != labels.size() || labels.empty()) {
    throw tc::ShapeError("refinement_loss: one label per proposal required");
  }
  for (std::size_t l : labels) {
    if (l >= phi.dim(1)) throw InvalidInput("refinement label out of range");
  }
  const tc::Tensor picked = tc::clamp(tc::pick(phi, labels), 1e-300, 1.0);
  return tc::neg(tc::mean(tc::log(picked)));
}

tc::Tensor total_loss(const tc::Tensor& cpe, const tc::Tensor& wsddn,
                      const std::vector<tc::Tensor>& refinement) {
  tc::Tensor total = cpe.defined() ? tc::add(cpe, wsddn) : wsddn;
  for (const auto& r : refinement) total = tc::add(total, r);
  if (std::isnan(total.item())) throw std::domain_error("total loss is NaN");
  return total;
}

}  // namespace cpe
