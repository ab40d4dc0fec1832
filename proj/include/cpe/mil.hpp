#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "cpe/checkpoint.hpp"
#include "cpe/geometry.hpp"
#include "cpe/losses.hpp"
#include "cpe/params.hpp"
#include "cpe/tensor.hpp"

namespace cpe {

/// Trainable parts of the dual-stream MIL detector with refinement branches.
struct MilParams {
  Linear fc1;                  // [H, F]
  Linear fc2;                  // [H, H]
  Linear cls;                  // [C, H]
  Linear dec;                  // [C, H]
  Linear fuse_cls;             // [C, 2C]
  Linear fuse_dec;             // [C, 2C]
  std::vector<Linear> refine;  // K x [C + 1, H]

  /// Random MLP and heads. Each fusion layer starts as the identity on its
  /// stream plus `contrast_init` times the identity on the contrast block.
  static MilParams init(std::size_t feature_dim, std::size_t hidden_dim,
                        std::size_t num_classes, std::size_t branches,
                        Rng& rng, double contrast_init = 0.0);

  std::size_t num_classes() const { return cls.out_dim(); }
  std::size_t branches() const { return refine.size(); }

  void collect(NamedTensors& out, const std::string& prefix) const;
  /// Fusion layer tensors only.
  void collect_fusion(NamedTensors& out, const std::string& prefix) const;
};

/// Shared proposal embedding tanh(fc2(tanh(fc1(features)))), [N, H]. A
/// saturating activation keeps every unit alive when the contrast input
/// alone can drive the MIL scores.
tc::Tensor proposal_embedding(const MilParams& p, const tc::Tensor& features);

/// Raw class and detection logits from the shared embedding, each [N, C].
std::pair<tc::Tensor, tc::Tensor> mil_streams(const MilParams& p,
                                              const tc::Tensor& embedding);

/// Appends the contrast matrix to each stream along the class axis and maps
/// back to width C with the stream's fusion layer.
std::pair<tc::Tensor, tc::Tensor> fuse_semantics(const MilParams& p,
                                                 const tc::Tensor& x_cls,
                                                 const tc::Tensor& x_dec,
                                                 const tc::Tensor& contrast);

struct ProposalScores {
  tc::Tensor x_s;    // [N, C]
  tc::Tensor sigma;  // [C]
};

/// x_s = softmax over classes of x_rcls times softmax over proposals of
/// x_rdec; sigma sums x_s over proposals.
ProposalScores proposal_and_image_scores(const tc::Tensor& x_rcls,
                                         const tc::Tensor& x_rdec);

tc::Tensor wsddn_loss(const tc::Tensor& sigma, const ImageLabel& label);

/// Refinement branch k: softmax over C + 1 columns (background last).
tc::Tensor refinement_scores(const MilParams& p, std::size_t k,
                             const tc::Tensor& embedding);

/// Pseudo-labels for a refinement branch. For each positive class the
/// highest-scoring proposal (first on ties) seeds it; proposals overlapping
/// a seed with IoU > tau take its class, preferring the seed with larger
/// IoU and then the lower class index. Everything else gets background,
/// index C. `scores` is an [N, C] value snapshot; extra columns beyond C are
/// ignored.
std::vector<std::size_t> refine_labels(const tc::Tensor& scores,
                                       const std::vector<Box>& boxes,
                                       const ImageLabel& label, double tau);

/// -(1/N) sum_r log phi[r, label_r].
tc::Tensor refinement_loss(const tc::Tensor& phi,
                           const std::vector<std::size_t>& labels);

/// L_CPE + L_W + sum_k L_r^k. An undefined L_CPE counts as zero.
tc::Tensor total_loss(const tc::Tensor& cpe, const tc::Tensor& wsddn,
                      const std::vector<tc::Tensor>& refinement);

}  // namespace cpe
