#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cpe/checkpoint.hpp"
#include "cpe/losses.hpp"
#include "cpe/params.hpp"
#include "cpe/tensor.hpp"

namespace cpe {

/// LSTM cell. Gate blocks are stacked in the order input, forget, output,
/// candidate: W [4M, in], U [4M, M], b [4M].
struct LstmParams {
  tc::Tensor W;
  tc::Tensor U;
  tc::Tensor b;

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, forget bias +1.
  static LstmParams init(std::size_t input_dim, std::size_t hidden_dim,
                         Rng& rng);
  static LstmParams zeros(std::size_t input_dim, std::size_t hidden_dim);

  std::size_t input_dim() const { return W.dim(1); }
  std::size_t hidden_dim() const { return U.dim(1); }

  void collect(NamedTensors& out, const std::string& prefix) const;
};

/// Hidden and cell state for a batch of N sequences, each [N, M].
struct LstmState {
  tc::Tensor h;
  tc::Tensor c;

  static LstmState zeros(std::size_t batch, std::size_t hidden_dim);
};

/// One recurrent step for a batch of inputs x [N, in].
LstmState lstm_step(const LstmParams& p, const LstmState& s,
                    const tc::Tensor& x);

struct Encoding {
  LstmState final;
  std::vector<tc::Tensor> hiddens;  // per step, [N, M]
};

/// Folds lstm_step over `steps` from `init`. An empty sequence returns `init`
/// and no hiddens.
Encoding encode_sequence(const LstmParams& p,
                         const std::vector<tc::Tensor>& steps,
                         const LstmState& init);

/// Single-head self-attention over steps, projections without bias.
struct AttentionParams {
  tc::Tensor Wq, Wk, Wv;  // each [M, M]

  static AttentionParams init(std::size_t hidden_dim, Rng& rng);
  void collect(NamedTensors& out, const std::string& prefix) const;
};

/// Scaled dot-product self-attention across the per-step hiddens (scale
/// 1/sqrt(M)) followed by the unweighted mean over steps. [N, M] out.
tc::Tensor attention_pool(const AttentionParams& p,
                          const std::vector<tc::Tensor>& hiddens);

/// Per-direction head: attention, the semantic-score layer, and the
/// dual-stream decoder.
struct DcpeHead {
  AttentionParams attention;
  Linear score;  // [C, M]
  Linear cls;    // [C, M]
  Linear dec;    // [C, M]

  static DcpeHead init(std::size_t hidden_dim, std::size_t num_classes,
                       Rng& rng);
  void collect(NamedTensors& out, const std::string& prefix) const;
};

/// sigmoid(score(pooled)), [N, C] with entries in (0, 1).
tc::Tensor semantic_score(const DcpeHead& head, const tc::Tensor& pooled);

struct DecoderOutput {
  tc::Tensor image_scores;  // [C]
  tc::Tensor loss;          // scalar
};

/// Dual-stream decoder on per-proposal encodings D [N, M]: class softmax per
/// proposal times proposal softmax per class, summed over proposals, scored
/// with the image-level cross-entropy.
DecoderOutput decoder_forward(const DcpeHead& head, const tc::Tensor& D,
                              const ImageLabel& label);

/// One directional module: a shared recurrent cell for the proposal and its
/// extension, plus its head.
struct DcpeParams {
  LstmParams lstm;
  DcpeHead head;

  static DcpeParams init(std::size_t step_len, std::size_t hidden_dim,
                         std::size_t num_classes, Rng& rng);
  void collect(NamedTensors& out, const std::string& prefix) const;
};

struct DcpeOptions {
  bool attention = true;
  bool decoder = true;
};

struct DcpeOutput {
  tc::Tensor score_initial;   // S^B    [N, C]
  tc::Tensor score_extended;  // S^B_L  [N, C]
  tc::Tensor loss_initial;    // decoder loss on the proposal encoder
  tc::Tensor loss_extended;   // decoder loss on the extension encoder
};

/// Runs one directional module for a batch of N proposals.
///
/// `initial_steps` are the oriented proposal steps ([N, len] each);
/// `strip_steps` continue them across the extension strip. `has_strip` [N]
/// is 1 for proposals whose extension is non-empty; for the others the
/// strip steps are padding and their extended encoding equals the initial
/// one. Without a label the decoder losses are left undefined.
DcpeOutput dcpe_forward(const DcpeParams& p,
                        const std::vector<tc::Tensor>& initial_steps,
                        const std::vector<tc::Tensor>& strip_steps,
                        const std::vector<double>& has_strip,
                        const DcpeOptions& opts, const ImageLabel* label);

}  // namespace cpe
