#include "cpe/encoder.hpp"

#include <cmath>

#include "cpe/geometry.hpp"

namespace cpe {

LstmParams LstmParams::init(std::size_t input_dim, std::size_t hidden_dim,
                            Rng& rng) {
  if (input_dim == 0 || hidden_dim == 0) {
    throw InvalidParameter("LSTM dims must be positive");
  }
  const double in_bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
  const double hid_bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  LstmParams p;
  p.W = uniform_tensor({4 * hidden_dim, input_dim}, in_bound, rng);
  p.U = uniform_tensor({4 * hidden_dim, hidden_dim}, hid_bound, rng);
  p.b = uniform_tensor({4 * hidden_dim}, hid_bound, rng);
  auto b = p.b.mutable_data();
  for (std::size_t i = hidden_dim; i < 2 * hidden_dim; ++i) b[i] = 1.0;
  return p;
}

LstmParams LstmParams::zeros(std::size_t input_dim, std::size_t hidden_dim) {
  return {tc::Tensor::zeros({4 * hidden_dim, input_dim}, true),
          tc::Tensor::zeros({4 * hidden_dim, hidden_dim}, true),
          tc::Tensor::zeros({4 * hidden_dim}, true)};
}

void LstmParams::collect(NamedTensors& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".W", W);
  out.emplace_back(prefix + ".U", U);
  out.emplace_back(prefix + ".b", b);
}

LstmState LstmState::zeros(std::size_t batch, std::size_t hidden_dim) {
  return {tc::Tensor::zeros({batch, hidden_dim}),
          tc::Tensor::zeros({batch, hidden_dim})};
}

namespace {

void check_step(const LstmParams& p, const LstmState& s, const tc::Tensor& x) {
  const std::size_t m = p.hidden_dim();
  if (x.rank() != 2 || x.dim(1) != p.input_dim()) {
    throw tc::ShapeError("lstm_step: input " + tc::shape_str(x.shape()) +
                         " for input_dim " + std::to_string(p.input_dim()));
  }
  const tc::Shape want{x.dim(0), m};
  if (s.h.shape() != want || s.c.shape() != want) {
    throw tc::ShapeError("lstm_step: state shape does not match " +
                         tc::shape_str(want));
  }
}

LstmState step_with(const tc::Tensor& Wt, const tc::Tensor& Ut,
                    const tc::Tensor& b, std::size_t m, const LstmState& s,
                    const tc::Tensor& x) {
  const tc::Tensor gates =
      tc::add(tc::add(tc::matmul(x, Wt), tc::matmul(s.h, Ut)), b);
  const tc::Tensor i = tc::sigmoid(tc::slice(gates, 1, 0, m));
  const tc::Tensor f = tc::sigmoid(tc::slice(gates, 1, m, 2 * m));
  const tc::Tensor o = tc::sigmoid(tc::slice(gates, 1, 2 * m, 3 * m));
  const tc::Tensor g = tc::tanh(tc::slice(gates, 1, 3 * m, 4 * m));
  const tc::Tensor c = tc::add(tc::mul(f, s.c), tc::mul(i, g));
  return {tc::mul(o, tc::tanh(c)), c};
}

}  // namespace

LstmState lstm_step(const LstmParams& p, const LstmState& s,
                    const tc::Tensor& x) {
  check_step(p, s, x);
  return step_with(tc::transpose(p.W), tc::transpose(p.U), p.b, p.hidden_dim(),
                   s, x);
}

Encoding encode_sequence(const LstmParams& p,
                         const std::vector<tc::Tensor>& steps,
                         const LstmState& init) {
  Encoding enc{init, {}};
  if (steps.empty()) return enc;
  const tc::Tensor Wt = tc::transpose(p.W);
  const tc::Tensor Ut = tc::transpose(p.U);
  enc.hiddens.reserve(steps.size());
  for (const auto& x : steps) {
    check_step(p, enc.final, x);
    enc.final = step_with(Wt, Ut, p.b, p.hidden_dim(), enc.final, x);
    enc.hiddens.push_back(enc.final.h);
  }
  return enc;
}

AttentionParams AttentionParams::init(std::size_t hidden_dim, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_dim));
  return {uniform_tensor({hidden_dim, hidden_dim}, bound, rng),
          uniform_tensor({hidden_dim, hidden_dim}, bound, rng),
          uniform_tensor({hidden_dim, hidden_dim}, bound, rng)};
}

void AttentionParams::collect(NamedTensors& out,
                              const std::string& prefix) const {
  out.emplace_back(prefix + ".Wq", Wq);
  out.emplace_back(prefix + ".Wk", Wk);
  out.emplace_back(prefix + ".Wv", Wv);
}

tc::Tensor attention_pool(const AttentionParams& p,
                          const std::vector<tc::Tensor>& hiddens) {
  if (hiddens.empty()) throw InvalidInput("attention_pool: no hidden states");
  const std::size_t n = hiddens.front().dim(0);
  const std::size_t m = hiddens.front().dim(1);
  const std::size_t t = hiddens.size();
  if (p.Wq.shape() != tc::Shape{m, m}) {
    throw tc::ShapeError("attention_pool: projection does not match M=" +
                         std::to_string(m));
  }
  const tc::Tensor flat = tc::reshape(tc::stack(hiddens, 1), {n * t, m});
  auto project = [&](const tc::Tensor& W) {
    return tc::reshape(tc::matmul(flat, tc::transpose(W)), {n, t, m});
  };
  const tc::Tensor q = project(p.Wq);
  const tc::Tensor k = project(p.Wk);
  const tc::Tensor v = project(p.Wv);
  const tc::Tensor logits = tc::scale(tc::matmul(q, tc::transpose(k)),
                                      1.0 / std::sqrt(static_cast<double>(m)));
  const tc::Tensor weights = tc::softmax(logits, 2);
  return tc::mean_axis(tc::matmul(weights, v), 1);
}

DcpeHead DcpeHead::init(std::size_t hidden_dim, std::size_t num_classes,
                        Rng& rng) {
  DcpeHead h;
  h.attention = AttentionParams::init(hidden_dim, rng);
  h.score = Linear::init(num_classes, hidden_dim, rng);
  h.cls = Linear::init(num_classes, hidden_dim, rng);
  h.dec = Linear::init(num_classes, hidden_dim, rng);
  return h;
}

void DcpeHead::collect(NamedTensors& out, const std::string& prefix) const {
  attention.collect(out, prefix + ".attention");
  score.collect(out, prefix + ".score");
  cls.collect(out, prefix + ".cls");
  dec.collect(out, prefix + ".dec");
}

tc::Tensor semantic_score(const DcpeHead& head, const tc::Tensor& pooled) {
  return tc::sigmoid(head.score(pooled));
}

DecoderOutput decoder_forward(const DcpeHead& head, const tc::Tensor& D,
                              const ImageLabel& label) {
  if (D.rank() != 2 || D.dim(0) == 0) {
    throw InvalidInput("decoder_forward: need at least one proposal");
  }
  label.validate();
  const tc::Tensor cls = tc::softmax_rows(head.cls(D));
  const tc::Tensor det = tc::softmax_cols(head.dec(D));
  const tc::Tensor scores = tc::sum_axis(tc::mul(cls, det), 0);
  return {scores, image_bce(scores, label)};
}

DcpeParams DcpeParams::init(std::size_t step_len, std::size_t hidden_dim,
                            std::size_t num_classes, Rng& rng) {
  DcpeParams p;
  p.lstm = LstmParams::init(step_len, hidden_dim, rng);
  p.head = DcpeHead::init(hidden_dim, num_classes, rng);
  return p;
}

void DcpeParams::collect(NamedTensors& out, const std::string& prefix) const {
  lstm.collect(out, prefix + ".lstm");
  head.collect(out, prefix);
}

DcpeOutput dcpe_forward(const DcpeParams& p,
                        const std::vector<tc::Tensor>& initial_steps,
                        const std::vector<tc::Tensor>& strip_steps,
                        const std::vector<double>& has_strip,
                        const DcpeOptions& opts, const ImageLabel* label) {
  if (initial_steps.empty()) throw InvalidInput("dcpe_forward: no steps");
  const std::size_t n = initial_steps.front().dim(0);
  const std::size_t m = p.lstm.hidden_dim();
  if (has_strip.size() != n) {
    throw tc::ShapeError("dcpe_forward: strip mask length differs from N");
  }
  const Encoding init_enc =
      encode_sequence(p.lstm, initial_steps, LstmState::zeros(n, m));
  const Encoding strip_enc =
      encode_sequence(p.lstm, strip_steps, init_enc.final);

  auto summarize = [&](const Encoding& e, const std::vector<tc::Tensor>& hs) {
    return opts.attention ? attention_pool(p.head.attention, hs) : e.final.h;
  };
  const tc::Tensor d_initial = summarize(init_enc, init_enc.hiddens);
  tc::Tensor d_extended = d_initial;
  if (!strip_steps.empty()) {
    std::vector<tc::Tensor> all = init_enc.hiddens;
    all.insert(all.end(), strip_enc.hiddens.begin(), strip_enc.hiddens.end());
    const tc::Tensor cont = summarize(strip_enc, all);
    std::vector<double> keep(n * m), fallback(n * m);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) {
        keep[i * m + j] = has_strip[i];
        fallback[i * m + j] = 1.0 - has_strip[i];
      }
    }
    d_extended =
        tc::add(tc::mul(cont, tc::Tensor({n, m}, std::move(keep))),
                tc::mul(d_initial, tc::Tensor({n, m}, std::move(fallback))));
  }

  DcpeOutput out;
  out.score_initial = semantic_score(p.head, d_initial);
  out.score_extended = semantic_score(p.head, d_extended);
  if (opts.decoder && label != nullptr) {
    out.loss_initial = decoder_forward(p.head, d_initial, *label).loss;
    out.loss_extended = decoder_forward(p.head, d_extended, *label).loss;
  }
  return out;
}

}  // namespace cpe
