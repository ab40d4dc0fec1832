#include <gtest/gtest.h>

#include <cmath>

#include "cpe/encoder.hpp"
#include "cpe/geometry.hpp"

namespace tc = cpe::tc;

namespace {

void set(tc::Tensor& t, std::size_t i, double v) { t.mutable_data()[i] = v; }

std::vector<tc::Tensor> random_steps(cpe::Rng& rng, std::size_t n, std::size_t len,
                                     std::size_t count) {
  std::vector<tc::Tensor> out;
  for (std::size_t s = 0; s < count; ++s) out.push_back(cpe::uniform_tensor({n, len}, 1.0, rng));
  return out;
}

cpe::ImageLabel label(std::vector<double> y) { return cpe::ImageLabel{std::move(y)}; }

}  // namespace

TEST(LstmStep, ZeroParametersGiveZeroHidden) {
  const auto p = cpe::LstmParams::zeros(3, 4);
  const auto s = cpe::lstm_step(p, cpe::LstmState::zeros(2, 4),
                                tc::Tensor::matrix({{1, 2, 3}, {-1, 0, 5}}));
  for (double v : s.h.data()) EXPECT_EQ(v, 0.0);
  for (double v : s.c.data()) EXPECT_EQ(v, 0.0);
}

TEST(LstmStep, SaturatedGatesHandExample) {
  auto p = cpe::LstmParams::zeros(1, 1);
  // Gate rows: input, forget, output, candidate.
  set(p.b, 0, 60.0);
  set(p.b, 2, 60.0);
  set(p.W, 3, 1.0);
  const auto s = cpe::lstm_step(p, cpe::LstmState::zeros(1, 1), tc::Tensor::matrix({{1}}));
  EXPECT_NEAR(s.c[0], std::tanh(1.0), 1e-15);
  EXPECT_NEAR(s.h[0], std::tanh(std::tanh(1.0)), 1e-15);
  EXPECT_NEAR(s.h[0], 0.6421, 1e-4);
}

TEST(LstmStep, HiddenStaysInUnitBox) {
  cpe::Rng rng(11);
  auto p = cpe::LstmParams::init(4, 5, rng);
  for (double& w : p.W.mutable_data()) w *= 20;
  cpe::LstmState s = cpe::LstmState::zeros(3, 5);
  for (const auto& x : random_steps(rng, 3, 4, 10)) {
    s = cpe::lstm_step(p, s, x);
    for (double v : s.h.data()) EXPECT_LE(std::abs(v), 1.0);
  }
}

TEST(EncodeSequence, EmptySequenceReturnsInit) {
  cpe::Rng rng(1);
  const auto p = cpe::LstmParams::init(2, 3, rng);
  const auto init = cpe::LstmState{cpe::uniform_tensor({1, 3}, 1, rng),
                                   cpe::uniform_tensor({1, 3}, 1, rng)};
  const auto e = cpe::encode_sequence(p, {}, init);
  EXPECT_TRUE(e.hiddens.empty());
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(e.final.h[i], init.h[i]);
    EXPECT_EQ(e.final.c[i], init.c[i]);
  }
}

TEST(EncodeSequence, OneStepIsOneCellStep) {
  cpe::Rng rng(2);
  const auto p = cpe::LstmParams::init(2, 3, rng);
  const auto x = random_steps(rng, 2, 2, 1);
  const auto init = cpe::LstmState::zeros(2, 3);
  const auto e = cpe::encode_sequence(p, x, init);
  const auto s = cpe::lstm_step(p, init, x[0]);
  ASSERT_EQ(e.hiddens.size(), 1u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(e.final.h[i], s.h[i]);
}

TEST(EncodeSequence, PrefixThenContinueMatchesWhole) {
  cpe::Rng rng(3);
  const auto p = cpe::LstmParams::init(4, 6, rng);
  const auto steps = random_steps(rng, 5, 4, 10);
  const auto init = cpe::LstmState::zeros(5, 6);
  const auto whole = cpe::encode_sequence(p, steps, init);
  const std::vector<tc::Tensor> head(steps.begin(), steps.begin() + 7);
  const std::vector<tc::Tensor> tail(steps.begin() + 7, steps.end());
  const auto split = cpe::encode_sequence(p, tail, cpe::encode_sequence(p, head, init).final);
  for (std::size_t i = 0; i < 30; ++i) {
    EXPECT_NEAR(whole.final.h[i], split.final.h[i], 1e-12);
    EXPECT_NEAR(whole.final.c[i], split.final.c[i], 1e-12);
  }
}

TEST(AttentionPool, SingleStepIsValueProjection) {
  cpe::Rng rng(4);
  const auto a = cpe::AttentionParams::init(3, rng);
  const tc::Tensor h = cpe::uniform_tensor({2, 3}, 1, rng);
  const tc::Tensor out = cpe::attention_pool(a, {h});
  const tc::Tensor want = tc::matmul(h, tc::transpose(a.Wv));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(out[i], want[i], 1e-15);
}

TEST(AttentionPool, IdenticalStepsMatchSingleStep) {
  cpe::Rng rng(5);
  const auto a = cpe::AttentionParams::init(3, rng);
  const tc::Tensor h = cpe::uniform_tensor({2, 3}, 1, rng);
  const tc::Tensor one = cpe::attention_pool(a, {h});
  const tc::Tensor four = cpe::attention_pool(a, {h, h, h, h});
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(one[i], four[i], 1e-15);
}

TEST(AttentionPool, TwoStepScalarHandExample) {
  cpe::AttentionParams a{tc::Tensor::matrix({{0.5}}), tc::Tensor::matrix({{2.0}}),
                         tc::Tensor::matrix({{3.0}})};
  const double h1 = 1.0, h2 = -0.5;
  const tc::Tensor out =
      cpe::attention_pool(a, {tc::Tensor::matrix({{h1}}), tc::Tensor::matrix({{h2}})});
  // Row i weights softmax_j(q_i k_j), q = 0.5 h, k = 2 h, v = 3 h.
  auto row = [&](double hi) {
    const double l1 = 0.5 * hi * 2 * h1, l2 = 0.5 * hi * 2 * h2;
    const double w1 = std::exp(l1) / (std::exp(l1) + std::exp(l2));
    return w1 * 3 * h1 + (1 - w1) * 3 * h2;
  };
  EXPECT_NEAR(out[0], 0.5 * (row(h1) + row(h2)), 1e-15);
}

TEST(SemanticScore, ZeroHeadGivesOneHalf) {
  cpe::Rng rng(6);
  auto head = cpe::DcpeHead::init(3, 2, rng);
  head.score = cpe::Linear::zeros(2, 3);
  const tc::Tensor s = cpe::semantic_score(head, cpe::uniform_tensor({4, 3}, 1, rng));
  for (double v : s.data()) EXPECT_EQ(v, 0.5);
}

TEST(SemanticScore, BiasLogThreeGivesThreeQuarters) {
  cpe::Rng rng(7);
  auto head = cpe::DcpeHead::init(3, 2, rng);
  head.score = cpe::Linear::zeros(2, 3);
  set(head.score.bias, 1, std::log(3.0));
  const tc::Tensor s = cpe::semantic_score(head, cpe::uniform_tensor({1, 3}, 1, rng));
  EXPECT_EQ(s[0], 0.5);
  EXPECT_NEAR(s[1], 0.75, 1e-15);
}

TEST(Decoder, ZeroWeightsGiveUniformScores) {
  cpe::Rng rng(8);
  auto head = cpe::DcpeHead::init(3, 2, rng);
  head.cls = cpe::Linear::zeros(2, 3);
  head.dec = cpe::Linear::zeros(2, 3);
  const auto out = cpe::decoder_forward(head, cpe::uniform_tensor({4, 3}, 1, rng), label({1, 0}));
  EXPECT_NEAR(out.image_scores[0], 0.5, 1e-15);
  EXPECT_NEAR(out.image_scores[1], 0.5, 1e-15);
  EXPECT_NEAR(out.loss.item(), -2 * std::log(0.5), 1e-12);
  EXPECT_NEAR(out.loss.item(), 1.3863, 1e-4);
}

TEST(Decoder, RejectsNonBinaryLabels) {
  cpe::Rng rng(9);
  const auto head = cpe::DcpeHead::init(3, 2, rng);
  EXPECT_THROW(cpe::decoder_forward(head, cpe::uniform_tensor({2, 3}, 1, rng), label({0.5, 1})),
               cpe::InvalidInput);
}

TEST(Decoder, ScoresStayInUnitInterval) {
  cpe::Rng rng(10);
  for (int i = 0; i < 50; ++i) {
    auto head = cpe::DcpeHead::init(4, 3, rng);
    const auto out = cpe::decoder_forward(head, cpe::uniform_tensor({6, 4}, 5, rng),
                                          label({1, 0, 1}));
    for (double v : out.image_scores.data()) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0 + 1e-12);
    }
  }
}

TEST(DcpeForward, EmptyStripLeavesExtendedScoreEqual) {
  cpe::Rng rng(12);
  const auto p = cpe::DcpeParams::init(3, 4, 2, rng);
  const auto init = random_steps(rng, 2, 3, 4);
  const auto strip = random_steps(rng, 2, 3, 2);
  const auto out = cpe::dcpe_forward(p, init, strip, {0.0, 1.0}, {}, nullptr);
  EXPECT_EQ(out.score_initial.at(0, 0), out.score_extended.at(0, 0));
  EXPECT_EQ(out.score_initial.at(0, 1), out.score_extended.at(0, 1));
  EXPECT_NE(out.score_initial.at(1, 0), out.score_extended.at(1, 0));
  EXPECT_FALSE(out.loss_initial.defined());
}

TEST(DcpeForward, GradientMatchesFiniteDifferences) {
  cpe::Rng rng(13);
  const auto p = cpe::DcpeParams::init(3, 3, 2, rng);
  const auto init = random_steps(rng, 3, 3, 3);
  const auto strip = random_steps(rng, 3, 3, 2);
  const auto y = label({1, 0});
  std::vector<tc::Tensor> params;
  cpe::NamedTensors named;
  p.collect(named, "d");
  for (auto& [name, t] : named) {
    t.set_requires_grad(true);
    params.push_back(t);
  }
  const double err = tc::grad_check(
      [&] {
        const auto out = cpe::dcpe_forward(p, init, strip, {1, 0, 1}, {}, &y);
        return tc::add(tc::add(tc::sum(out.score_initial), tc::sum(out.score_extended)),
                       tc::add(out.loss_initial, out.loss_extended));
      },
      params);
  EXPECT_LT(err, 1e-6);
}
