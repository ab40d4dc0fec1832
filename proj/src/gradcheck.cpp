#include "cpe/gradcheck.hpp"

namespace cpe {

ToyProblem make_toy_problem(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t channels = 4, side = 12;
  std::vector<double> values(channels * side * side);
  for (auto& v : values) v = rng.uniform();
  FeatureMap fm(tc::Tensor({channels, side, side}, std::move(values)), 0.5);
  const ImageDims img = fm.image_dims();

  // Three overlapping proposals, one of them touching the right and bottom
  // borders so that two of its extensions are empty.
  std::vector<Box> boxes = {
      Box(2.5, 3.0, 9.0, 7.5),
      Box(4.0, 2.0, 11.0, 10.5),
      Box(14.0, 12.0, 10.0, 12.0),
  };
  SyntheticScene scene{fm, img, {boxes[0]}, {0}, boxes,
                       {ProposalKind::kJittered, ProposalKind::kJittered,
                        ProposalKind::kBackground},
                       {0, 0, -1}, ImageLabel{{1.0, 0.0}}};

  ModelConfig cfg;
  cfg.num_classes = 2;
  cfg.channels = channels;
  cfg.mil_hidden = 5;
  cfg.hidden = 3;
  cfg.branches = 2;
  cfg.roi_grid = 2;
  cfg.pooling = {3, 3, 2};
  cfg.directions = {false, true, true, false};
  cfg.validate();
  return {std::move(scene), cfg};
}

std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed, double eps) {
  std::vector<GradCheckResult> out;
  Rng rng(seed);

  {
    const std::size_t N = 3, len = 4, M = 3, C = 2;
    const DcpeParams p = DcpeParams::init(len, M, C, rng);
    std::vector<tc::Tensor> initial, strip;
    for (int s = 0; s < 3; ++s) initial.push_back(uniform_tensor({N, len}, 1.0, rng));
    for (int s = 0; s < 2; ++s) strip.push_back(uniform_tensor({N, len}, 1.0, rng));
    for (auto& t : initial) t.set_requires_grad(false);
    for (auto& t : strip) t.set_requires_grad(false);
    const std::vector<double> has_strip = {1.0, 0.0, 1.0};
    const ImageLabel label{{0.0, 1.0}};
    const tc::Tensor weights = uniform_tensor({N, C}, 1.0, rng).detach();
    auto f = [&] {
      const DcpeOutput o = dcpe_forward(p, initial, strip, has_strip, {}, &label);
      const tc::Tensor contrast = tc::abs(tc::sub(o.score_initial, o.score_extended));
      return tc::add(tc::add(tc::sum(tc::mul(contrast, weights)),
                             tc::sum(tc::mul(o.score_initial, weights))),
                     tc::add(o.loss_initial, o.loss_extended));
    };
    NamedTensors named;
    p.collect(named, "dcpe");
    std::vector<tc::Tensor> params;
    for (auto& [n, t] : named) params.push_back(t);
    out.push_back({"directional module", tc::grad_check(f, params, eps), params.size()});
  }

  {
    const ToyProblem toy = make_toy_problem(seed + 1);
    const CpeModel model(toy.config, seed + 2);
    const SceneInputs in = prepare_inputs(toy.scene, toy.config);
    auto f = [&] { return model.forward(in, &toy.scene.label).loss_total; };
    const auto params = model.trainable_parameters();
    out.push_back({"total loss", tc::grad_check(f, params, eps), params.size()});
  }
  return out;
}

}  // namespace cpe
