#include "cpe/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace cpe {

Sgd::Sgd(std::vector<tc::Tensor> params, double lr, double momentum,
         double weight_decay)
    : params_(std::move(params)),
      lr_(lr),
      momentum_(momentum),
      weight_decay_(weight_decay) {
  for (const auto& p : params_) velocity_.emplace_back(p.size(), 0.0);
}

void Sgd::step() {
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto w = params_[k].mutable_data();
    const std::vector<double> g = params_[k].grad();
    auto& v = velocity_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      v[i] = momentum_ * v[i] + g[i] + weight_decay_ * w[i];
      w[i] -= lr_ * v[i];
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double Sgd::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (const auto& p : params_) {
    for (double g : p.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const double f = max_norm / norm;
    for (auto& p : params_) {
      if (!p.has_grad()) continue;
      for (double& g : p.mutable_grad()) g *= f;
    }
  }
  return norm;
}

std::vector<SyntheticScene> training_scenes(const TrainConfig& cfg) {
  return generate_dataset(cfg.dataset_seed, cfg.train_scenes, cfg.scene);
}

std::vector<SyntheticScene> test_scenes(const TrainConfig& cfg) {
  return generate_dataset(test_dataset_seed(cfg.dataset_seed), cfg.test_scenes,
                          cfg.scene);
}

namespace {

struct Prepared {
  std::size_t index;
  SceneInputs inputs;
  const ImageLabel* label;
};

std::vector<Prepared> prepare_all(const ModelConfig& mc,
                                  const std::vector<SyntheticScene>& scenes) {
  std::vector<Prepared> out;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    if (!scenes[i].trainable()) continue;
    out.push_back({i, prepare_inputs(scenes[i], mc), &scenes[i].label});
  }
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& cfg,
                  const std::vector<SyntheticScene>& scenes,
                  const std::function<void(const LossRecord&)>& on_step) {
  TrainResult result{CpeModel(cfg.model, cfg.seed), {}};
  const std::vector<Prepared> data = prepare_all(cfg.model, scenes);
  if (data.empty()) throw InvalidInput("no trainable scenes in dataset");

  Sgd opt(result.model.trainable_parameters(), cfg.lr, cfg.momentum,
          cfg.weight_decay);
  Rng order_rng(cfg.seed ^ 0xA5A5A5A5ULL);
  std::vector<std::size_t> order(data.size());
  std::size_t cursor = order.size();

  const std::size_t batch = std::min(cfg.batch_size, data.size());
  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    if (it == cfg.lr_drop_at) opt.set_lr(cfg.lr * cfg.lr_drop_factor);
    opt.zero_grad();
    LossRecord rec;
    rec.iteration = it;
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == order.size()) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        for (std::size_t i = order.size(); i > 1; --i) {
          const auto j = static_cast<std::size_t>(
              order_rng.integer(0, static_cast<std::int64_t>(i) - 1));
          std::swap(order[i - 1], order[j]);
        }
        cursor = 0;
      }
      const Prepared& p = data[order[cursor++]];
      if (b == 0) rec.scene = p.index;

      // Gradients accumulate across the batch; each scene contributes 1/B.
      tc::Tape tape;
      const ForwardResult r = result.model.forward(p.inputs, p.label);
      const double w = 1.0 / static_cast<double>(batch);
      const double total = r.loss_total.item();
      if (!std::isfinite(total)) {
        std::ostringstream msg;
        msg << "loss diverged at iteration " << it << " (scene " << p.index
            << "): total=" << total
            << " cpe=" << (r.loss_cpe.defined() ? r.loss_cpe.item() : 0.0)
            << " wsddn=" << r.loss_wsddn.item();
        throw TrainingDiverged(msg.str());
      }
      rec.total += w * total;
      rec.cpe += w * (r.loss_cpe.defined() ? r.loss_cpe.item() : 0.0);
      rec.wsddn += w * r.loss_wsddn.item();
      rec.refine.resize(r.loss_refine.size(), 0.0);
      for (std::size_t k = 0; k < r.loss_refine.size(); ++k) {
        rec.refine[k] += w * r.loss_refine[k].item();
      }
      tape.backward(batch == 1 ? r.loss_total : tc::scale(r.loss_total, w));
    }
    if (cfg.grad_clip > 0) opt.clip_grad_norm(cfg.grad_clip);
    opt.step();
    if (on_step) on_step(rec);
    result.curve.push_back(std::move(rec));
  }
  return result;
}

double dataset_loss(const CpeModel& model,
                    const std::vector<SyntheticScene>& scenes) {
  tc::NoGradGuard no_grad;
  const std::vector<Prepared> data = prepare_all(model.config(), scenes);
  if (data.empty()) throw InvalidInput("no trainable scenes in dataset");
  double total = 0.0;
  for (const auto& p : data) {
    total += model.forward(p.inputs, p.label).loss_total.item();
  }
  return total / static_cast<double>(data.size());
}

}  // namespace cpe
