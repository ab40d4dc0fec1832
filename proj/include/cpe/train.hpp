#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "cpe/config.hpp"
#include "cpe/model.hpp"
#include "cpe/scene.hpp"

namespace cpe {

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// SGD with heavy-ball momentum and L2 weight decay:
///   v <- momentum * v + (g + weight_decay * w);  w <- w - lr * v
class Sgd {
 public:
  Sgd(std::vector<tc::Tensor> params, double lr, double momentum,
      double weight_decay);

  void step();
  void zero_grad();
  /// Rescales all gradients so their joint L2 norm is at most max_norm.
  /// Returns the norm before rescaling.
  double clip_grad_norm(double max_norm);
  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  std::vector<tc::Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double lr_, momentum_, weight_decay_;
};

struct LossRecord {
  std::size_t iteration = 0;
  std::size_t scene = 0;  // first scene of the batch
  double total = 0;
  double cpe = 0;
  double wsddn = 0;
  std::vector<double> refine;
};

struct TrainResult {
  CpeModel model;
  std::vector<LossRecord> curve;
};

/// Trains on `scenes` for cfg.iterations steps of cfg.batch_size scenes each,
/// visiting the scenes in a seeded per-epoch shuffle. Losses in the curve are
/// batch means. Scenes without a positive class
/// are skipped. Throws TrainingDiverged on a non-finite loss.
TrainResult train(const TrainConfig& cfg,
                  const std::vector<SyntheticScene>& scenes,
                  const std::function<void(const LossRecord&)>& on_step = {});

/// Mean total loss over the trainable scenes, evaluated without recording.
double dataset_loss(const CpeModel& model,
                    const std::vector<SyntheticScene>& scenes);

/// Train and test splits described by a config.
std::vector<SyntheticScene> training_scenes(const TrainConfig& cfg);
std::vector<SyntheticScene> test_scenes(const TrainConfig& cfg);

}  // namespace cpe
