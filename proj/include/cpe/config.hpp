#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cpe/model.hpp"
#include "cpe/scene.hpp"

namespace cpe {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a training run needs: optimiser schedule, model, and the
/// synthetic data it trains and evaluates on.
struct TrainConfig {
  // Optimiser.
  double lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::size_t iterations = 500;
  std::size_t batch_size = 1;  // scenes per iteration
  std::size_t lr_drop_at = 300;
  double lr_drop_factor = 0.1;
  double grad_clip = 0.0;  // global gradient norm cap, 0 disables
  std::uint64_t seed = 0;

  // Evaluation.
  double nms_iou = 0.3;

  // Data.
  std::uint64_t dataset_seed = 0;
  std::size_t train_scenes = 20;
  std::size_t test_scenes = 20;
  SceneSpec scene;

  ModelConfig model;

  /// Copies shared fields (classes, channels) from the scene spec into the
  /// model config and checks both.
  void finalize();
};

/// Applies one `key = value` setting. Throws ConfigError on an unknown key or
/// a malformed value.
void apply_setting(TrainConfig& cfg, const std::string& key,
                   const std::string& value);

/// Parses flat `key = value` lines; `#` starts a comment.
TrainConfig parse_config(std::istream& in);
TrainConfig load_config(const std::filesystem::path& path);

/// All recognised keys, in documentation order.
const std::vector<std::string>& config_keys();

/// Seed of the held-out split generated alongside the training scenes.
std::uint64_t test_dataset_seed(std::uint64_t dataset_seed);

}  // namespace cpe
