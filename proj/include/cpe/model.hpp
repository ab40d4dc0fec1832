#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <vector>

#include "cpe/checkpoint.hpp"
#include "cpe/contrast.hpp"
#include "cpe/encoder.hpp"
#include "cpe/features.hpp"
#include "cpe/mil.hpp"
#include "cpe/scene.hpp"

namespace cpe {

/// Architecture and loss hyper-parameters of the detector.
struct ModelConfig {
  std::size_t num_classes = 3;
  std::size_t channels = 10;    // feature-map channels C_l
  std::size_t mil_hidden = 32;
  std::size_t hidden = 32;     // recurrent hidden size M
  std::size_t branches = 3;    // refinement branches K
  std::size_t roi_grid = 2;    // per-channel bins per side for MIL features
  PoolingSpec pooling;
  double t = 4.0;
  double alpha = 0.5;
  double tau = 0.1;
  double contrast_eps = 1e-12;
  /// Initial weight of each class's contrast column in the fusion linears.
  double contrast_init = 5.0;
  /// Enabled directions in the order R2L, L2R, T2B, B2T.
  std::array<bool, 4> directions = {true, true, true, true};
  bool ratio_scaling = true;
  bool cpe = true;
  bool attention = true;
  bool decoder = true;

  std::size_t feature_dim() const { return channels * roi_grid * roi_grid; }
  std::vector<Direction> enabled_directions() const;
  void validate() const;
};

/// Constant per-scene tensors derived once from the feature map and boxes.
struct SceneInputs {
  struct DirectionInputs {
    Direction direction;
    std::vector<tc::Tensor> initial_steps;  // base x [N, steps]
    std::vector<tc::Tensor> strip_steps;    // extra x [N, steps], zero-padded
    std::vector<double> has_strip;          // [N]
  };

  std::vector<Box> boxes;
  tc::Tensor features;  // [N, F]
  std::vector<DirectionInputs> directions;
};

SceneInputs prepare_inputs(const SyntheticScene& scene, const ModelConfig& cfg);

/// Per-channel RoI max pooling on a roi_grid x roi_grid grid, flattened to
/// [N, channels * roi_grid^2].
tc::Tensor proposal_features(const FeatureMap& fm, const std::vector<Box>& boxes,
                             std::size_t roi_grid);

struct ForwardResult {
  tc::Tensor x_s;                    // [N, C]
  tc::Tensor sigma;                  // [C]
  std::vector<tc::Tensor> phi;       // K x [N, C + 1]
  tc::Tensor contrast;               // fused, [N, C]
  std::optional<ContrastDump> dump;  // filled when requested
  // Losses; defined only when a label was supplied.
  tc::Tensor loss_cpe;               // undefined when CPE is off
  tc::Tensor loss_wsddn;
  std::vector<tc::Tensor> loss_refine;
  std::vector<std::vector<std::size_t>> pseudo_labels;
  tc::Tensor loss_total;

  /// Per-proposal class scores used for detection, [N, C] row-major: the
  /// mean of the column-peak-normalised basic scores and the object columns
  /// of the refinement branches.
  std::vector<double> detection_scores() const;
};

class CpeModel {
 public:
  CpeModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  /// Full forward pass. With a label, computes every loss term; pseudo-labels
  /// are derived from value snapshots of the previous stage.
  ForwardResult forward(const SceneInputs& in, const ImageLabel* label,
                        bool want_dump = false) const;

  /// Every tensor, named mil.* and dcpe.<dir>.*.
  NamedTensors named_parameters() const;
  /// Tensors the optimiser updates. Excludes the fusion layers when CPE is
  /// off, which keeps them at [identity | 0].
  std::vector<tc::Tensor> trainable_parameters() const;

  MilParams& mil() { return mil_; }
  const MilParams& mil() const { return mil_; }
  DcpeParams& dcpe(Direction d) { return dcpe_[static_cast<std::size_t>(d)]; }
  const DcpeParams& dcpe(Direction d) const {
    return dcpe_[static_cast<std::size_t>(d)];
  }

  /// Checkpoint: parameters plus "config.*" scalars describing the model.
  NamedTensors to_checkpoint() const;
  static CpeModel from_checkpoint(const NamedTensors& ckpt);

 private:
  ModelConfig cfg_;
  MilParams mil_;
  std::array<DcpeParams, 4> dcpe_;
};

}  // namespace cpe
