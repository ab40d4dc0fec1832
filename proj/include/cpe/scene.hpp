#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cpe/features.hpp"
#include "cpe/geometry.hpp"
#include "cpe/losses.hpp"

namespace cpe {

/// Knobs of the synthetic benchmark. Each object is a rectangle carrying its
/// class signature, with a discriminative end (`part_fraction` of its length
/// along one axis) whose signature is stronger.
struct SceneSpec {
  std::size_t classes = 3;
  std::size_t objects = 2;
  std::size_t distractors = 2;
  std::size_t image_size = 64;     // pixels, square
  std::size_t feature_stride = 2;  // pixels per feature cell
  std::size_t channels = 10;
  double min_object = 18;          // pixels
  double max_object = 30;
  double part_fraction = 0.35;
  double body_level = 1.0;
  double part_level = 2.0;
  bool central_parts = true;   // part at the centre instead of one end
  /// Class c paints at (1 + class_gain * c) times the base levels, so classes
  /// stay distinguishable after channel averaging.
  double class_gain = 1.0;
  double noise = 0.1;
  std::size_t jittered_boxes = 3;  // per object
  std::size_t part_boxes = 2;      // per object
  std::size_t background_boxes = 8;
  double background_max_iou = 0.05;  // cap on a background box's IoU with objects

  void validate() const;
};

enum class ProposalKind { kJittered, kPart, kBackground, kDistractor };

struct SyntheticScene {
  FeatureMap features;
  ImageDims image;
  std::vector<Box> gt_boxes;
  std::vector<int> gt_classes;
  std::vector<Box> proposals;
  std::vector<ProposalKind> kinds;      // parallel to proposals
  std::vector<int> proposal_parent;     // source object index, -1 for none
  ImageLabel label;

  bool trainable() const { return label.any_positive(); }
};

SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec);

/// Scene `index` of the dataset rooted at `seed`.
std::uint64_t scene_seed(std::uint64_t dataset_seed, std::size_t index);

std::vector<SyntheticScene> generate_dataset(std::uint64_t dataset_seed,
                                             std::size_t count,
                                             const SceneSpec& spec);

// On-disk layout of a dataset directory:
//   manifest.txt           `scenes <n>` and `classes <C>`
//   scene_<i>.feat         checkpoint-format file with tensors "features"
//                          [C, H, W] and "spatial_scale" [1]
//   scene_<i>.gt           box text, class id per line
//   scene_<i>.proposals    box text
void save_dataset(const std::filesystem::path& dir,
                  const std::vector<SyntheticScene>& scenes);
std::vector<SyntheticScene> load_dataset(const std::filesystem::path& dir);

}  // namespace cpe
