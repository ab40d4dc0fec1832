#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

#include "cpe/geometry.hpp"
#include "cpe/model.hpp"
#include "cpe/scene.hpp"

namespace cpe {

struct Detection {
  Box box;
  std::size_t class_id = 0;
  double score = 0.0;
};

/// Greedy non-maximum suppression. Visits boxes by descending score (ties by
/// lower index) and drops any box whose IoU with a kept box exceeds
/// `iou_threshold`. Returns kept indices in visiting order.
std::vector<std::size_t> nms(const std::vector<Box>& boxes,
                             const std::vector<double>& scores,
                             double iou_threshold);

/// Per-class NMS over a proposal score matrix scores[N, C] (row-major).
std::vector<Detection> detect(const std::vector<Box>& boxes,
                              const std::vector<double>& scores,
                              std::size_t num_classes, double iou_threshold);

struct GroundTruth {
  std::vector<Box> boxes;
  std::vector<std::size_t> classes;
};

/// All-points interpolated average precision (percent) for one class.
/// A detection is a true positive when its IoU with an unmatched ground truth
/// box of the class exceeds 0.5; detections are matched greedily by score.
/// Returns nullopt when the class has no ground truth instance.
std::optional<double> average_precision(
    const std::vector<std::vector<Detection>>& detections,
    const std::vector<GroundTruth>& truths, std::size_t class_id);

/// Percentage of images containing the class whose top-scoring proposal for
/// that class overlaps some ground truth box of the class with IoU > 0.5.
std::optional<double> corloc(const std::vector<std::vector<Box>>& proposals,
                             const std::vector<std::vector<double>>& scores,
                             const std::vector<GroundTruth>& truths,
                             std::size_t num_classes, std::size_t class_id);

/// Mean, over images containing the class, of the best IoU between the top
/// scoring proposal and the ground truth boxes of that class.
std::optional<double> top_detection_iou(
    const std::vector<std::vector<Box>>& proposals,
    const std::vector<std::vector<double>>& scores,
    const std::vector<GroundTruth>& truths, std::size_t num_classes,
    std::size_t class_id);

struct ClassMetrics {
  std::optional<double> ap;
  std::optional<double> corloc;
  std::optional<double> top_iou;
};

struct Metrics {
  std::vector<ClassMetrics> per_class;
  std::optional<double> mean_ap;
  std::optional<double> mean_corloc;
  std::optional<double> mean_top_iou;
};

/// Scores every scene with the model and computes the metrics. Images are
/// scored in parallel (CPE_THREADS workers, default hardware concurrency);
/// results are reduced in image order, so the output does not depend on the
/// thread count.
Metrics evaluate(const CpeModel& model,
                 const std::vector<SyntheticScene>& scenes, double nms_iou);

/// Worker count from CPE_THREADS, falling back to hardware concurrency.
std::size_t thread_count();

/// CSV with header `class,ap,corloc,top_iou`, one row per class and a final
/// `mean` row. Undefined values are written as NA.
void write_metrics_csv(std::ostream& out, const Metrics& m);

}  // namespace cpe
