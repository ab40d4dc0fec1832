#include "cpe/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <ostream>
#include <string>
#include <thread>

namespace cpe {

std::vector<std::size_t> nms(const std::vector<Box>& boxes,
                             const std::vector<double>& scores,
                             double iou_threshold) {
  if (boxes.size() != scores.size()) {
    throw InvalidInput("nms: boxes and scores differ in length");
  }
  std::vector<std::size_t> order(boxes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  std::vector<std::size_t> kept;
  for (std::size_t i : order) {
    bool suppressed = false;
    for (std::size_t k : kept) {
      if (iou(boxes[i], boxes[k]) > iou_threshold) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(i);
  }
  return kept;
}

std::vector<Detection> detect(const std::vector<Box>& boxes,
                              const std::vector<double>& scores,
                              std::size_t num_classes, double iou_threshold) {
  if (scores.size() != boxes.size() * num_classes) {
    throw InvalidInput("detect: score matrix does not match boxes x classes");
  }
  std::vector<Detection> out;
  std::vector<double> column(boxes.size());
  for (std::size_t c = 0; c < num_classes; ++c) {
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      column[i] = scores[i * num_classes + c];
    }
    for (std::size_t i : nms(boxes, column, iou_threshold)) {
      out.push_back({boxes[i], c, column[i]});
    }
  }
  return out;
}

std::optional<double> average_precision(
    const std::vector<std::vector<Detection>>& detections,
    const std::vector<GroundTruth>& truths, std::size_t class_id) {
  if (detections.size() != truths.size()) {
    throw InvalidInput("average_precision: detections and truths differ in length");
  }
  struct Candidate {
    double score;
    std::size_t image;
    const Box* box;
  };
  std::vector<Candidate> cands;
  std::size_t positives = 0;
  for (std::size_t img = 0; img < truths.size(); ++img) {
    for (std::size_t c : truths[img].classes) positives += (c == class_id);
    for (const auto& d : detections[img]) {
      if (d.class_id == class_id) cands.push_back({d.score, img, &d.box});
    }
  }
  if (positives == 0) return std::nullopt;
  std::stable_sort(cands.begin(), cands.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });

  std::vector<std::vector<bool>> used(truths.size());
  for (std::size_t img = 0; img < truths.size(); ++img) {
    used[img].assign(truths[img].boxes.size(), false);
  }
  std::vector<double> recall, precision;
  std::size_t tp = 0;
  for (std::size_t r = 0; r < cands.size(); ++r) {
    const GroundTruth& gt = truths[cands[r].image];
    double best = 0.5;
    std::ptrdiff_t match = -1;
    for (std::size_t g = 0; g < gt.boxes.size(); ++g) {
      if (gt.classes[g] != class_id || used[cands[r].image][g]) continue;
      const double o = iou(*cands[r].box, gt.boxes[g]);
      if (o > best) best = o, match = static_cast<std::ptrdiff_t>(g);
    }
    if (match >= 0) {
      used[cands[r].image][static_cast<std::size_t>(match)] = true;
      ++tp;
    }
    recall.push_back(static_cast<double>(tp) / static_cast<double>(positives));
    precision.push_back(static_cast<double>(tp) / static_cast<double>(r + 1));
  }

  // Area under the precision envelope, summed over recall increments.
  for (std::size_t i = precision.size(); i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double ap = 0.0, prev_recall = 0.0;
  for (std::size_t i = 0; i < recall.size(); ++i) {
    ap += (recall[i] - prev_recall) * precision[i];
    prev_recall = recall[i];
  }
  return 100.0 * ap;
}

namespace {

template <class Fn>
std::optional<double> over_positive_images(
    const std::vector<std::vector<Box>>& proposals,
    const std::vector<std::vector<double>>& scores,
    const std::vector<GroundTruth>& truths, std::size_t num_classes,
    std::size_t class_id, Fn&& per_image) {
  if (proposals.size() != truths.size() || scores.size() != truths.size()) {
    throw InvalidInput("localisation metric: input lengths differ");
  }
  double total = 0.0;
  std::size_t images = 0;
  for (std::size_t img = 0; img < truths.size(); ++img) {
    const auto& gt = truths[img];
    if (std::find(gt.classes.begin(), gt.classes.end(), class_id) == gt.classes.end()) {
      continue;
    }
    const auto& boxes = proposals[img];
    if (boxes.empty()) {
      ++images;
      continue;
    }
    std::size_t top = 0;
    for (std::size_t i = 1; i < boxes.size(); ++i) {
      if (scores[img][i * num_classes + class_id] >
          scores[img][top * num_classes + class_id]) {
        top = i;
      }
    }
    double best = 0.0;
    for (std::size_t g = 0; g < gt.boxes.size(); ++g) {
      if (gt.classes[g] == class_id) best = std::max(best, iou(boxes[top], gt.boxes[g]));
    }
    total += per_image(best);
    ++images;
  }
  if (images == 0) return std::nullopt;
  return total / static_cast<double>(images);
}

}  // namespace

std::optional<double> corloc(const std::vector<std::vector<Box>>& proposals,
                             const std::vector<std::vector<double>>& scores,
                             const std::vector<GroundTruth>& truths,
                             std::size_t num_classes, std::size_t class_id) {
  auto r = over_positive_images(proposals, scores, truths, num_classes, class_id,
                                [](double best) { return best > 0.5 ? 1.0 : 0.0; });
  if (r) *r *= 100.0;
  return r;
}

std::optional<double> top_detection_iou(
    const std::vector<std::vector<Box>>& proposals,
    const std::vector<std::vector<double>>& scores,
    const std::vector<GroundTruth>& truths, std::size_t num_classes,
    std::size_t class_id) {
  return over_positive_images(proposals, scores, truths, num_classes, class_id,
                              [](double best) { return best; });
}

std::size_t thread_count() {
  if (const char* env = std::getenv("CPE_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && n >= 1) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

namespace {

std::optional<double> mean_defined(const std::vector<std::optional<double>>& xs) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& x : xs) {
    if (x) sum += *x, ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

}  // namespace

Metrics evaluate(const CpeModel& model,
                 const std::vector<SyntheticScene>& scenes, double nms_iou) {
  const std::size_t C = model.config().num_classes;
  const std::size_t n = scenes.size();
  std::vector<std::vector<Box>> proposals(n);
  std::vector<std::vector<double>> scores(n);
  std::vector<std::vector<Detection>> detections(n);
  std::vector<GroundTruth> truths(n);

  // Each worker owns a strided slice of images and writes only its own slots.
  auto work = [&](std::size_t first, std::size_t stride) {
    tc::NoGradGuard no_grad;
    for (std::size_t i = first; i < n; i += stride) {
      const SceneInputs in = prepare_inputs(scenes[i], model.config());
      scores[i] = model.forward(in, nullptr).detection_scores();
      proposals[i] = in.boxes;
      detections[i] = detect(in.boxes, scores[i], C, nms_iou);
      truths[i].boxes = scenes[i].gt_boxes;
      truths[i].classes.assign(scenes[i].gt_classes.begin(), scenes[i].gt_classes.end());
    }
  };
  const std::size_t workers = std::min(thread_count(), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work, w, workers);
    for (auto& t : pool) t.join();
  }

  Metrics m;
  m.per_class.resize(C);
  std::vector<std::optional<double>> aps, cls, ious;
  for (std::size_t c = 0; c < C; ++c) {
    auto& pc = m.per_class[c];
    pc.ap = average_precision(detections, truths, c);
    pc.corloc = corloc(proposals, scores, truths, C, c);
    pc.top_iou = top_detection_iou(proposals, scores, truths, C, c);
    aps.push_back(pc.ap);
    cls.push_back(pc.corloc);
    ious.push_back(pc.top_iou);
  }
  m.mean_ap = mean_defined(aps);
  m.mean_corloc = mean_defined(cls);
  m.mean_top_iou = mean_defined(ious);
  return m;
}

namespace {

std::string cell(const std::optional<double>& v, int decimals) {
  if (!v) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, *v);
  return buf;
}

}  // namespace

void write_metrics_csv(std::ostream& out, const Metrics& m) {
  out << "class,ap,corloc,top_iou\n";
  for (std::size_t c = 0; c < m.per_class.size(); ++c) {
    const auto& pc = m.per_class[c];
    out << c << ',' << cell(pc.ap, 4) << ',' << cell(pc.corloc, 4) << ','
        << cell(pc.top_iou, 6) << '\n';
  }
  out << "mean," << cell(m.mean_ap, 4) << ',' << cell(m.mean_corloc, 4) << ','
      << cell(m.mean_top_iou, 6) << '\n';
}

}  // namespace cpe
