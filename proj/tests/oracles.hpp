// Brute-force reference implementations used to cross-check the library.
// They follow the textbook definitions directly and share no code with it
// beyond Box and iou.

#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <tuple>
#include <vector>

#include "cpe/eval.hpp"
#include "cpe/geometry.hpp"

namespace oracle {

/// Pseudo-labels: collect every (overlap, class) candidate a proposal
/// qualifies for and keep the best after sorting.
inline std::vector<std::size_t> refine_labels(const std::vector<double>& scores,
                                              std::size_t width,
                                              const std::vector<cpe::Box>& boxes,
                                              const std::vector<double>& y,
                                              double tau) {
  const std::size_t n = boxes.size();
  const std::size_t c = y.size();
  std::vector<std::size_t> seed(c, 0);
  for (std::size_t cls = 0; cls < c; ++cls) {
    double best = scores[cls];
    for (std::size_t i = 0; i < n; ++i) {
      if (scores[i * width + cls] > best) best = scores[i * width + cls], seed[cls] = i;
    }
  }
  std::vector<std::size_t> out(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<std::pair<double, std::size_t>> cands;
    for (std::size_t cls = 0; cls < c; ++cls) {
      if (y[cls] != 1.0) continue;
      const double o = cpe::iou(boxes[i], boxes[seed[cls]]);
      if (o > tau) cands.emplace_back(o, cls);
    }
    if (cands.empty()) continue;
    std::sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    out[i] = cands.front().second;
  }
  return out;
}

/// NMS by repeated selection: take the best undecided box, keep it, and
/// discard everything undecided that overlaps it.
inline std::vector<std::size_t> nms(const std::vector<cpe::Box>& boxes,
                                    const std::vector<double>& scores, double thr) {
  std::vector<bool> open(boxes.size(), true);
  std::vector<std::size_t> kept;
  for (;;) {
    std::ptrdiff_t best = -1;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (open[i] && (best < 0 || scores[i] > scores[static_cast<std::size_t>(best)])) {
        best = static_cast<std::ptrdiff_t>(i);
      }
    }
    if (best < 0) return kept;
    const auto b = static_cast<std::size_t>(best);
    kept.push_back(b);
    open[b] = false;
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      if (open[i] && cpe::iou(boxes[i], boxes[b]) > thr) open[i] = false;
    }
  }
}

/// AP in percent as the mean, over ground truth instances, of the best
/// precision reached at or after the rank where each one is found. Missed
/// instances contribute zero.
inline std::optional<double> average_precision(
    const std::vector<std::vector<cpe::Detection>>& dets,
    const std::vector<cpe::GroundTruth>& truths, std::size_t cls) {
  std::vector<std::tuple<double, std::size_t, cpe::Box>> ranked;
  std::size_t positives = 0;
  for (std::size_t img = 0; img < truths.size(); ++img) {
    positives += static_cast<std::size_t>(
        std::count(truths[img].classes.begin(), truths[img].classes.end(), cls));
    for (const auto& d : dets[img]) {
      if (d.class_id == cls) ranked.emplace_back(d.score, img, d.box);
    }
  }
  if (positives == 0) return std::nullopt;
  std::vector<std::size_t> order(ranked.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = std::get<0>(ranked[a]), sb = std::get<0>(ranked[b]);
    return sa != sb ? sa > sb : a < b;
  });

  std::vector<std::vector<bool>> taken(truths.size());
  for (std::size_t img = 0; img < truths.size(); ++img) {
    taken[img].assign(truths[img].boxes.size(), false);
  }
  std::vector<bool> hit(order.size(), false);
  std::vector<double> precision(order.size());
  std::size_t tp = 0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const auto& [score, img, box] = ranked[order[r]];
    double best = 0.5;
    std::ptrdiff_t g_best = -1;
    for (std::size_t g = 0; g < truths[img].boxes.size(); ++g) {
      if (truths[img].classes[g] != cls || taken[img][g]) continue;
      const double o = cpe::iou(box, truths[img].boxes[g]);
      if (o > best) best = o, g_best = static_cast<std::ptrdiff_t>(g);
    }
    if (g_best >= 0) {
      taken[img][static_cast<std::size_t>(g_best)] = true;
      hit[r] = true;
      ++tp;
    }
    precision[r] = static_cast<double>(tp) / static_cast<double>(r + 1);
  }
  double sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!hit[r]) continue;
    sum += *std::max_element(precision.begin() + static_cast<std::ptrdiff_t>(r),
                             precision.end());
  }
  return 100.0 * sum / static_cast<double>(positives);
}

}  // namespace oracle
