// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any fails. Pass criterion numbers as arguments to run
// a subset.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>

#include "cpe/encoder.hpp"
#include "cpe/eval.hpp"
#include "cpe/features.hpp"
#include "cpe/gradcheck.hpp"
#include "cpe/mil.hpp"
#include "cpe/train.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
namespace tc = cpe::tc;
using cpe::Box;
using cpe::Direction;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

Box random_box(cpe::Rng& rng, const cpe::ImageDims& img) {
  const double w = rng.uniform(0.5, img.width);
  const double h = rng.uniform(0.5, img.height);
  return Box(rng.uniform(0, img.width - w), rng.uniform(0, img.height - h), w, h);
}

// Multiples of 1/8 on small ranges with t a power of two keep every
// intermediate value exact, so the extension length can be compared with ==.
double eighths(cpe::Rng& rng, std::int64_t lo, std::int64_t hi) {
  return static_cast<double>(rng.integer(lo * 8, hi * 8)) / 8.0;
}

Outcome criterion_geometry() {
  const auto t0 = Clock::now();
  cpe::Rng rng(101);
  std::size_t failures = 0;
  for (int i = 0; i < 100000; ++i) {
    const Direction d = cpe::kAllDirections[static_cast<std::size_t>(i % 4)];
    const bool square = i % 2 == 1;
    cpe::ImageDims img;
    std::optional<Box> b;
    double t;
    if (square) {
      img = cpe::ImageDims(static_cast<double>(rng.integer(16, 256)),
                           static_cast<double>(rng.integer(16, 256)));
      const double side = eighths(rng, 1, static_cast<std::int64_t>(std::min(img.width, img.height)));
      b = Box(eighths(rng, 0, static_cast<std::int64_t>(img.width - side)),
              eighths(rng, 0, static_cast<std::int64_t>(img.height - side)), side, side);
      t = std::ldexp(1.0, static_cast<int>(rng.integer(1, 4)));
    } else {
      img = cpe::ImageDims(rng.uniform(8, 500), rng.uniform(8, 500));
      b = random_box(rng, img);
      t = rng.uniform(1.01, 10);
    }
    const Box e = cpe::extend_box(*b, d, img, t);
    bool ok = e.contains(*b) && e.inside(img);
    if (cpe::is_horizontal(d)) {
      ok = ok && e.y() == b->y() && e.h() == b->h();
    } else {
      ok = ok && e.x() == b->x() && e.w() == b->w();
    }
    if (square) {
      const double want = b->w() / t;
      double room = 0, grown = 0;
      switch (d) {
        case Direction::R2L: room = b->x(), grown = b->x() - e.x(); break;
        case Direction::L2R: room = img.width - b->right(), grown = e.right() - b->right(); break;
        case Direction::B2T: room = b->y(), grown = b->y() - e.y(); break;
        case Direction::T2B: room = img.height - b->bottom(), grown = e.bottom() - b->bottom(); break;
      }
      ok = ok && grown == std::min(want, room);
    }
    failures += !ok;
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 5.0,
          fmt("extend_box properties, 100000 draws, %zu violations, %.2f s", failures, secs)};
}

tc::Tensor random_grid(cpe::Rng& rng, std::size_t h, std::size_t w) {
  std::vector<double> v(h * w);
  for (auto& x : v) x = rng.normal();
  return tc::Tensor({h, w}, v);
}

bool bit_equal(const tc::Tensor& a, const tc::Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] != b[i]) return false;
  }
  return true;
}

struct PairDraw {
  tc::Tensor grid;
  Box b;
  Box e;
  Direction d;
  cpe::PoolingSpec spec;
  double scale;
};

PairDraw random_pair(cpe::Rng& rng) {
  const std::size_t gh = static_cast<std::size_t>(rng.integer(6, 24));
  const std::size_t gw = static_cast<std::size_t>(rng.integer(6, 24));
  const double scale = rng.uniform() < 0.5 ? 1.0 : 0.5;
  const cpe::ImageDims img(static_cast<double>(gw) / scale, static_cast<double>(gh) / scale);
  Box b = random_box(rng, img);
  // Boxes flush with an image corner leave nothing to extend into.
  if (rng.uniform() < 0.2) b = Box(0, 0, b.w(), b.h());
  if (rng.uniform() < 0.2) b = Box(img.width - b.w(), img.height - b.h(), b.w(), b.h());
  const Direction d = cpe::kAllDirections[static_cast<std::size_t>(rng.integer(0, 3))];
  const Box e = cpe::extend_box(b, d, img, rng.uniform(1.5, 6), rng.uniform() < 0.5);
  const cpe::PoolingSpec spec{static_cast<std::size_t>(rng.integer(1, 7)),
                              static_cast<std::size_t>(rng.integer(1, 7)),
                              static_cast<std::size_t>(rng.integer(1, 4))};
  return {random_grid(rng, gh, gw), b, e, d, spec, scale};
}

Outcome criterion_concatenation() {
  const auto t0 = Clock::now();
  cpe::Rng rng(202);
  std::size_t failures = 0, empty = 0;
  for (int i = 0; i < 1000; ++i) {
    const PairDraw p = random_pair(rng);
    const auto pp = cpe::pool_pair(p.grid, p.b, p.e, p.d, p.spec, p.scale);
    tc::Tensor joined;
    if (pp.strip.values.size() == 0) {
      ++empty;
      joined = pp.initial.values;
    } else {
      const std::size_t axis = cpe::is_horizontal(p.d) ? 1 : 0;
      const bool strip_first = p.d == Direction::R2L || p.d == Direction::B2T;
      joined = strip_first ? tc::concat({pp.strip.values, pp.initial.values}, axis)
                           : tc::concat({pp.initial.values, pp.strip.values}, axis);
    }
    failures += !bit_equal(pp.extended.values, joined);
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 10.0,
          fmt("pooled extension equals joined parts, 1000 draws (%zu clamped), %zu mismatches, "
              "%.2f s",
              empty, failures, secs)};
}

Outcome criterion_prefix() {
  const auto t0 = Clock::now();
  cpe::Rng rng(303);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const PairDraw p = random_pair(rng);
    const auto pp = cpe::pool_pair(p.grid, p.b, p.e, p.d, p.spec, p.scale);
    const auto whole = cpe::orient(pp.extended, p.d);
    const auto head = cpe::orient(pp.initial, p.d);
    const auto tail = cpe::orient(pp.strip, p.d);
    const auto lstm = cpe::LstmParams::init(p.spec.steps, static_cast<std::size_t>(rng.integer(1, 8)), rng);
    const auto zero = cpe::LstmState::zeros(1, lstm.hidden_dim());
    const auto a = cpe::encode_sequence(lstm, cpe::batch_steps({whole}), zero).final;
    const auto mid = cpe::encode_sequence(lstm, cpe::batch_steps({head}), zero).final;
    const auto b = tail.steps.empty() ? mid
                                      : cpe::encode_sequence(lstm, cpe::batch_steps({tail}), mid).final;
    for (std::size_t k = 0; k < a.h.size(); ++k) {
      worst = std::max({worst, std::abs(a.h[k] - b.h[k]), std::abs(a.c[k] - b.c[k])});
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-9 && secs < 10.0,
          fmt("whole vs prefix-then-continue encoding, 1000 draws, max diff %.3g, %.2f s", worst,
              secs)};
}

Outcome criterion_gradients() {
  const auto t0 = Clock::now();
  std::string detail;
  bool ok = true;
  for (const auto& r : cpe::run_gradchecks(0, 1e-5)) {
    ok = ok && r.max_rel_error < 1e-4;
    detail += fmt("%s %.2e; ", r.name.c_str(), r.max_rel_error);
  }
  const double secs = seconds_since(t0);
  return {ok && secs < 60.0, "finite differences: " + detail + fmt("%.2f s", secs)};
}

Outcome criterion_score_ranges() {
  const auto t0 = Clock::now();
  std::size_t failures = 0, degenerate = 0, n_checked = 0;
  double worst_sum = 0.0;
  auto within = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
  for (std::uint64_t seed = 0; seed < 10000; ++seed) {
    const cpe::ToyProblem toy = cpe::make_toy_problem(seed);
    const cpe::CpeModel model(toy.config, seed * 7919 + 1);
    tc::NoGradGuard no_grad;
    const auto in = cpe::prepare_inputs(toy.scene, toy.config);
    const auto r = model.forward(in, &toy.scene.label, true);
    bool ok = true;
    for (double v : r.sigma.data()) ok = ok && within(v, 0.0, 1.0);
    for (std::size_t d = 0; d < r.dump->directions.size(); ++d) {
      const tc::Tensor& n = r.dump->contrast[d];
      const tc::Tensor raw = cpe::raw_contrast(r.dump->score_initial[d], r.dump->score_extended[d]);
      double lo = 1e300, hi = -1e300, rlo = 1e300, rhi = -1e300;
      for (std::size_t i = 0; i < n.size(); ++i) {
        ok = ok && within(n[i], 0.0, 1.0);
        lo = std::min(lo, n[i]), hi = std::max(hi, n[i]);
        rlo = std::min(rlo, raw[i]), rhi = std::max(rhi, raw[i]);
      }
      if (rhi - rlo > toy.config.contrast_eps) {
        ok = ok && lo == 0.0 && hi == 1.0;
      } else {
        ++degenerate;
        ok = ok && lo == 0.0 && hi == 0.0;
      }
    }
    for (double v : r.contrast.data()) ok = ok && within(v, 0.0, 2.0);

    // Softmax inputs of the basic detector, and the refinement rows.
    const tc::Tensor emb = cpe::proposal_embedding(model.mil(), in.features);
    const auto [x_cls, x_dec] = cpe::mil_streams(model.mil(), emb);
    const auto [x_rcls, x_rdec] = cpe::fuse_semantics(model.mil(), x_cls, x_dec, r.contrast);
    const tc::Tensor rows = tc::softmax_rows(x_rcls);
    const tc::Tensor cols = tc::softmax_cols(x_rdec);
    const std::size_t N = rows.dim(0), C = rows.dim(1);
    for (std::size_t i = 0; i < N; ++i) {
      double s = 0;
      for (std::size_t c = 0; c < C; ++c) s += rows.at(i, c);
      worst_sum = std::max(worst_sum, std::abs(s - 1));
    }
    for (std::size_t c = 0; c < C; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < N; ++i) s += cols.at(i, c);
      worst_sum = std::max(worst_sum, std::abs(s - 1));
    }
    for (const auto& phi : r.phi) {
      for (std::size_t i = 0; i < phi.dim(0); ++i) {
        double s = 0;
        for (std::size_t c = 0; c < phi.dim(1); ++c) s += phi.at(i, c);
        worst_sum = std::max(worst_sum, std::abs(s - 1));
      }
    }
    ++n_checked;
    failures += !ok;
  }
  const bool pass = failures == 0 && worst_sum <= 1e-9;
  return {pass, fmt("%zu forward passes, %zu range violations, %zu degenerate direction maps, "
                    "max |softmax sum - 1| %.2e, %.2f s",
                    n_checked, failures, degenerate, worst_sum, seconds_since(t0))};
}

Outcome criterion_oracles() {
  cpe::Rng rng(606);
  std::size_t bad_labels = 0, bad_nms = 0, bad_ap = 0;
  double worst_ap = 0.0;
  for (int t = 0; t < 1000; ++t) {
    // Pseudo-labels.
    const std::size_t n = static_cast<std::size_t>(rng.integer(1, 20));
    const std::size_t c = static_cast<std::size_t>(rng.integer(1, 4));
    const std::size_t width = c + static_cast<std::size_t>(rng.integer(0, 1));
    std::vector<Box> boxes;
    for (std::size_t i = 0; i < n; ++i) boxes.push_back(random_box(rng, cpe::ImageDims(50, 50)));
    std::vector<double> y(c, 0.0);
    for (auto& v : y) v = rng.uniform() < 0.5 ? 1.0 : 0.0;
    y[static_cast<std::size_t>(rng.integer(0, static_cast<std::int64_t>(c) - 1))] = 1.0;
    std::vector<double> s(n * width);
    for (auto& v : s) v = std::round(rng.uniform() * 6) / 6;
    const double tau = rng.uniform(0.05, 0.7);
    bad_labels += cpe::refine_labels(tc::Tensor({n, width}, s), boxes, cpe::ImageLabel{y}, tau) !=
                  oracle::refine_labels(s, width, boxes, y, tau);

    // NMS.
    std::vector<double> scores(n);
    for (auto& v : scores) v = std::round(rng.uniform() * 5) / 5;
    const double thr = rng.uniform(0.1, 0.9);
    bad_nms += cpe::nms(boxes, scores, thr) != oracle::nms(boxes, scores, thr);

    // Average precision.
    const std::size_t images = static_cast<std::size_t>(rng.integer(1, 4));
    std::vector<cpe::GroundTruth> gt(images);
    std::vector<std::vector<cpe::Detection>> dets(images);
    for (std::size_t img = 0; img < images; ++img) {
      const auto g = rng.integer(0, 3);
      for (std::int64_t k = 0; k < g; ++k) {
        gt[img].boxes.push_back(random_box(rng, cpe::ImageDims(40, 40)));
        gt[img].classes.push_back(static_cast<std::size_t>(rng.integer(0, 1)));
      }
      const auto dcount = rng.integer(0, 6);
      for (std::int64_t k = 0; k < dcount; ++k) {
        const Box near = gt[img].boxes.empty() || rng.uniform() < 0.3
                             ? random_box(rng, cpe::ImageDims(40, 40))
                             : gt[img].boxes[static_cast<std::size_t>(rng.integer(
                                   0, static_cast<std::int64_t>(gt[img].boxes.size()) - 1))];
        dets[img].push_back({near, static_cast<std::size_t>(rng.integer(0, 1)),
                             std::round(rng.uniform() * 4) / 4});
      }
    }
    for (std::size_t cls = 0; cls < 2; ++cls) {
      const auto a = cpe::average_precision(dets, gt, cls);
      const auto b = oracle::average_precision(dets, gt, cls);
      if (a.has_value() != b.has_value()) {
        ++bad_ap;
      } else if (a) {
        worst_ap = std::max(worst_ap, std::abs(*a - *b));
        bad_ap += std::abs(*a - *b) > 1e-9;
      }
    }
  }
  return {bad_labels == 0 && bad_nms == 0 && bad_ap == 0,
          fmt("1000 instances each: refine_labels %zu, nms %zu, AP %zu mismatches "
              "(max AP diff %.2e)",
              bad_labels, bad_nms, bad_ap, worst_ap)};
}

Outcome criterion_overfit() {
  const auto t0 = Clock::now();
  setenv("CPE_THREADS", "1", 1);
  cpe::TrainConfig cfg;
  cfg.finalize();
  const auto scenes = cpe::training_scenes(cfg);
  const double initial = cpe::dataset_loss(cpe::CpeModel(cfg.model, cfg.seed), scenes);
  const auto result = cpe::train(cfg, scenes);
  const double final_loss = cpe::dataset_loss(result.model, scenes);
  const auto m = cpe::evaluate(result.model, scenes, cfg.nms_iou);
  unsetenv("CPE_THREADS");
  const double secs = seconds_since(t0);
  const double ratio = final_loss / initial;
  const double cl = m.mean_corloc.value_or(0.0);
  return {ratio < 0.25 && cl >= 80.0 && secs < 300.0,
          fmt("loss %.4f -> %.4f (%.1f%% of initial), CorLoc %.2f, %.1f s single-threaded",
              initial, final_loss, 100 * ratio, cl, secs)};
}

double mean_top_iou(cpe::TrainConfig cfg) {
  cfg.finalize();
  const auto scenes = cpe::training_scenes(cfg);
  const auto model = cpe::train(cfg, scenes).model;
  return cpe::evaluate(model, scenes, cfg.nms_iou).mean_top_iou.value_or(0.0);
}

Outcome criterion_trend() {
  const auto t0 = Clock::now();
  const std::uint64_t seeds = 5;
  double full = 0, baseline = 0, single = 0;
  std::string per_seed;
  for (std::uint64_t s = 0; s < seeds; ++s) {
    cpe::TrainConfig cfg;
    cfg.seed = s;
    cfg.dataset_seed = s;
    const double f = mean_top_iou(cfg);

    cpe::TrainConfig off = cfg;
    off.model.cpe = false;
    const double b = mean_top_iou(off);

    cpe::TrainConfig one = cfg;
    one.model.directions = {false, true, false, false};
    const double o = mean_top_iou(one);

    full += f, baseline += b, single += o;
    per_seed += fmt(" [%.3f %.3f %.3f]", f, b, o);
  }
  full /= seeds, baseline /= seeds, single /= seeds;
  return {full > baseline && full >= single,
          fmt("mean top IoU over %d seeds: full %.4f, CPE off %.4f, L2R only %.4f;", int(seeds),
              full, baseline, single) +
              per_seed + fmt(" %.1f s", seconds_since(t0))};
}

int run(const std::string& cmd) {
  const int rc = std::system(cmd.c_str());
  return rc;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion_determinism() {
  const auto t0 = Clock::now();
  const fs::path dir = fs::temp_directory_path() / "cpe_acceptance_determinism";
  fs::remove_all(dir);
  fs::create_directories(dir);
  {
    std::ofstream cfg(dir / "run.cfg");
    cfg << "seed = 3\ndataset_seed = 3\ntrain_scenes = 8\niterations = 80\nlr_drop_at = 60\n";
  }
  const std::string cli = CPE_CLI_PATH;
  const std::string d = dir.string();
  int rc = run(cli + " generate --config " + d + "/run.cfg --out " + d + "/data");
  const char* threads[2] = {"1", "4"};
  for (int k = 0; k < 2 && rc == 0; ++k) {
    const std::string tag = std::to_string(k);
    const std::string env = std::string("CPE_THREADS=") + threads[k] + " ";
    rc = run(env + cli + " train --config " + d + "/run.cfg --out " + d + "/model" + tag + ".ckpt");
    if (rc == 0) {
      rc = run(env + cli + " eval --ckpt " + d + "/model" + tag + ".ckpt --dataset " + d +
               "/data --metrics " + d + "/metrics" + tag + ".csv");
    }
  }
  if (rc != 0) return {false, fmt("cpe exited with status %d", rc)};
  const std::string m0 = slurp(dir / "metrics0.csv"), m1 = slurp(dir / "metrics1.csv");
  const bool ckpt_same = slurp(dir / "model0.ckpt") == slurp(dir / "model1.ckpt");
  const bool pass = !m0.empty() && m0 == m1 && ckpt_same;
  fs::remove_all(dir);
  return {pass, fmt("train+eval twice (CPE_THREADS 1 and 4): metrics %s, checkpoints %s, %.1f s",
                    m0 == m1 ? "identical" : "differ", ckpt_same ? "identical" : "differ",
                    seconds_since(t0))};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"box extension geometry", criterion_geometry},
      {"pooled concatenation identity", criterion_concatenation},
      {"encoder prefix identity", criterion_prefix},
      {"gradient correctness", criterion_gradients},
      {"score ranges", criterion_score_ranges},
      {"oracle equivalence", criterion_oracles},
      {"synthetic overfit", criterion_overfit},
      {"mechanism trend", criterion_trend},
      {"determinism", criterion_determinism},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("criterion %d %-30s %s  %s\n", id, criteria[k].first, o.pass ? "PASS" : "FAIL",
                o.detail.c_str());
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
