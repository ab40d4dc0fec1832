#include "cpe/scene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "cpe/checkpoint.hpp"
#include "cpe/params.hpp"

namespace cpe {

void SceneSpec::validate() const {
  if (classes < 2) throw InvalidParameter("need at least two classes");
  if (channels < 4) throw InvalidParameter("need at least four channels");
  if (image_size == 0 || feature_stride == 0 ||
      image_size % feature_stride != 0) {
    throw InvalidParameter("image size must be a positive multiple of stride");
  }
  if (!(min_object > 4) || !(max_object >= min_object) ||
      max_object > 0.8 * static_cast<double>(image_size)) {
    throw InvalidParameter("object size range does not fit the image");
  }
  if (!(part_fraction > 0 && part_fraction < 0.45)) {
    throw InvalidParameter("part_fraction must lie in (0, 0.45)");
  }
  if (!(part_level > body_level) || !(body_level > 0)) {
    throw InvalidParameter("need part_level > body_level > 0");
  }
  if (class_gain < 0) throw InvalidParameter("class_gain must be >= 0");
  if (objects == 0 && distractors == 0 && background_boxes == 0) {
    throw InvalidParameter("scene would have no proposals");
  }
}

std::uint64_t scene_seed(std::uint64_t dataset_seed, std::size_t index) {
  // splitmix64 finaliser over (seed, index).
  std::uint64_t z = dataset_seed * 0x9E3779B97F4A7C15ULL + index + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

enum class Side { kLeft, kRight, kTop, kBottom };

struct Painter {
  const SceneSpec& spec;
  std::vector<double>& values;  // [channels, cells, cells]
  std::size_t cells;

  void fill(const Box& b, std::size_t channel, double level) {
    const double stride = static_cast<double>(spec.feature_stride);
    for (std::size_t i = 0; i < cells; ++i) {
      const double cy = (static_cast<double>(i) + 0.5) * stride;
      if (cy < b.y() || cy >= b.bottom()) continue;
      for (std::size_t j = 0; j < cells; ++j) {
        const double cx = (static_cast<double>(j) + 0.5) * stride;
        if (cx < b.x() || cx >= b.right()) continue;
        values[(channel * cells + i) * cells + j] = level;
      }
    }
  }

  // Clears all channels inside `b` so later layers replace earlier ones.
  void clear(const Box& b) {
    for (std::size_t ch = 0; ch < spec.channels; ++ch) fill(b, ch, 0.0);
  }
};

// Two signature channels and one extent channel per class; the last channel
// is reserved for distractors. Channels wrap when there are too few.
std::array<std::size_t, 3> class_channels(const SceneSpec& spec, int cls) {
  const std::size_t usable = spec.channels - 1;
  const auto c = static_cast<std::size_t>(cls);
  return {(3 * c) % usable, (3 * c + 1) % usable, (3 * c + 2) % usable};
}

Box part_of(const Box& obj, Side side, double frac) {
  switch (side) {
    case Side::kLeft: return Box(obj.x(), obj.y(), obj.w() * frac, obj.h());
    case Side::kRight:
      return Box(obj.right() - obj.w() * frac, obj.y(), obj.w() * frac, obj.h());
    case Side::kTop: return Box(obj.x(), obj.y(), obj.w(), obj.h() * frac);
    case Side::kBottom:
      return Box(obj.x(), obj.bottom() - obj.h() * frac, obj.w(), obj.h() * frac);
  }
  return obj;
}

// Centred sub-rectangle covering `frac` of each side.
Box core_of(const Box& obj, double frac) {
  const double w = obj.w() * frac, h = obj.h() * frac;
  return Box(obj.x() + 0.5 * (obj.w() - w), obj.y() + 0.5 * (obj.h() - h), w, h);
}

// Jitters each edge by up to `amount` times the box extent, then clips.
std::optional<Box> jitter(const Box& b, double amount, const ImageDims& img,
                          Rng& rng) {
  const double x0 = b.x() + rng.uniform(-amount, amount) * b.w();
  const double x1 = b.right() + rng.uniform(-amount, amount) * b.w();
  const double y0 = b.y() + rng.uniform(-amount, amount) * b.h();
  const double y1 = b.bottom() + rng.uniform(-amount, amount) * b.h();
  if (x1 - x0 < 2 || y1 - y0 < 2) return std::nullopt;
  try {
    const Box c = clip_box(Box(x0, y0, x1 - x0, y1 - y0), img);
    if (c.w() < 2 || c.h() < 2) return std::nullopt;
    return c;
  } catch (const EmptyIntersection&) {
    return std::nullopt;
  }
}

}  // namespace

SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  spec.validate();
  Rng rng(seed);
  const double size = static_cast<double>(spec.image_size);
  const ImageDims img(size, size);
  const std::size_t cells = spec.image_size / spec.feature_stride;
  std::vector<double> values(spec.channels * cells * cells, 0.0);
  Painter paint{spec, values, cells};

  SyntheticScene scene{
      FeatureMap(tc::Tensor::zeros({spec.channels, cells, cells}),
                 1.0 / static_cast<double>(spec.feature_stride)),
      img, {}, {}, {}, {}, {}, ImageLabel{std::vector<double>(spec.classes, 0.0)}};

  // Distractors first so objects paint over them.
  std::vector<Box> distractors;
  for (std::size_t d = 0; d < spec.distractors; ++d) {
    const double s = rng.uniform(8, 14);
    const Box b(rng.uniform(0, size - s), rng.uniform(0, size - s), s, s);
    distractors.push_back(b);
    paint.clear(b);
    paint.fill(b, spec.channels - 1, spec.body_level);
  }

  std::vector<Box> parts;
  for (std::size_t o = 0; o < spec.objects; ++o) {
    Box obj(0, 0, 1, 1);
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double w = rng.uniform(spec.min_object, spec.max_object);
      const double h = rng.uniform(spec.min_object, spec.max_object);
      obj = Box(rng.uniform(0, size - w), rng.uniform(0, size - h), w, h);
      const bool clear = std::none_of(
          scene.gt_boxes.begin(), scene.gt_boxes.end(),
          [&](const Box& other) { return iou(obj, other) > 0.05; });
      if (clear) break;
    }
    const int cls = static_cast<int>(rng.integer(0, static_cast<std::int64_t>(spec.classes) - 1));
    const auto side = static_cast<Side>(rng.integer(0, 3));
    const Box part = spec.central_parts ? core_of(obj, spec.part_fraction)
                                        : part_of(obj, side, spec.part_fraction);
    const auto chans = class_channels(spec, cls);
    const double gain = 1.0 + spec.class_gain * static_cast<double>(cls);

    // The part carries a stronger class signature, while the rest of the body
    // carries the extent channel. Both sum to the same channel total, so the
    // object looks uniform once channels are averaged.
    const double extent = 2.0 * (spec.part_level - spec.body_level);
    paint.clear(obj);
    for (std::size_t k : {0, 1}) paint.fill(obj, chans[k], gain * spec.body_level);
    paint.fill(obj, chans[2], gain * extent);
    for (std::size_t k : {0, 1}) paint.fill(part, chans[k], gain * spec.part_level);
    paint.fill(part, chans[2], 0.0);

    scene.gt_boxes.push_back(obj);
    scene.gt_classes.push_back(cls);
    scene.label.y[static_cast<std::size_t>(cls)] = 1.0;
    parts.push_back(part);
  }

  for (double& v : values) v += spec.noise * rng.normal();
  scene.features = FeatureMap(
      tc::Tensor({spec.channels, cells, cells}, std::move(values)),
      1.0 / static_cast<double>(spec.feature_stride));

  auto add = [&](const Box& b, ProposalKind kind, int parent) {
    scene.proposals.push_back(b);
    scene.kinds.push_back(kind);
    scene.proposal_parent.push_back(parent);
  };
  for (std::size_t o = 0; o < scene.gt_boxes.size(); ++o) {
    const int parent = static_cast<int>(o);
    for (std::size_t k = 0; k < spec.jittered_boxes; ++k) {
      for (int attempt = 0; attempt < 20; ++attempt) {
        if (auto b = jitter(scene.gt_boxes[o], 0.08, img, rng)) {
          add(*b, ProposalKind::kJittered, parent);
          break;
        }
      }
    }
    for (std::size_t k = 0; k < spec.part_boxes; ++k) {
      std::optional<Box> chosen;
      for (int attempt = 0; attempt < 20 && !chosen; ++attempt) {
        auto b = jitter(parts[o], 0.05, img, rng);
        if (b && iou(*b, scene.gt_boxes[o]) < 0.5) chosen = b;
      }
      add(chosen.value_or(parts[o]), ProposalKind::kPart, parent);
    }
  }
  for (const Box& d : distractors) {
    if (auto b = jitter(d, 0.08, img, rng)) add(*b, ProposalKind::kDistractor, -1);
  }
  // Background boxes keep clear of the objects so that they stay negatives
  // under any seed overlap rule; a few attempts may fail on crowded scenes.
  for (std::size_t k = 0; k < spec.background_boxes; ++k) {
    for (int attempt = 0; attempt < 50; ++attempt) {
      const double w = rng.uniform(10, 32), h = rng.uniform(10, 32);
      const Box b(rng.uniform(0, size - w), rng.uniform(0, size - h), w, h);
      const bool clear = std::all_of(
          scene.gt_boxes.begin(), scene.gt_boxes.end(),
          [&](const Box& g) { return iou(b, g) < spec.background_max_iou; });
      if (clear) {
        add(b, ProposalKind::kBackground, -1);
        break;
      }
    }
  }

  // Shuffle so proposal order carries no information.
  for (std::size_t i = scene.proposals.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(
        rng.integer(0, static_cast<std::int64_t>(i) - 1));
    std::swap(scene.proposals[i - 1], scene.proposals[j]);
    std::swap(scene.kinds[i - 1], scene.kinds[j]);
    std::swap(scene.proposal_parent[i - 1], scene.proposal_parent[j]);
  }
  return scene;
}

std::vector<SyntheticScene> generate_dataset(std::uint64_t dataset_seed,
                                             std::size_t count,
                                             const SceneSpec& spec) {
  std::vector<SyntheticScene> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(generate_scene(scene_seed(dataset_seed, i), spec));
  }
  return out;
}

namespace {

std::filesystem::path scene_path(const std::filesystem::path& dir,
                                 std::size_t i, const char* ext) {
  std::ostringstream name;
  name << "scene_" << i << ext;
  return dir / name.str();
}

}  // namespace

void save_dataset(const std::filesystem::path& dir,
                  const std::vector<SyntheticScene>& scenes) {
  std::filesystem::create_directories(dir);
  std::ofstream manifest(dir / "manifest.txt");
  const std::size_t classes =
      scenes.empty() ? 0 : scenes.front().label.num_classes();
  manifest << "scenes " << scenes.size() << "\nclasses " << classes << '\n';
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const auto& s = scenes[i];
    save_checkpoint(scene_path(dir, i, ".feat"),
                    {{"features", s.features.values()},
                     {"spatial_scale",
                      tc::Tensor::scalar(s.features.spatial_scale())}});
    std::vector<LabeledBox> gt, props;
    for (std::size_t g = 0; g < s.gt_boxes.size(); ++g) {
      gt.push_back({s.gt_boxes[g], s.gt_classes[g], std::nullopt});
    }
    for (const Box& b : s.proposals) props.push_back({b, std::nullopt, std::nullopt});
    std::ofstream gt_out(scene_path(dir, i, ".gt"));
    write_boxes(gt_out, gt);
    std::ofstream prop_out(scene_path(dir, i, ".proposals"));
    write_boxes(prop_out, props);
  }
}

std::vector<SyntheticScene> load_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw InvalidInput("no manifest.txt in " + dir.string());
  std::size_t count = 0, classes = 0;
  for (std::string key; manifest >> key;) {
    if (key == "scenes") manifest >> count;
    else if (key == "classes") manifest >> classes;
    else throw InvalidInput("unknown manifest key '" + key + "'");
  }
  if (classes == 0) throw InvalidInput("manifest lacks a class count");
  std::vector<SyntheticScene> out;
  for (std::size_t i = 0; i < count; ++i) {
    const NamedTensors feat = load_checkpoint(scene_path(dir, i, ".feat"));
    tc::Tensor values, scale;
    for (const auto& [name, t] : feat) {
      if (name == "features") values = t;
      if (name == "spatial_scale") scale = t;
    }
    if (!values.defined() || !scale.defined()) {
      throw InvalidInput("incomplete feature file for scene " + std::to_string(i));
    }
    FeatureMap fm(values, scale.item());
    const ImageDims img = fm.image_dims();
    std::ifstream gt_in(scene_path(dir, i, ".gt"));
    std::ifstream prop_in(scene_path(dir, i, ".proposals"));
    if (!gt_in || !prop_in) {
      throw InvalidInput("missing box files for scene " + std::to_string(i));
    }
    SyntheticScene s{fm, img, {}, {}, {}, {}, {},
                     ImageLabel{std::vector<double>(classes, 0.0)}};
    for (const auto& lb : read_boxes(gt_in)) {
      const int cls = lb.class_id.value_or(-1);
      if (cls < 0 || static_cast<std::size_t>(cls) >= classes) {
        throw InvalidInput("ground-truth class out of range in scene " +
                           std::to_string(i));
      }
      s.gt_boxes.push_back(lb.box);
      s.gt_classes.push_back(cls);
      s.label.y[static_cast<std::size_t>(cls)] = 1.0;
    }
    for (const auto& lb : read_boxes(prop_in)) {
      s.proposals.push_back(clip_box(lb.box, img));
      s.kinds.push_back(ProposalKind::kBackground);
      s.proposal_parent.push_back(-1);
    }
    if (s.proposals.empty()) {
      throw InvalidInput("scene " + std::to_string(i) + " has no proposals");
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace cpe
