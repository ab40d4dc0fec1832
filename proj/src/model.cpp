#include "cpe/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace cpe {

std::vector<Direction> ModelConfig::enabled_directions() const {
  std::vector<Direction> out;
  for (std::size_t i = 0; i < kAllDirections.size(); ++i) {
    if (directions[i]) out.push_back(kAllDirections[i]);
  }
  return out;
}

void ModelConfig::validate() const {
  if (num_classes == 0 || channels == 0 || mil_hidden == 0 || hidden == 0 ||
      roi_grid == 0) {
    throw InvalidParameter("model dimensions must be positive");
  }
  if (branches == 0) throw InvalidParameter("K must be >= 1");
  if (pooling.steps == 0 || pooling.base == 0 || pooling.extra == 0) {
    throw InvalidParameter("pooling sizes must be positive");
  }
  if (!(t > 1)) throw InvalidParameter("t must be > 1");
  if (!(tau > 0 && tau < 1)) throw InvalidParameter("tau must lie in (0, 1)");
  FusionConfig{alpha, contrast_eps}.validate();
  if (cpe && enabled_directions().empty()) {
    throw InvalidParameter("CPE enabled with no directions");
  }
}

tc::Tensor proposal_features(const FeatureMap& fm, const std::vector<Box>& boxes,
                             std::size_t roi_grid) {
  tc::NoGradGuard no_grad;
  const std::size_t per = roi_grid * roi_grid;
  const std::size_t f = fm.channels() * per;
  std::vector<double> out(boxes.size() * f);
  const std::size_t plane = fm.height() * fm.width();
  const auto all = fm.values().data();
  for (std::size_t ch = 0; ch < fm.channels(); ++ch) {
    const tc::Tensor grid(
        {fm.height(), fm.width()},
        std::vector<double>(all.begin() + static_cast<std::ptrdiff_t>(ch * plane),
                            all.begin() + static_cast<std::ptrdiff_t>((ch + 1) * plane)));
    for (std::size_t i = 0; i < boxes.size(); ++i) {
      const PooledFeature p =
          roi_pool(grid, boxes[i], roi_grid, roi_grid, fm.spatial_scale());
      std::copy(p.values.data().begin(), p.values.data().end(),
                out.begin() + static_cast<std::ptrdiff_t>(i * f + ch * per));
    }
  }
  return tc::Tensor({boxes.size(), f}, std::move(out));
}

SceneInputs prepare_inputs(const SyntheticScene& scene, const ModelConfig& cfg) {
  cfg.validate();
  if (scene.features.channels() != cfg.channels) {
    throw InvalidInput("scene has " + std::to_string(scene.features.channels()) +
                       " channels, model expects " + std::to_string(cfg.channels));
  }
  if (scene.proposals.empty()) throw InvalidInput("scene has no proposals");
  tc::NoGradGuard no_grad;
  SceneInputs in;
  in.boxes = scene.proposals;
  in.features = proposal_features(scene.features, in.boxes, cfg.roi_grid);
  if (!cfg.cpe) return in;

  const tc::Tensor grid = channel_average(scene.features).detach();
  const double scale = scene.features.spatial_scale();
  const std::size_t n = in.boxes.size();
  const tc::Tensor pad = tc::Tensor::zeros({cfg.pooling.steps});
  for (Direction dir : cfg.enabled_directions()) {
    std::vector<StepSequence> initial, strip;
    SceneInputs::DirectionInputs d{dir, {}, {}, std::vector<double>(n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) {
      const Box& b = in.boxes[i];
      const Box ext = extend_box(b, dir, scene.image, cfg.t, cfg.ratio_scaling);
      const PooledPair pp = pool_pair(grid, b, ext, dir, cfg.pooling, scale);
      initial.push_back(orient(pp.initial, dir));
      StepSequence s = orient(pp.strip, dir);
      if (s.steps.empty()) {
        s.steps.assign(cfg.pooling.extra, pad);
      } else {
        d.has_strip[i] = 1.0;
      }
      strip.push_back(std::move(s));
    }
    d.initial_steps = batch_steps(initial);
    d.strip_steps = batch_steps(strip);
    in.directions.push_back(std::move(d));
  }
  return in;
}

std::vector<double> ForwardResult::detection_scores() const {
  // Mean of the basic stream, rescaled so each class column peaks at 1, and
  // the object columns of every refinement branch. The basic stream is the
  // one that carries the fused contrast.
  const std::size_t n = x_s.dim(0), c = x_s.dim(1);
  std::vector<double> out(n * c, 0.0);
  for (std::size_t j = 0; j < c; ++j) {
    double peak = 0.0;
    for (std::size_t i = 0; i < n; ++i) peak = std::max(peak, x_s.at(i, j));
    if (peak > 0.0) {
      for (std::size_t i = 0; i < n; ++i) out[i * c + j] = x_s.at(i, j) / peak;
    }
  }
  for (const auto& p : phi) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < c; ++j) out[i * c + j] += p.at(i, j);
    }
  }
  const double k = static_cast<double>(phi.size() + 1);
  for (double& v : out) v /= k;
  return out;
}

CpeModel::CpeModel(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  mil_ = MilParams::init(cfg_.feature_dim(), cfg_.mil_hidden, cfg_.num_classes,
                         cfg_.branches, rng, cfg_.cpe ? cfg_.contrast_init : 0.0);
  for (auto& d : dcpe_) {
    d = DcpeParams::init(cfg_.pooling.steps, cfg_.hidden, cfg_.num_classes, rng);
  }
}

ForwardResult CpeModel::forward(const SceneInputs& in, const ImageLabel* label,
                                bool want_dump) const {
  const std::size_t n = in.boxes.size();
  const std::size_t c = cfg_.num_classes;
  if (label != nullptr && label->num_classes() != c) {
    throw InvalidInput("label has " + std::to_string(label->num_classes()) +
                       " classes, model expects " + std::to_string(c));
  }
  ForwardResult r;
  const tc::Tensor emb = proposal_embedding(mil_, in.features);
  const auto [x_cls, x_dec] = mil_streams(mil_, emb);

  if (cfg_.cpe) {
    std::array<tc::Tensor, 4> per_dir;
    std::vector<DirectionLosses> losses;
    ContrastDump dump;
    for (const auto& d : in.directions) {
      const DcpeOutput out =
          dcpe_forward(dcpe(d.direction), d.initial_steps, d.strip_steps,
                       d.has_strip, {cfg_.attention, cfg_.decoder}, label);
      const tc::Tensor norm = normalize_contrast(
          raw_contrast(out.score_initial, out.score_extended), cfg_.contrast_eps);
      per_dir[static_cast<std::size_t>(d.direction)] = norm;
      if (out.loss_initial.defined()) {
        losses.emplace_back(out.loss_initial, out.loss_extended);
      }
      if (want_dump) {
        dump.directions.push_back(d.direction);
        dump.score_initial.push_back(out.score_initial.detach());
        dump.score_extended.push_back(out.score_extended.detach());
        dump.contrast.push_back(norm.detach());
      }
    }
    for (auto& t : per_dir) {
      if (!t.defined()) t = tc::Tensor::zeros({n, c});
    }
    // Index order R2L, L2R, T2B, B2T grows the left, right, bottom, top side.
    r.contrast = fuse_directions(per_dir[0], per_dir[1], per_dir[2], per_dir[3],
                                 {cfg_.alpha, cfg_.contrast_eps});
    if (!losses.empty()) r.loss_cpe = cpe_loss(losses);
    if (want_dump) {
      dump.fused = r.contrast.detach();
      r.dump = std::move(dump);
    }
  } else {
    r.contrast = tc::Tensor::zeros({n, c});
  }

  const auto [x_rcls, x_rdec] = fuse_semantics(mil_, x_cls, x_dec, r.contrast);
  const ProposalScores scores = proposal_and_image_scores(x_rcls, x_rdec);
  r.x_s = scores.x_s;
  r.sigma = scores.sigma;
  for (std::size_t k = 0; k < cfg_.branches; ++k) {
    r.phi.push_back(refinement_scores(mil_, k, emb));
  }
  if (label == nullptr) return r;

  r.loss_wsddn = wsddn_loss(r.sigma, *label);
  // Each branch is supervised by the previous stage's detached scores.
  tc::Tensor previous = r.x_s.detach();
  for (std::size_t k = 0; k < cfg_.branches; ++k) {
    r.pseudo_labels.push_back(refine_labels(previous, in.boxes, *label, cfg_.tau));
    r.loss_refine.push_back(refinement_loss(r.phi[k], r.pseudo_labels.back()));
    previous = r.phi[k].detach();
  }
  r.loss_total = total_loss(r.loss_cpe, r.loss_wsddn, r.loss_refine);
  return r;
}

NamedTensors CpeModel::named_parameters() const {
  NamedTensors out;
  mil_.collect(out, "mil");
  for (Direction d : kAllDirections) {
    dcpe(d).collect(out, "dcpe." + std::string(to_string(d)));
  }
  return out;
}

std::vector<tc::Tensor> CpeModel::trainable_parameters() const {
  NamedTensors named;
  mil_.collect(named, "mil");
  NamedTensors fusion;
  mil_.collect_fusion(fusion, "mil");
  if (cfg_.cpe) {
    for (Direction d : cfg_.enabled_directions()) {
      NamedTensors dir;
      dcpe(d).collect(dir, "dcpe");
      if (!cfg_.attention) {
        std::erase_if(dir, [](const auto& e) {
          return e.first.find(".attention.") != std::string::npos;
        });
      }
      if (!cfg_.decoder) {
        std::erase_if(dir, [](const auto& e) {
          return e.first.starts_with("dcpe.cls") || e.first.starts_with("dcpe.dec");
        });
      }
      named.insert(named.end(), dir.begin(), dir.end());
    }
  }
  std::vector<tc::Tensor> out;
  for (const auto& [name, t] : named) {
    const bool is_fusion =
        std::any_of(fusion.begin(), fusion.end(),
                    [&](const auto& f) { return f.first == name; });
    if (is_fusion && !cfg_.cpe) continue;
    out.push_back(t);
  }
  return out;
}

namespace {

void put(NamedTensors& out, const std::string& key, double v) {
  out.emplace_back("config." + key, tc::Tensor::scalar(v));
}

double get(const NamedTensors& ckpt, const std::string& key) {
  for (const auto& [name, t] : ckpt) {
    if (name == "config." + key) return t.item();
  }
  throw CheckpointError("checkpoint lacks config." + key);
}

std::size_t get_size(const NamedTensors& ckpt, const std::string& key) {
  const double v = get(ckpt, key);
  if (!(v >= 0) || v != std::floor(v)) {
    throw CheckpointError("config." + key + " is not a count");
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

NamedTensors CpeModel::to_checkpoint() const {
  NamedTensors out;
  put(out, "num_classes", static_cast<double>(cfg_.num_classes));
  put(out, "channels", static_cast<double>(cfg_.channels));
  put(out, "mil_hidden", static_cast<double>(cfg_.mil_hidden));
  put(out, "hidden", static_cast<double>(cfg_.hidden));
  put(out, "K", static_cast<double>(cfg_.branches));
  put(out, "roi_grid", static_cast<double>(cfg_.roi_grid));
  put(out, "pool_steps", static_cast<double>(cfg_.pooling.steps));
  put(out, "pool_base", static_cast<double>(cfg_.pooling.base));
  put(out, "pool_extra", static_cast<double>(cfg_.pooling.extra));
  put(out, "t", cfg_.t);
  put(out, "alpha", cfg_.alpha);
  put(out, "tau", cfg_.tau);
  put(out, "contrast_eps", cfg_.contrast_eps);
  for (std::size_t i = 0; i < 4; ++i) {
    put(out, "dir." + std::string(to_string(kAllDirections[i])),
        cfg_.directions[i] ? 1.0 : 0.0);
  }
  put(out, "ratio_scaling", cfg_.ratio_scaling ? 1.0 : 0.0);
  put(out, "cpe", cfg_.cpe ? 1.0 : 0.0);
  put(out, "attention", cfg_.attention ? 1.0 : 0.0);
  put(out, "decoder", cfg_.decoder ? 1.0 : 0.0);
  const NamedTensors params = named_parameters();
  out.insert(out.end(), params.begin(), params.end());
  return out;
}

CpeModel CpeModel::from_checkpoint(const NamedTensors& ckpt) {
  ModelConfig cfg;
  cfg.num_classes = get_size(ckpt, "num_classes");
  cfg.channels = get_size(ckpt, "channels");
  cfg.mil_hidden = get_size(ckpt, "mil_hidden");
  cfg.hidden = get_size(ckpt, "hidden");
  cfg.branches = get_size(ckpt, "K");
  cfg.roi_grid = get_size(ckpt, "roi_grid");
  cfg.pooling = {get_size(ckpt, "pool_steps"), get_size(ckpt, "pool_base"),
                 get_size(ckpt, "pool_extra")};
  cfg.t = get(ckpt, "t");
  cfg.alpha = get(ckpt, "alpha");
  cfg.tau = get(ckpt, "tau");
  cfg.contrast_eps = get(ckpt, "contrast_eps");
  for (std::size_t i = 0; i < 4; ++i) {
    cfg.directions[i] =
        get(ckpt, "dir." + std::string(to_string(kAllDirections[i]))) != 0.0;
  }
  cfg.ratio_scaling = get(ckpt, "ratio_scaling") != 0.0;
  cfg.cpe = get(ckpt, "cpe") != 0.0;
  cfg.attention = get(ckpt, "attention") != 0.0;
  cfg.decoder = get(ckpt, "decoder") != 0.0;
  CpeModel model(cfg, 0);
  assign_params(model.named_parameters(), ckpt);
  return model;
}

}  // namespace cpe
