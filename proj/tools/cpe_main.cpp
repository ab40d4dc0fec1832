// Command-line front end: training, evaluation, box extension, ablation
// sweeps and gradient checks.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "cpe/ablate.hpp"
#include "cpe/checkpoint.hpp"
#include "cpe/config.hpp"
#include "cpe/eval.hpp"
#include "cpe/geometry.hpp"
#include "cpe/gradcheck.hpp"
#include "cpe/train.hpp"

namespace {

cpe::ImageDims parse_dims(const std::string& s) {
  const auto x = s.find_first_of("xX");
  if (x == std::string::npos) throw CLI::ValidationError("--image-dims", "expected WxH");
  try {
    std::size_t used = 0;
    const double w = std::stod(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    const std::string hs = s.substr(x + 1);
    const double h = std::stod(hs, &used);
    if (used != hs.size()) throw std::invalid_argument(s);
    return cpe::ImageDims(w, h);
  } catch (const std::invalid_argument&) {
    throw CLI::ValidationError("--image-dims", "expected WxH, got '" + s + "'");
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  return out;
}

void write_curve(const std::string& path, const std::vector<cpe::LossRecord>& curve) {
  auto out = open_out(path);
  out << "iteration,scene,total,cpe,wsddn";
  const std::size_t K = curve.empty() ? 0 : curve.front().refine.size();
  for (std::size_t k = 1; k <= K; ++k) out << ",refine" << k;
  out << '\n';
  for (const auto& r : curve) {
    out << r.iteration << ',' << r.scene << ',' << cpe::format_real(r.total) << ','
        << cpe::format_real(r.cpe) << ',' << cpe::format_real(r.wsddn);
    for (double v : r.refine) out << ',' << cpe::format_real(v);
    out << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contrastive proposal extension for weakly supervised detection"};
  app.require_subcommand(1);

  // train
  std::string train_config, train_out, train_curve;
  auto* train = app.add_subcommand("train", "Train a model on the config's synthetic scenes");
  train->add_option("--config", train_config, "key = value config file")->required();
  train->add_option("--out", train_out, "checkpoint to write")->required();
  train->add_option("--curve", train_curve, "optional per-iteration loss CSV");

  // eval
  std::string eval_ckpt, eval_dataset, eval_metrics;
  double eval_nms = 0.3;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset directory");
  eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
  eval->add_option("--dataset", eval_dataset, "dataset directory")->required();
  eval->add_option("--metrics", eval_metrics, "metrics CSV to write")->required();
  eval->add_option("--nms", eval_nms, "NMS IoU threshold")->capture_default_str();

  // generate
  std::string gen_config, gen_out, gen_split = "train";
  auto* generate = app.add_subcommand("generate", "Write a config's synthetic scenes to a directory");
  generate->add_option("--config", gen_config, "key = value config file")->required();
  generate->add_option("--out", gen_out, "dataset directory")->required();
  generate->add_option("--split", gen_split, "train or test")
      ->check(CLI::IsMember({"train", "test"}))
      ->capture_default_str();

  // extend
  std::string ext_boxes, ext_dims, ext_dir;
  double ext_t = 4.0;
  bool ext_no_ratio = false;
  auto* extend = app.add_subcommand("extend", "Extend boxes in one direction and print them");
  extend->add_option("--boxes", ext_boxes, "box file, '-' for stdin")->required();
  extend->add_option("--image-dims", ext_dims, "image size WxH")->required();
  extend->add_option("--t", ext_t, "extension divisor, > 1")->capture_default_str();
  extend->add_option("--dir", ext_dir, "R2L, L2R, T2B or B2T")->required();
  extend->add_flag("--no-ratio", ext_no_ratio, "extend by w/t instead of w^2/(h t)");

  // ablate
  std::string abl_grid, abl_config, abl_out;
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate every configuration of a grid");
  ablate->add_option("--grid", abl_grid, "grid file of `key = v1 | v2` lines")->required();
  ablate->add_option("--config", abl_config, "base config file");
  ablate->add_option("--out", abl_out, "CSV to write instead of stdout");

  // gradcheck
  std::uint64_t gc_seed = 0;
  double gc_tol = 1e-4;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--seed", gc_seed)->capture_default_str();
  gradcheck->add_option("--tol", gc_tol, "maximum relative error")->capture_default_str();

  // contrast
  std::string con_ckpt, con_dataset, con_out;
  std::size_t con_scene = 0;
  auto* contrast = app.add_subcommand("contrast", "Dump per-direction contrast for one scene");
  contrast->add_option("--ckpt", con_ckpt)->required();
  contrast->add_option("--dataset", con_dataset)->required();
  contrast->add_option("--scene", con_scene)->capture_default_str();
  contrast->add_option("--out", con_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      const cpe::TrainConfig cfg = cpe::load_config(train_config);
      const auto scenes = cpe::training_scenes(cfg);
      const cpe::TrainResult r = cpe::train(cfg, scenes);
      cpe::save_checkpoint(train_out, r.model.to_checkpoint());
      if (!train_curve.empty()) write_curve(train_curve, r.curve);
      if (!r.curve.empty()) {
        std::cerr << "trained " << r.curve.size() << " iterations, last loss "
                  << cpe::format_real(r.curve.back().total) << '\n';
      }
    } else if (*eval) {
      const cpe::CpeModel model = cpe::CpeModel::from_checkpoint(cpe::load_checkpoint(eval_ckpt));
      const auto scenes = cpe::load_dataset(eval_dataset);
      const cpe::Metrics m = cpe::evaluate(model, scenes, eval_nms);
      auto out = open_out(eval_metrics);
      cpe::write_metrics_csv(out, m);
    } else if (*generate) {
      const cpe::TrainConfig cfg = cpe::load_config(gen_config);
      cpe::save_dataset(gen_out, gen_split == "train" ? cpe::training_scenes(cfg)
                                                      : cpe::test_scenes(cfg));
    } else if (*extend) {
      const cpe::ImageDims img = parse_dims(ext_dims);
      const cpe::Direction dir = cpe::parse_direction(ext_dir);
      std::vector<cpe::LabeledBox> boxes;
      if (ext_boxes == "-") {
        boxes = cpe::read_boxes(std::cin);
      } else {
        std::ifstream in(ext_boxes);
        if (!in) throw std::runtime_error("cannot open " + ext_boxes);
        boxes = cpe::read_boxes(in);
      }
      for (auto& lb : boxes) lb.box = cpe::extend_box(lb.box, dir, img, ext_t, !ext_no_ratio);
      cpe::write_boxes(std::cout, boxes);
    } else if (*ablate) {
      cpe::TrainConfig base;
      if (!abl_config.empty()) base = cpe::load_config(abl_config);
      const cpe::Grid grid = cpe::load_grid(abl_grid);
      const auto rows = cpe::run_ablation(base, grid);
      if (abl_out.empty()) {
        cpe::write_ablation_csv(std::cout, grid, rows);
      } else {
        auto out = open_out(abl_out);
        cpe::write_ablation_csv(out, grid, rows);
      }
    } else if (*gradcheck) {
      bool ok = true;
      for (const auto& r : cpe::run_gradchecks(gc_seed)) {
        const bool pass = r.max_rel_error < gc_tol;
        ok = ok && pass;
        std::printf("%-20s params=%zu max_rel_error=%.3e %s\n", r.name.c_str(),
                    r.num_params, r.max_rel_error, pass ? "ok" : "FAIL");
      }
      return ok ? 0 : 1;
    } else if (*contrast) {
      const cpe::CpeModel model = cpe::CpeModel::from_checkpoint(cpe::load_checkpoint(con_ckpt));
      const auto scenes = cpe::load_dataset(con_dataset);
      if (con_scene >= scenes.size()) throw std::runtime_error("scene index out of range");
      cpe::tc::NoGradGuard no_grad;
      const auto in = cpe::prepare_inputs(scenes[con_scene], model.config());
      const auto r = model.forward(in, nullptr, true);
      if (!r.dump) throw std::runtime_error("model has contrast disabled");
      auto out = open_out(con_out);
      cpe::write_contrast_csv(out, *r.dump);
    }
  } catch (const std::exception& e) {
    std::cerr << "cpe: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
