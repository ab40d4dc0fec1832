// Python bindings for the geometry helpers and the train/evaluate loop.

#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "cpe/checkpoint.hpp"
#include "cpe/config.hpp"
#include "cpe/eval.hpp"
#include "cpe/geometry.hpp"
#include "cpe/gradcheck.hpp"
#include "cpe/train.hpp"

namespace py = pybind11;

namespace {

using BoxTuple = std::tuple<double, double, double, double>;

cpe::Box to_box(const BoxTuple& t) {
  return cpe::Box(std::get<0>(t), std::get<1>(t), std::get<2>(t), std::get<3>(t));
}

BoxTuple from_box(const cpe::Box& b) { return {b.x(), b.y(), b.w(), b.h()}; }

py::dict metrics_dict(const cpe::Metrics& m) {
  py::list rows;
  for (const auto& c : m.per_class) {
    py::dict row;
    row["ap"] = c.ap;
    row["corloc"] = c.corloc;
    row["top_iou"] = c.top_iou;
    rows.append(row);
  }
  py::dict out;
  out["per_class"] = rows;
  out["ap"] = m.mean_ap;
  out["corloc"] = m.mean_corloc;
  out["top_iou"] = m.mean_top_iou;
  return out;
}

cpe::TrainConfig config_from(const std::map<std::string, std::string>& settings) {
  cpe::TrainConfig cfg;
  for (const auto& [k, v] : settings) cpe::apply_setting(cfg, k, v);
  cfg.finalize();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Contrastive proposal extension for weakly supervised detection";

  py::register_exception<cpe::InvalidParameter>(m, "InvalidParameter", PyExc_ValueError);
  py::register_exception<cpe::InvalidInput>(m, "InvalidInput", PyExc_ValueError);
  py::register_exception<cpe::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<cpe::CheckpointError>(m, "CheckpointError", PyExc_IOError);

  m.def(
      "extend_box",
      [](const BoxTuple& box, const std::string& direction, std::pair<double, double> image,
         double t, bool ratio_scaling) {
        return from_box(cpe::extend_box(to_box(box), cpe::parse_direction(direction),
                                        cpe::ImageDims(image.first, image.second), t,
                                        ratio_scaling));
      },
      py::arg("box"), py::arg("direction"), py::arg("image"), py::arg("t"),
      py::arg("ratio_scaling") = true,
      "Extend an (x, y, w, h) box toward R2L, L2R, T2B or B2T inside a (width, height) image.");

  m.def(
      "iou", [](const BoxTuple& a, const BoxTuple& b) { return cpe::iou(to_box(a), to_box(b)); },
      py::arg("a"), py::arg("b"));

  m.def(
      "nms",
      [](const std::vector<BoxTuple>& boxes, const std::vector<double>& scores, double thr) {
        std::vector<cpe::Box> bs;
        bs.reserve(boxes.size());
        for (const auto& b : boxes) bs.push_back(to_box(b));
        return cpe::nms(bs, scores, thr);
      },
      py::arg("boxes"), py::arg("scores"), py::arg("iou_threshold") = 0.3,
      "Indices kept by greedy non-maximum suppression, highest score first.");

  m.def("config_keys", &cpe::config_keys);

  m.def(
      "train",
      [](const std::map<std::string, std::string>& settings,
         const std::optional<std::filesystem::path>& checkpoint) {
        const cpe::TrainConfig cfg = config_from(settings);
        cpe::TrainResult r = [&] {
          py::gil_scoped_release release;
          return cpe::train(cfg, cpe::training_scenes(cfg));
        }();
        if (checkpoint) cpe::save_checkpoint(*checkpoint, r.model.to_checkpoint());
        std::vector<double> curve;
        curve.reserve(r.curve.size());
        for (const auto& rec : r.curve) curve.push_back(rec.total);
        py::dict out;
        out["loss_curve"] = curve;
        out["initial_loss"] = curve.empty() ? py::none() : py::cast(curve.front());
        out["final_loss"] = curve.empty() ? py::none() : py::cast(curve.back());
        return out;
      },
      py::arg("settings") = std::map<std::string, std::string>{},
      py::arg("checkpoint") = py::none(),
      "Train on the synthetic scenes described by `key = value` settings.");

  m.def(
      "evaluate",
      [](const std::filesystem::path& checkpoint, const std::filesystem::path& dataset,
         double nms_iou) {
        const auto model = cpe::CpeModel::from_checkpoint(cpe::load_checkpoint(checkpoint));
        const auto scenes = cpe::load_dataset(dataset);
        py::gil_scoped_release release;
        const cpe::Metrics metrics = cpe::evaluate(model, scenes, nms_iou);
        py::gil_scoped_acquire acquire;
        return metrics_dict(metrics);
      },
      py::arg("checkpoint"), py::arg("dataset"), py::arg("nms_iou") = 0.3);

  m.def(
      "generate",
      [](const std::map<std::string, std::string>& settings, const std::filesystem::path& out) {
        const cpe::TrainConfig cfg = config_from(settings);
        cpe::save_dataset(out, cpe::training_scenes(cfg));
      },
      py::arg("settings"), py::arg("out"), "Write the training scenes of a config to a directory.");

  m.def(
      "gradcheck",
      [](std::uint64_t seed) {
        std::map<std::string, double> out;
        for (const auto& r : cpe::run_gradchecks(seed)) out[r.name] = r.max_rel_error;
        return out;
      },
      py::arg("seed") = 0, "Largest relative finite-difference error per check.");
}
