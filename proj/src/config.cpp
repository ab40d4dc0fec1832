#include "cpe/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace cpe {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_real(const std::string& key, const std::string& v) {
  double out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::array<bool, 4> to_directions(const std::string& key, const std::string& v) {
  std::array<bool, 4> mask{};
  if (v == "all") return {true, true, true, true};
  std::stringstream ss(v);
  for (std::string tok; std::getline(ss, tok, ',');) {
    tok = trim(tok);
    if (tok.empty()) continue;
    try {
      mask[static_cast<std::size_t>(parse_direction(tok))] = true;
    } catch (const InvalidInput&) {
      throw ConfigError(key + ": unknown direction '" + tok + "'");
    }
  }
  return mask;
}

using Setter = std::function<void(TrainConfig&, const std::string&,
                                  const std::string&)>;

template <class T>
Setter real(T TrainConfig::*field) {
  return [field](TrainConfig& c, const std::string& k, const std::string& v) {
    c.*field = to_real(k, v);
  };
}

Setter count(std::function<std::size_t&(TrainConfig&)> ref) {
  return [ref](TrainConfig& c, const std::string& k, const std::string& v) {
    ref(c) = static_cast<std::size_t>(to_uint(k, v));
  };
}

Setter number(std::function<double&(TrainConfig&)> ref) {
  return [ref](TrainConfig& c, const std::string& k, const std::string& v) {
    ref(c) = to_real(k, v);
  };
}

Setter flag(std::function<bool&(TrainConfig&)> ref) {
  return [ref](TrainConfig& c, const std::string& k, const std::string& v) {
    ref(c) = to_bool(k, v);
  };
}

const std::vector<std::pair<std::string, Setter>>& setters() {
  static const std::vector<std::pair<std::string, Setter>> table = {
      {"lr", real(&TrainConfig::lr)},
      {"momentum", real(&TrainConfig::momentum)},
      {"weight_decay", real(&TrainConfig::weight_decay)},
      {"iterations", count([](TrainConfig& c) -> std::size_t& { return c.iterations; })},
      {"batch_size", count([](TrainConfig& c) -> std::size_t& { return c.batch_size; })},
      {"lr_drop_at", count([](TrainConfig& c) -> std::size_t& { return c.lr_drop_at; })},
      {"lr_drop_factor", real(&TrainConfig::lr_drop_factor)},
      {"grad_clip", real(&TrainConfig::grad_clip)},
      {"seed", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.seed = to_uint(k, v);
       }},
      {"nms_iou", real(&TrainConfig::nms_iou)},
      {"t", number([](TrainConfig& c) -> double& { return c.model.t; })},
      {"alpha", number([](TrainConfig& c) -> double& { return c.model.alpha; })},
      {"K", count([](TrainConfig& c) -> std::size_t& { return c.model.branches; })},
      {"tau", number([](TrainConfig& c) -> double& { return c.model.tau; })},
      {"pool_steps", count([](TrainConfig& c) -> std::size_t& { return c.model.pooling.steps; })},
      {"pool_base", count([](TrainConfig& c) -> std::size_t& { return c.model.pooling.base; })},
      {"pool_extra", count([](TrainConfig& c) -> std::size_t& { return c.model.pooling.extra; })},
      {"hidden", count([](TrainConfig& c) -> std::size_t& { return c.model.hidden; })},
      {"contrast_init", number([](TrainConfig& c) -> double& { return c.model.contrast_init; })},
      {"mil_hidden", count([](TrainConfig& c) -> std::size_t& { return c.model.mil_hidden; })},
      {"roi_grid", count([](TrainConfig& c) -> std::size_t& { return c.model.roi_grid; })},
      {"directions", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.model.directions = to_directions(k, v);
       }},
      {"ratio_scaling", flag([](TrainConfig& c) -> bool& { return c.model.ratio_scaling; })},
      {"cpe", flag([](TrainConfig& c) -> bool& { return c.model.cpe; })},
      {"attention", flag([](TrainConfig& c) -> bool& { return c.model.attention; })},
      {"decoder", flag([](TrainConfig& c) -> bool& { return c.model.decoder; })},
      {"components", [](TrainConfig& c, const std::string& k, const std::string& v) {
         // Cumulative component sets: none < base < attention < full.
         if (v == "none") {
           c.model.cpe = false;
         } else if (v == "base") {
           c.model.cpe = true, c.model.attention = false, c.model.decoder = false;
         } else if (v == "attention") {
           c.model.cpe = true, c.model.attention = true, c.model.decoder = false;
         } else if (v == "full") {
           c.model.cpe = true, c.model.attention = true, c.model.decoder = true;
         } else {
           throw ConfigError(k + ": expected none|base|attention|full, got '" + v + "'");
         }
       }},
      {"dataset_seed", [](TrainConfig& c, const std::string& k, const std::string& v) {
         c.dataset_seed = to_uint(k, v);
       }},
      {"train_scenes", count([](TrainConfig& c) -> std::size_t& { return c.train_scenes; })},
      {"test_scenes", count([](TrainConfig& c) -> std::size_t& { return c.test_scenes; })},
      {"classes", count([](TrainConfig& c) -> std::size_t& { return c.scene.classes; })},
      {"objects", count([](TrainConfig& c) -> std::size_t& { return c.scene.objects; })},
      {"distractors", count([](TrainConfig& c) -> std::size_t& { return c.scene.distractors; })},
      {"channels", count([](TrainConfig& c) -> std::size_t& { return c.scene.channels; })},
      {"image_size", count([](TrainConfig& c) -> std::size_t& { return c.scene.image_size; })},
      {"feature_stride", count([](TrainConfig& c) -> std::size_t& { return c.scene.feature_stride; })},
      {"background_boxes", count([](TrainConfig& c) -> std::size_t& { return c.scene.background_boxes; })},
      {"background_max_iou", number([](TrainConfig& c) -> double& { return c.scene.background_max_iou; })},
      {"jittered_boxes", count([](TrainConfig& c) -> std::size_t& { return c.scene.jittered_boxes; })},
      {"part_boxes", count([](TrainConfig& c) -> std::size_t& { return c.scene.part_boxes; })},
      {"part_fraction", number([](TrainConfig& c) -> double& { return c.scene.part_fraction; })},
      {"body_level", number([](TrainConfig& c) -> double& { return c.scene.body_level; })},
      {"part_level", number([](TrainConfig& c) -> double& { return c.scene.part_level; })},
      {"class_gain", number([](TrainConfig& c) -> double& { return c.scene.class_gain; })},
      {"central_parts", flag([](TrainConfig& c) -> bool& { return c.scene.central_parts; })},
      {"noise", number([](TrainConfig& c) -> double& { return c.scene.noise; })},
  };
  return table;
}

}  // namespace

void TrainConfig::finalize() {
  model.num_classes = scene.classes;
  model.channels = scene.channels;
  if (!(lr > 0)) throw ConfigError("lr must be > 0");
  if (momentum < 0 || momentum >= 1) throw ConfigError("momentum must lie in [0, 1)");
  if (weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
  if (!(nms_iou > 0 && nms_iou <= 1)) throw ConfigError("nms_iou must lie in (0, 1]");
  if (grad_clip < 0) throw ConfigError("grad_clip must be >= 0");
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (train_scenes == 0) throw ConfigError("train_scenes must be >= 1");
  try {
    scene.validate();
    model.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

void apply_setting(TrainConfig& cfg, const std::string& key,
                   const std::string& value) {
  const auto& table = setters();
  auto it = std::find_if(table.begin(), table.end(),
                         [&](const auto& e) { return e.first == key; });
  if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second(cfg, key, value);
}

TrainConfig parse_config(std::istream& in) {
  TrainConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    try {
      apply_setting(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.finalize();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in);
}

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& e : setters()) k.push_back(e.first);
    return k;
  }();
  return keys;
}

std::uint64_t test_dataset_seed(std::uint64_t dataset_seed) {
  return dataset_seed ^ 0x5EED7E57ULL;
}

}  // namespace cpe
