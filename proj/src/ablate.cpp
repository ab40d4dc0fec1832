#include "cpe/ablate.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "cpe/train.hpp"

namespace cpe {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string fixed(const std::optional<double>& v, int decimals) {
  if (!v) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, *v);
  return buf;
}

}  // namespace

Grid parse_grid(std::istream& in) {
  Grid grid;
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
      throw ConfigError("grid line " + std::to_string(lineno) + ": expected key = v1 | v2");
    }
    GridAxis axis{trim(line.substr(0, eq)), {}};
    std::stringstream rest(line.substr(eq + 1));
    for (std::string v; std::getline(rest, v, '|');) {
      v = trim(v);
      if (v.empty()) {
        throw ConfigError("grid line " + std::to_string(lineno) + ": empty alternative");
      }
      axis.values.push_back(v);
    }
    if (axis.values.empty()) {
      throw ConfigError("grid line " + std::to_string(lineno) + ": no values for " + axis.key);
    }
    // Reject unknown keys and malformed values before any training starts.
    for (const auto& v : axis.values) {
      TrainConfig probe;
      try {
        apply_setting(probe, axis.key, v);
      } catch (const ConfigError& e) {
        throw ConfigError("grid line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    grid.axes.push_back(std::move(axis));
  }
  return grid;
}

Grid load_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open grid " + path.string());
  return parse_grid(in);
}

std::vector<std::vector<std::pair<std::string, std::string>>> expand_grid(
    const Grid& grid) {
  std::vector<std::vector<std::pair<std::string, std::string>>> out;
  if (grid.axes.empty()) return out;
  out.emplace_back();
  for (const auto& axis : grid.axes) {
    std::vector<std::vector<std::pair<std::string, std::string>>> next;
    for (const auto& partial : out) {
      for (const auto& v : axis.values) {
        next.push_back(partial);
        next.back().emplace_back(axis.key, v);
      }
    }
    out = std::move(next);
  }
  return out;
}

std::vector<AblationRow> run_ablation(const TrainConfig& base, const Grid& grid) {
  std::vector<AblationRow> rows;
  for (auto& settings : expand_grid(grid)) {
    TrainConfig cfg = base;
    for (const auto& [k, v] : settings) apply_setting(cfg, k, v);
    cfg.finalize();
    const auto scenes = training_scenes(cfg);
    const TrainResult tr = train(cfg, scenes);
    AblationRow row;
    row.settings = std::move(settings);
    row.metrics = evaluate(tr.model, scenes, cfg.nms_iou);
    row.final_loss = dataset_loss(tr.model, scenes);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_ablation_csv(std::ostream& out, const Grid& grid,
                        const std::vector<AblationRow>& rows) {
  for (const auto& axis : grid.axes) out << axis.key << ',';
  out << "ap,corloc,top_iou,final_loss\n";
  for (const auto& row : rows) {
    for (const auto& kv : row.settings) {
      // Comma lists such as "R2L,L2R" would split the cell.
      std::string v = kv.second;
      for (auto& ch : v) {
        if (ch == ',') ch = ';';
      }
      out << v << ',';
    }
    out << fixed(row.metrics.mean_ap, 4) << ',' << fixed(row.metrics.mean_corloc, 4)
        << ',' << fixed(row.metrics.mean_top_iou, 6) << ','
        << fixed(row.final_loss, 6) << '\n';
  }
}

}  // namespace cpe
