#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cpe/config.hpp"
#include "cpe/eval.hpp"

namespace cpe {

/// One swept key and its alternatives, written `key = v1 | v2 | ...`.
/// A line with a single value fixes that key for every configuration.
struct GridAxis {
  std::string key;
  std::vector<std::string> values;
};

struct Grid {
  std::vector<GridAxis> axes;
};

Grid parse_grid(std::istream& in);
Grid load_grid(const std::filesystem::path& path);

/// Cartesian product of the axes, first axis varying slowest. Each entry is
/// the list of (key, value) settings for one configuration. An empty grid
/// yields no configurations.
std::vector<std::vector<std::pair<std::string, std::string>>> expand_grid(
    const Grid& grid);

struct AblationRow {
  std::vector<std::pair<std::string, std::string>> settings;
  Metrics metrics;
  double final_loss = 0.0;
};

/// Trains each configuration on its training split and evaluates it on the
/// same scenes, exactly as `cpe train` followed by `cpe eval` would.
std::vector<AblationRow> run_ablation(const TrainConfig& base, const Grid& grid);

/// CSV: one column per swept key, then ap, corloc, top_iou, final_loss.
void write_ablation_csv(std::ostream& out, const Grid& grid,
                        const std::vector<AblationRow>& rows);

}  // namespace cpe
