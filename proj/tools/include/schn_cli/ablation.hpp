#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "schn/evaluation.hpp"
#include "schn/training.hpp"

namespace schn::cli {

struct AblationAxes {
  std::vector<int> maps{0, 1, 2, 3};
  std::vector<int> modules{0, 1, 4, 8, 12};
};

// "maps=0..3,modules=0,1,4,8,12": a key starts a list, a..b expands inclusively.
AblationAxes parse_ablation_axes(const std::string& spec);

// Desk-scale budget shared by every cell.
struct AblationSettings {
  std::int64_t steps = 200;
  EvalCondition condition{4, 2.0, 2.0, 0.0};
  std::string eval_dir;  // synthetic images when empty
  std::size_t eval_count = 4;
  int eval_size = 64;
  std::uint64_t eval_seed = 7;
};

AblationSettings ablation_settings_from_json(const nlohmann::json& j, int scale_factor);

struct AblationCell {
  int maps = 0;
  int modules = 0;
  std::optional<EvalAggregate> result;  // empty for invalid cells
  std::int64_t parameters = 0;
  double final_loss = 0.0;
};

bool valid_ablation_cell(int maps, int modules);

std::vector<AblationCell> run_ablation(const TrainConfig& base, const AblationAxes& axes,
                                       const AblationSettings& settings,
                                       const std::vector<ImageBuffer>& patches);

// maps as rows, modules as columns, "psnr/ssim" or "-/-".
std::string ablation_csv(const AblationAxes& axes, const std::vector<AblationCell>& cells);

}  // namespace schn::cli
