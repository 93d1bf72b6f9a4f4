#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "schn/image.hpp"
#include "schn/network.hpp"

namespace schn {

// One benchmark cell: blur kernel with theta = 0, then bicubic down by the
// scale factor, then optional noise.
struct EvalCondition {
  int scale_factor = 4;
  double sigma_x = 0.5;
  double sigma_y = 0.5;
  double noise_level = 0.0;  // 0 or in (0, 50]

  bool isotropic() const { return sigma_x == sigma_y; }
  std::string label() const;
  void validate() const;
  friend bool operator==(const EvalCondition&, const EvalCondition&) = default;
};

void to_json(nlohmann::json& j, const EvalCondition& c);
void from_json(const nlohmann::json& j, EvalCondition& c);

// Accepts {"conditions": [...]} or a bare array. Each entry is
// {"scale", "sigma"} or {"scale", "sigma_x", "sigma_y"}, plus optional "noise".
std::vector<EvalCondition> parse_grid(const nlohmann::json& j);
std::vector<EvalCondition> load_grid(const std::filesystem::path& path);

// Bicubic upsampling of the LR input when model is empty.
struct EvalSystem {
  std::string name = "bicubic";
  std::optional<SchnModel<float>> model;

  static EvalSystem bicubic() { return {}; }
  static EvalSystem from_model(std::string name, SchnModel<float> model) {
    return {std::move(name), std::move(model)};
  }
};

struct EvalRow {
  std::size_t condition = 0;  // index into EvalReport::conditions
  std::string image;
  double psnr = 0.0;
  double ssim = 0.0;
};

struct EvalAggregate {
  double psnr = 0.0;
  double ssim = 0.0;
  std::size_t count = 0;
};

struct EvalReport {
  std::string tool = "schn";
  std::string version;
  std::string system;
  std::uint64_t seed = 0;
  std::size_t skipped = 0;  // unreadable or undersized images
  std::vector<EvalCondition> conditions;
  std::vector<EvalRow> rows;               // sorted by condition, then image name
  std::vector<EvalAggregate> aggregates;   // one per condition

  std::string to_csv() const;
  nlohmann::json to_json() const;
};

struct NamedImage {
  std::string name;
  ImageBuffer image;
};

// Super-resolves one degraded LR image with the system, clamped to [0,1].
ImageBuffer run_system(const EvalSystem& system, const ImageBuffer& lr, int scale_factor);

// Degraded LR for (image, condition); the noise stream depends only on
// (seed, condition label, image name).
ImageBuffer eval_input(const ImageBuffer& hr, const std::string& name, const EvalCondition& condition,
                       std::uint64_t seed);

EvalReport eval_images(const EvalSystem& system, const std::vector<NamedImage>& images,
                       const std::vector<EvalCondition>& conditions, std::uint64_t seed);
EvalReport eval_grid(const EvalSystem& system, const std::filesystem::path& dataset_dir,
                     const std::vector<EvalCondition>& conditions, std::uint64_t seed);

}  // namespace schn
