#include "schn/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "schn/degradation.hpp"
#include "schn/errors.hpp"
#include "schn/metrics.hpp"
#include "schn/parallel.hpp"
#include "schn/rng.hpp"

#ifndef SCHN_VERSION
#define SCHN_VERSION "0.0.0"
#endif

namespace schn {
namespace {

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string short_num(double v) { return fmt(v, "%g"); }

}  // namespace

std::string EvalCondition::label() const {
  std::string s = "x" + std::to_string(scale_factor) + "_";
  s += isotropic() ? "iso" + short_num(sigma_x) : "aniso" + short_num(sigma_x) + "-" + short_num(sigma_y);
  s += "_n" + short_num(noise_level);
  return s;
}

void EvalCondition::validate() const {
  if (scale_factor < 1) throw ConfigError("eval condition scale must be >= 1");
  if (!(sigma_x > 0.0) || !(sigma_y > 0.0)) throw ConfigError("eval condition sigmas must be > 0");
  if (!(noise_level >= 0.0 && noise_level <= 50.0)) {
    throw ConfigError("eval condition noise must be 0 or in (0, 50]");
  }
}

void to_json(nlohmann::json& j, const EvalCondition& c) {
  j = {{"scale", c.scale_factor}, {"sigma_x", c.sigma_x}, {"sigma_y", c.sigma_y}, {"noise", c.noise_level}};
}

void from_json(const nlohmann::json& j, EvalCondition& c) {
  try {
    c.scale_factor = j.at("scale").get<int>();
    if (j.contains("sigma")) {
      c.sigma_x = c.sigma_y = j.at("sigma").get<double>();
    } else {
      c.sigma_x = j.at("sigma_x").get<double>();
      c.sigma_y = j.at("sigma_y").get<double>();
    }
    c.noise_level = j.value("noise", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid eval condition: ") + e.what());
  }
  c.validate();
}

std::vector<EvalCondition> parse_grid(const nlohmann::json& j) {
  const auto& list = j.is_object() ? j.value("conditions", nlohmann::json::array()) : j;
  if (!list.is_array()) throw ConfigError("eval grid must be an array of conditions");
  std::vector<EvalCondition> out;
  for (const auto& item : list) out.push_back(item.get<EvalCondition>());
  return out;
}

std::vector<EvalCondition> load_grid(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open grid " + path.string());
  try {
    return parse_grid(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("invalid grid JSON in " + path.string() + ": " + e.what());
  }
}

ImageBuffer run_system(const EvalSystem& system, const ImageBuffer& lr, int scale_factor) {
  if (!system.model) return clamp01(bicubic_resize(lr, ScaleRatio{scale_factor, 1}));
  if (system.model->config().scale_factor != scale_factor) {
    throw ConfigError("model scale factor does not match the eval condition");
  }
  NoGradGuard guard;
  const auto input = images_to_tensor<float>(std::span<const ImageBuffer>(&lr, 1));
  const auto out = schn_forward(input, *system.model, ForwardOptions{false});
  return clamp01(tensor_to_image(out.final_output()));
}

ImageBuffer eval_input(const ImageBuffer& hr, const std::string& name, const EvalCondition& condition,
                       std::uint64_t seed) {
  Provenance p;
  p.blur = BlurDraw{condition.sigma_x, condition.sigma_y, 0.0};
  if (condition.noise_level > 0.0) {
    p.noise_level = condition.noise_level;
    p.noise_seed = derive_seed(seed, {fnv1a(condition.label()), fnv1a(name)});
  }
  return degrade_replay(hr, condition.scale_factor, p).x;
}

EvalReport eval_images(const EvalSystem& system, const std::vector<NamedImage>& images,
                       const std::vector<EvalCondition>& conditions, std::uint64_t seed) {
  for (const auto& c : conditions) c.validate();
  EvalReport report;
  report.version = SCHN_VERSION;
  report.system = system.name;
  report.seed = seed;
  report.conditions = conditions;

  std::vector<const NamedImage*> order;
  for (const auto& im : images) order.push_back(&im);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->name < b->name; });

  const std::size_t n_img = order.size();
  std::vector<EvalRow> rows(conditions.size() * n_img);
  std::vector<char> valid(rows.size(), 0);
  parallel_for(rows.size(), [&](std::size_t k) {
    const std::size_t ci = k / n_img;
    const auto& item = *order[k % n_img];
    const auto& cond = conditions[ci];
    const auto hr = mod_crop(item.image, cond.scale_factor);
    if (hr.height < 16 || hr.width < 16) return;
    const auto lr = eval_input(hr, item.name, cond, seed);
    const auto sr = run_system(system, lr, cond.scale_factor);
    rows[k] = {ci, item.name, psnr_rgb(sr, hr), ssim_rgb(sr, hr)};
    valid[k] = 1;
  });

  report.aggregates.assign(conditions.size(), {});
  std::vector<char> undersized(n_img, 0);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    if (!valid[k]) {
      undersized[k % n_img] = 1;
      continue;
    }
    auto& agg = report.aggregates[rows[k].condition];
    agg.psnr += rows[k].psnr;
    agg.ssim += rows[k].ssim;
    agg.count += 1;
    report.rows.push_back(std::move(rows[k]));
  }
  for (auto& agg : report.aggregates) {
    if (agg.count > 0) {
      agg.psnr /= static_cast<double>(agg.count);
      agg.ssim /= static_cast<double>(agg.count);
    }
  }
  report.skipped = static_cast<std::size_t>(std::count(undersized.begin(), undersized.end(), 1));
  return report;
}

EvalReport eval_grid(const EvalSystem& system, const std::filesystem::path& dataset_dir,
                     const std::vector<EvalCondition>& conditions, std::uint64_t seed) {
  if (!std::filesystem::is_directory(dataset_dir)) {
    throw ConfigError("dataset directory not found: " + dataset_dir.string());
  }
  std::vector<NamedImage> images;
  std::size_t unreadable = 0;
  for (const auto& path : list_pngs(dataset_dir)) {
    try {
      images.push_back({path.stem().string(), read_png(path)});
    } catch (const std::exception&) {
      ++unreadable;
    }
  }
  auto report = eval_images(system, images, conditions, seed);
  report.skipped += unreadable;
  return report;
}

std::string EvalReport::to_csv() const {
  std::ostringstream out;
  out << "condition,scale,sigma_x,sigma_y,noise,image,psnr,ssim\n";
  for (const auto& r : rows) {
    const auto& c = conditions[r.condition];
    out << c.label() << ',' << c.scale_factor << ',' << short_num(c.sigma_x) << ','
        << short_num(c.sigma_y) << ',' << short_num(c.noise_level) << ',' << r.image << ','
        << fmt(r.psnr, "%.4f") << ',' << fmt(r.ssim, "%.6f") << '\n';
  }
  return out.str();
}

nlohmann::json EvalReport::to_json() const {
  auto conds = nlohmann::json::array();
  for (std::size_t i = 0; i < conditions.size(); ++i) {
    auto images = nlohmann::json::array();
    for (const auto& r : rows) {
      if (r.condition == i) images.push_back({{"image", r.image}, {"psnr", r.psnr}, {"ssim", r.ssim}});
    }
    conds.push_back({{"label", conditions[i].label()},
                     {"condition", conditions[i]},
                     {"mean_psnr", aggregates[i].psnr},
                     {"mean_ssim", aggregates[i].ssim},
                     {"count", aggregates[i].count},
                     {"images", images}});
  }
  return {{"tool", tool}, {"version", version}, {"system", system},
          {"seed", seed}, {"skipped", skipped}, {"conditions", conds}};
}

}  // namespace schn
