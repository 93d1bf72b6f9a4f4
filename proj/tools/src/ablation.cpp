#include "schn_cli/ablation.hpp"

#include <cstdio>
#include <limits>
#include <sstream>

#include "schn/errors.hpp"
#include "schn/synthetic.hpp"

namespace schn::cli {
namespace {

int parse_int(const std::string& s) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw ConfigError("");
    return v;
  } catch (const std::exception&) {
    throw ConfigError("ablation grid: '" + s + "' is not an integer");
  }
}

}  // namespace

AblationAxes parse_ablation_axes(const std::string& spec) {
  AblationAxes axes{{}, {}};
  std::vector<int>* current = nullptr;
  std::stringstream ss(spec);
  std::string token;
  while (std::getline(ss, token, ',')) {
    if (const auto eq = token.find('='); eq != std::string::npos) {
      const auto key = token.substr(0, eq);
      if (key == "maps") {
        current = &axes.maps;
      } else if (key == "modules") {
        current = &axes.modules;
      } else {
        throw ConfigError("ablation grid: unknown axis '" + key + "'");
      }
      token = token.substr(eq + 1);
    }
    if (!current) throw ConfigError("ablation grid must start with maps= or modules=");
    if (const auto dots = token.find(".."); dots != std::string::npos) {
      const int lo = parse_int(token.substr(0, dots));
      const int hi = parse_int(token.substr(dots + 2));
      if (hi < lo) throw ConfigError("ablation grid: empty range " + token);
      for (int v = lo; v <= hi; ++v) current->push_back(v);
    } else {
      current->push_back(parse_int(token));
    }
  }
  if (axes.maps.empty() || axes.modules.empty()) {
    throw ConfigError("ablation grid needs both maps= and modules=");
  }
  for (int v : axes.maps) {
    if (v < 0) throw ConfigError("ablation grid: negative map count");
  }
  for (int v : axes.modules) {
    if (v < 0) throw ConfigError("ablation grid: negative module count");
  }
  return axes;
}

AblationSettings ablation_settings_from_json(const nlohmann::json& j, int scale_factor) {
  AblationSettings s;
  s.condition.scale_factor = scale_factor;
  if (!j.is_object()) return s;
  try {
    s.steps = j.value("steps", s.steps);
    if (j.contains("condition")) {
      s.condition = j.at("condition").get<EvalCondition>();
    }
    s.eval_dir = j.value("eval_dir", s.eval_dir);
    s.eval_count = j.value("eval_count", s.eval_count);
    s.eval_size = j.value("eval_size", s.eval_size);
    s.eval_seed = j.value("eval_seed", s.eval_seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid ablation settings: ") + e.what());
  }
  if (s.steps < 0) throw ConfigError("ablation steps must be >= 0");
  if (s.condition.scale_factor != scale_factor) {
    throw ConfigError("ablation condition scale differs from the model scale");
  }
  return s;
}

bool valid_ablation_cell(int maps, int modules) { return !(maps > 0 && modules == 0); }

std::vector<AblationCell> run_ablation(const TrainConfig& base, const AblationAxes& axes,
                                       const AblationSettings& settings,
                                       const std::vector<ImageBuffer>& patches) {
  std::vector<NamedImage> eval_images_list;
  if (settings.eval_dir.empty()) {
    const auto imgs = make_synthetic_set(settings.eval_count, settings.eval_size, settings.eval_size,
                                         settings.eval_seed);
    for (std::size_t i = 0; i < imgs.size(); ++i) {
      eval_images_list.push_back({"synthetic_" + std::to_string(i), imgs[i]});
    }
  } else {
    for (const auto& path : list_pngs(settings.eval_dir)) {
      eval_images_list.push_back({path.stem().string(), read_png(path)});
    }
  }

  std::vector<AblationCell> cells;
  for (int maps : axes.maps) {
    for (int modules : axes.modules) {
      AblationCell cell{maps, modules, std::nullopt, 0, 0.0};
      if (valid_ablation_cell(maps, modules)) {
        TrainConfig cfg = base;
        cfg.model.n_maps = maps;
        cfg.model.n_modules = modules;
        cfg.max_epochs = std::numeric_limits<int>::max();
        Trainer trainer(cfg, patches);
        for (std::int64_t s = 0; s < settings.steps; ++s) cell.final_loss = trainer.step().total;
        cell.parameters = trainer.model().parameter_count();
        const auto system = EvalSystem::from_model("ablation", trainer.model());
        const auto report = eval_images(system, eval_images_list, {settings.condition}, cfg.seed);
        cell.result = report.aggregates.at(0);
      }
      cells.push_back(cell);
    }
  }
  return cells;
}

std::string ablation_csv(const AblationAxes& axes, const std::vector<AblationCell>& cells) {
  std::ostringstream out;
  out << "maps\\modules";
  for (int m : axes.modules) out << ',' << m;
  out << '\n';
  std::size_t k = 0;
  for (int maps : axes.maps) {
    out << maps;
    for (std::size_t j = 0; j < axes.modules.size(); ++j, ++k) {
      const auto& cell = cells.at(k);
      if (cell.result) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%.2f/%.4f", cell.result->psnr, cell.result->ssim);
        out << ',' << buf;
      } else {
        out << ",-/-";
      }
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace schn::cli
