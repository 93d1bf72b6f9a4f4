#include "schn/network.hpp"

#include <cmath>
#include <sstream>

#include "schn/errors.hpp"
#include "schn/ops.hpp"
#include "schn/rng.hpp"

namespace schn {

void SCHConfig::validate() const {
  if (channels < 1) throw ConfigError("channels must be >= 1");
  if (n_modules < 0) throw ConfigError("n_modules must be >= 0");
  if (n_maps < 0) throw ConfigError("n_maps must be >= 0");
  if (scale_factor != 2 && scale_factor != 4) throw ConfigError("scale_factor must be 2 or 4");
  if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw ConfigError("leaky_slope must lie in (0,1)");
}

void to_json(nlohmann::json& j, const SCHConfig& c) {
  j = nlohmann::json{{"channels", c.channels},
                     {"n_modules", c.n_modules},
                     {"n_maps", c.n_maps},
                     {"scale_factor", c.scale_factor},
                     {"leaky_slope", c.leaky_slope}};
}

void from_json(const nlohmann::json& j, SCHConfig& c) {
  try {
    SCHConfig d;
    c.channels = j.value("channels", d.channels);
    c.n_modules = j.value("n_modules", d.n_modules);
    c.n_maps = j.value("n_maps", d.n_maps);
    c.scale_factor = j.value("scale_factor", d.scale_factor);
    c.leaky_slope = j.value("leaky_slope", d.leaky_slope);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid model config: ") + e.what());
  }
  c.validate();
}

namespace {

std::int64_t conv_params(std::int64_t cin, std::int64_t cout) { return cin * cout * 9 + cout; }

std::int64_t head_params(const SCHConfig& c) {
  const std::int64_t ch = c.channels, s2 = c.scale_factor * c.scale_factor;
  return conv_params(ch, ch * s2) + conv_params(ch, 3);
}

}  // namespace

std::int64_t param_count(const SCHConfig& c, ParamMode mode) {
  c.validate();
  const std::int64_t ch = c.channels;
  const std::int64_t entry = conv_params(3, ch) + 2 * conv_params(ch, ch);
  if (c.n_modules == 0) return entry + head_params(c);
  const std::int64_t branch = conv_params(ch, ch) + conv_params(ch, 2);
  const std::int64_t body = c.n_maps * branch + conv_params(ch * (c.n_maps + 1), ch);
  const std::int64_t heads = mode == ParamMode::kFull ? c.n_modules : 1;
  return entry + c.n_modules * body + heads * head_params(c);
}

AblationMask full_mask(const SCHConfig& config) {
  return AblationMask(static_cast<std::size_t>(config.n_modules),
                      std::vector<bool>(static_cast<std::size_t>(config.n_maps), true));
}

AblationMask parse_mask(const std::string& spec, const SCHConfig& config) {
  AblationMask mask = full_mask(config);
  if (spec.empty() || spec == "none") return mask;
  auto bad = [&](const std::string& why) {
    return ConfigError("invalid mask spec '" + spec + "': " + why);
  };
  auto parse_index = [&](const std::string& s, int limit, const char* what) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      throw bad(std::string("bad ") + what + " '" + s + "'");
    }
    if (used != s.size() || v < 1 || v > limit) {
      throw bad(std::string(what) + " '" + s + "' outside 1.." + std::to_string(limit));
    }
    return v - 1;
  };
  std::stringstream items(spec);
  std::string item;
  while (std::getline(items, item, ';')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw bad("expected <module|all>:<maps>");
    const std::string module = item.substr(0, colon);
    std::vector<int> modules;
    if (module == "all") {
      for (int m = 0; m < config.n_modules; ++m) modules.push_back(m);
    } else {
      modules.push_back(parse_index(module, config.n_modules, "module"));
    }
    std::stringstream maps(item.substr(colon + 1));
    std::string map;
    bool any = false;
    while (std::getline(maps, map, ',')) {
      const int k = parse_index(map, config.n_maps, "map");
      for (int m : modules) mask[m][k] = false;
      any = true;
    }
    if (!any) throw bad("no maps listed");
  }
  return mask;
}

template <typename T>
SchnModel<T>::SchnModel(SCHConfig config) : config_(config) {
  config_.validate();
  const std::int64_t ch = config_.channels;
  const std::int64_t s2 = static_cast<std::int64_t>(config_.scale_factor) * config_.scale_factor;
  auto conv = [](std::int64_t cin, std::int64_t cout) {
    return Conv2dParams<T>{Tensor<T>::zeros({cout, cin, 3, 3}, true), Tensor<T>::zeros({cout}, true)};
  };
  auto head = [&] { return HeadParams<T>{conv(ch, ch * s2), conv(ch, 3)}; };
  entry = conv(3, ch);
  res_conv1 = conv(ch, ch);
  res_conv2 = conv(ch, ch);
  if (config_.n_modules == 0) standalone_head = head();
  for (int m = 0; m < config_.n_modules; ++m) {
    SCHModuleParams<T> mod;
    for (int b = 0; b < config_.n_maps; ++b) mod.branches.push_back({conv(ch, ch), conv(ch, 2)});
    mod.fusion = conv(ch * (config_.n_maps + 1), ch);
    mod.head = head();
    modules.push_back(std::move(mod));
  }
  mask = full_mask(config_);
}

template <typename T>
SchnModel<T> SchnModel<T>::initialized(SCHConfig config, std::uint64_t seed) {
  SchnModel model(config);
  Rng rng(derive_seed(seed, {0x1417u}));
  const double slope = model.config().leaky_slope;
  for (auto& [name, tensor] : model.named_parameters()) {
    const bool is_bias = tensor.rank() == 1;
    const bool offset_conv = name.find(".conv2.") != std::string::npos && name.find(".branch.") != std::string::npos;
    if (is_bias || offset_conv) continue;
    const double fan_in = static_cast<double>(tensor.dim(1) * tensor.dim(2) * tensor.dim(3));
    const double bound = std::sqrt(6.0 / ((1.0 + slope * slope) * fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : tensor.mutable_data()) v = static_cast<T>(dist(rng));
  }
  return model;
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>>> SchnModel<T>::named_parameters() const {
  std::vector<std::pair<std::string, Tensor<T>>> out;
  auto add = [&](const std::string& prefix, const Conv2dParams<T>& p) {
    out.emplace_back(prefix + ".weight", p.weight);
    out.emplace_back(prefix + ".bias", p.bias);
  };
  add("entry.conv", entry);
  add("entry.res.conv1", res_conv1);
  add("entry.res.conv2", res_conv2);
  if (config_.n_modules == 0) {
    add("head.expand", standalone_head.expand);
    add("head.rgb", standalone_head.rgb);
  }
  for (std::size_t m = 0; m < modules.size(); ++m) {
    const std::string prefix = "modules." + std::to_string(m);
    for (std::size_t b = 0; b < modules[m].branches.size(); ++b) {
      const std::string bp = prefix + ".branch." + std::to_string(b);
      add(bp + ".conv1", modules[m].branches[b].conv1);
      add(bp + ".conv2", modules[m].branches[b].conv2);
    }
    add(prefix + ".fusion", modules[m].fusion);
    add(prefix + ".head.expand", modules[m].head.expand);
    add(prefix + ".head.rgb", modules[m].head.rgb);
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> SchnModel<T>::parameters() const {
  std::vector<Tensor<T>> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

template <typename T>
std::int64_t SchnModel<T>::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : named_parameters()) n += static_cast<std::int64_t>(t.numel());
  return n;
}

template <typename T>
template <typename U>
SchnModel<U> SchnModel<T>::cast() const {
  SchnModel<U> out(config_);
  const auto src = named_parameters();
  auto dst = out.named_parameters();
  for (std::size_t i = 0; i < src.size(); ++i) {
    auto d = dst[i].second.mutable_data();
    const auto s = src[i].second.data();
    for (std::size_t k = 0; k < s.size(); ++k) d[k] = static_cast<U>(s[k]);
  }
  out.mask = mask;
  return out;
}

template <typename T>
Tensor<T> conv3x3(const Tensor<T>& x, const Conv2dParams<T>& p) {
  return conv2d(x, p.weight, p.bias, 1);
}

template <typename T>
Tensor<T> entry_forward(const Tensor<T>& lr, const SchnModel<T>& model) {
  if (lr.rank() != 4 || lr.dim(1) != 3) {
    throw ConfigError("SCHN input must be [N,3,h,w], got " + to_string(lr.shape()));
  }
  const T slope = static_cast<T>(model.config().leaky_slope);
  auto feat = leaky_relu(conv3x3(lr, model.entry), slope);
  auto res = conv3x3(leaky_relu(conv3x3(feat, model.res_conv1), slope), model.res_conv2);
  return add(feat, res);
}

template <typename T>
Tensor<T> hallucination_branch(const Tensor<T>& feat, const BranchParams<T>& params, T slope) {
  return conv3x3(leaky_relu(conv3x3(feat, params.conv1), slope), params.conv2);
}

template <typename T>
Tensor<T> hr_head(const Tensor<T>& feat, const HeadParams<T>& params, int scale_factor) {
  return conv3x3(pixel_shuffle(conv3x3(feat, params.expand), scale_factor), params.rgb);
}

template <typename T>
ModuleOutput<T> sch_module_forward(const Tensor<T>& feat, const SCHModuleParams<T>& params,
                                   const std::vector<bool>& mask, const SCHConfig& config,
                                   bool compute_head) {
  if (mask.size() != params.branches.size()) {
    throw ConfigError("mask has " + std::to_string(mask.size()) + " entries for " +
                      std::to_string(params.branches.size()) + " hallucination maps");
  }
  const T slope = static_cast<T>(config.leaky_slope);
  ModuleOutput<T> out;
  std::vector<Tensor<T>> parts{feat};
  for (std::size_t b = 0; b < params.branches.size(); ++b) {
    auto offsets = hallucination_branch(feat, params.branches[b], slope);
    parts.push_back(mask[b] ? grid_sample_offsets(feat, offsets) : zeros_like(feat));
    out.maps.push_back(std::move(offsets));
  }
  auto fused = parts.size() == 1 ? feat : concat_channels(parts);
  out.features = leaky_relu(conv3x3(fused, params.fusion), slope);
  if (compute_head) out.hr = hr_head(out.features, params.head, config.scale_factor);
  return out;
}

template <typename T>
ForwardResult<T> schn_forward(const Tensor<T>& lr, const SchnModel<T>& model,
                              ForwardOptions options) {
  const auto& cfg = model.config();
  ForwardResult<T> result;
  auto feat = entry_forward(lr, model);
  if (cfg.n_modules == 0) {
    result.hr_outputs.push_back(hr_head(feat, model.standalone_head, cfg.scale_factor));
    return result;
  }
  if (model.mask.size() != model.modules.size()) throw ConfigError("ablation mask size mismatch");
  for (std::size_t m = 0; m < model.modules.size(); ++m) {
    const bool last = m + 1 == model.modules.size();
    auto out = sch_module_forward(feat, model.modules[m], model.mask[m], cfg,
                                  options.all_heads || last);
    if (out.hr.defined()) result.hr_outputs.push_back(std::move(out.hr));
    result.maps.push_back(std::move(out.maps));
    feat = std::move(out.features);
  }
  return result;
}

template class SchnModel<float>;
template class SchnModel<double>;
template SchnModel<double> SchnModel<float>::cast<double>() const;
template SchnModel<float> SchnModel<double>::cast<float>() const;
template SchnModel<float> SchnModel<float>::cast<float>() const;
template SchnModel<double> SchnModel<double>::cast<double>() const;

#define SCHN_INSTANTIATE_NET(T)                                                                \
  template Tensor<T> conv3x3<T>(const Tensor<T>&, const Conv2dParams<T>&);                     \
  template Tensor<T> entry_forward<T>(const Tensor<T>&, const SchnModel<T>&);                  \
  template Tensor<T> hallucination_branch<T>(const Tensor<T>&, const BranchParams<T>&, T);     \
  template Tensor<T> hr_head<T>(const Tensor<T>&, const HeadParams<T>&, int);                  \
  template ModuleOutput<T> sch_module_forward<T>(const Tensor<T>&, const SCHModuleParams<T>&,  \
                                                 const std::vector<bool>&, const SCHConfig&,   \
                                                 bool);                                        \
  template ForwardResult<T> schn_forward<T>(const Tensor<T>&, const SchnModel<T>&, ForwardOptions);

SCHN_INSTANTIATE_NET(float)
SCHN_INSTANTIATE_NET(double)

#undef SCHN_INSTANTIATE_NET

}  // namespace schn
