#include "schn/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "schn/ops.hpp"
#include "schn/synthetic.hpp"

namespace schn {

std::string to_string(Variant v) { return v == Variant::kNF ? "NF" : "AN"; }

Variant variant_from_string(const std::string& s) {
  if (s == "NF" || s == "nf") return Variant::kNF;
  if (s == "AN" || s == "an") return Variant::kAN;
  throw ConfigError("variant must be NF or AN, got '" + s + "'");
}

void TrainConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be > 0");
  if (!(lr_initial > 0.0)) throw ConfigError("lr_initial must be > 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (lr_halving_period < 1) throw ConfigError("lr_halving_period must be >= 1");
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  model.validate();
  degradation.validate();
  if (model.scale_factor != degradation.scale_factor) {
    throw ConfigError("model and degradation scale factors differ");
  }
  if (data.dir.empty()) {
    if (data.synthetic_count == 0) throw ConfigError("synthetic_count must be > 0");
    if (data.synthetic_size < 16 || data.synthetic_size % model.scale_factor != 0) {
      throw ConfigError("synthetic_size must be >= 16 and divisible by the scale factor");
    }
  } else if (data.patch_size < 16 || data.patch_size % model.scale_factor != 0 || data.stride < 1) {
    throw ConfigError("patch_size must be >= 16 and divisible by the scale factor");
  }
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.eps > 0.0)) {
    throw ConfigError("invalid Adam hyperparameters");
  }
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{
      {"variant", to_string(c.variant)},
      {"lambda", c.lambda},
      {"batch_size", c.batch_size},
      {"lr_initial", c.lr_initial},
      {"lr_halving_period", c.lr_halving_period},
      {"max_epochs", c.max_epochs},
      {"seed", c.seed},
      {"model", c.model},
      {"degradation", c.degradation},
      {"data",
       {{"dir", c.data.dir},
        {"patch_size", c.data.patch_size},
        {"stride", c.data.stride},
        {"synthetic_count", c.data.synthetic_count},
        {"synthetic_size", c.data.synthetic_size},
        {"synthetic_seed", c.data.synthetic_seed}}},
      {"adam", {{"beta1", c.adam.beta1}, {"beta2", c.adam.beta2}, {"eps", c.adam.eps}}}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  try {
    TrainConfig d;
    c.variant = variant_from_string(j.value("variant", std::string("NF")));
    c.lambda = j.value("lambda", d.lambda);
    c.batch_size = j.value("batch_size", d.batch_size);
    c.lr_initial = j.value("lr_initial", d.lr_initial);
    c.lr_halving_period = j.value("lr_halving_period", d.lr_halving_period);
    c.max_epochs = j.value("max_epochs", d.max_epochs);
    c.seed = j.value("seed", d.seed);
    c.model = j.contains("model") ? j.at("model").get<SCHConfig>() : d.model;
    if (j.contains("degradation")) {
      c.degradation = j.at("degradation").get<DegradationSpec>();
    } else {
      c.degradation = DegradationSpec::for_scale(c.model.scale_factor);
      c.degradation.seed = c.seed;
    }
    c.data = d.data;
    if (j.contains("data")) {
      const auto& dj = j.at("data");
      c.data.dir = dj.value("dir", d.data.dir);
      c.data.patch_size = dj.value("patch_size", d.data.patch_size);
      c.data.stride = dj.value("stride", d.data.stride);
      c.data.synthetic_count = dj.value("synthetic_count", d.data.synthetic_count);
      c.data.synthetic_size = dj.value("synthetic_size", d.data.synthetic_size);
      c.data.synthetic_seed = dj.value("synthetic_seed", d.data.synthetic_seed);
    }
    c.adam = d.adam;
    if (j.contains("adam")) {
      const auto& aj = j.at("adam");
      c.adam.beta1 = aj.value("beta1", d.adam.beta1);
      c.adam.beta2 = aj.value("beta2", d.adam.beta2);
      c.adam.eps = aj.value("eps", d.adam.eps);
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid train config: ") + e.what());
  }
  c.validate();
}

template <typename T>
LossBreakdown<T> multi_head_loss(const std::vector<Tensor<T>>& outputs, const Tensor<T>& target,
                                 T lambda) {
  if (outputs.empty()) throw ConfigError("multi_head_loss needs at least one output");
  LossBreakdown<T> out;
  Tensor<T> intermediate;
  for (std::size_t j = 0; j < outputs.size(); ++j) {
    auto l = l1_loss(outputs[j], target);
    out.per_head.push_back(l.item());
    if (j + 1 == outputs.size()) {
      out.total = intermediate.defined() ? add(scale(intermediate, lambda), l) : l;
    } else {
      intermediate = intermediate.defined() ? add(intermediate, l) : l;
    }
  }
  return out;
}

template LossBreakdown<float> multi_head_loss<float>(const std::vector<Tensor<float>>&,
                                                     const Tensor<float>&, float);
template LossBreakdown<double> multi_head_loss<double>(const std::vector<Tensor<double>>&,
                                                       const Tensor<double>&, double);

double lr_schedule(std::int64_t epoch, const TrainConfig& config) {
  if (epoch < 0) throw ConfigError("epoch must be >= 0");
  return config.lr_initial * std::pow(0.5, static_cast<double>(epoch / config.lr_halving_period));
}

std::vector<double> TrainState::head_loss_means() const {
  std::vector<double> out(head_loss_sum.size(), 0.0);
  if (head_loss_count == 0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = head_loss_sum[i] / head_loss_count;
  return out;
}

nlohmann::json to_json(const BatchItemRecord& r) {
  return {{"patch", r.patch_index}, {"seed", r.seed}, {"augmentation", r.transform_id},
          {"degradation", to_json(r.provenance)}};
}

std::uint64_t sample_seed(std::uint64_t seed, std::int64_t epoch, std::size_t patch_index) {
  return derive_seed(seed, {0xDA7Au, static_cast<std::uint64_t>(epoch), patch_index});
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, std::int64_t epoch, std::size_t count) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {0x0DE5u, static_cast<std::uint64_t>(epoch)}));
  // Fisher-Yates with an explicit draw so the order does not depend on the
  // standard library's shuffle.
  for (std::size_t i = count; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return order;
}

StepResult train_step(SchnModel<float>& model, const std::vector<ImageBuffer>& patches,
                      const std::vector<std::size_t>& batch, const TrainConfig& config,
                      TrainState& state) {
  if (batch.empty()) throw ConfigError("empty training batch");
  StepResult result;
  result.epoch = state.epoch;
  result.lr = lr_schedule(state.epoch, config);

  std::vector<ImageBuffer> inputs, targets;
  for (std::size_t idx : batch) {
    if (idx >= patches.size()) throw ConfigError("batch index outside the patch manifest");
    BatchItemRecord rec;
    rec.patch_index = idx;
    rec.seed = sample_seed(config.seed, state.epoch, idx);
    Rng rng(rec.seed);
    auto aug = augment(patches[idx], rng);
    auto deg = degrade(aug.image, config.degradation, rng);
    rec.transform_id = aug.transform_id;
    rec.provenance = deg.provenance;
    inputs.push_back(config.variant == Variant::kNF ? std::move(deg.y) : std::move(deg.x));
    targets.push_back(std::move(aug.image));
    result.batch.push_back(std::move(rec));
  }

  auto batch_json = [&] {
    auto arr = nlohmann::json::array();
    for (const auto& r : result.batch) arr.push_back(to_json(r));
    return nlohmann::json{{"step", state.global_step}, {"epoch", state.epoch}, {"items", arr}};
  };

  auto params = model.parameters();
  try {
    const auto lr = images_to_tensor<float>(inputs);
    const auto target = images_to_tensor<float>(targets);
    auto fwd = schn_forward(lr, model);
    auto loss = multi_head_loss(fwd.hr_outputs, target, static_cast<float>(config.lambda));
    zero_grads<float>(params);
    loss.total.backward();
    for (const auto& p : params) detail::check_finite<float>(p.grad(), "backward");
    state.adam.hyper = config.adam;
    state.adam.hyper.lr = result.lr;
    adam_step<float>(params, state.adam);
    for (const auto& p : params) detail::check_finite<float>(p.data(), "adam_step");
    result.total = loss.total.item();
    result.per_head.assign(loss.per_head.begin(), loss.per_head.end());
  } catch (const NumericalError& e) {
    throw NonFiniteLoss(std::string("non-finite value during training step: ") + e.what(), batch_json());
  }

  state.global_step += 1;
  result.step = state.global_step;
  if (state.head_loss_sum.size() != result.per_head.size()) {
    state.head_loss_sum.assign(result.per_head.size(), 0.0);
    state.head_loss_count = 0;
  }
  for (std::size_t i = 0; i < result.per_head.size(); ++i) state.head_loss_sum[i] += result.per_head[i];
  state.head_loss_count += 1;
  return result;
}

std::vector<ImageBuffer> load_training_patches(const DataSource& data, std::size_t* skipped) {
  if (data.dir.empty()) {
    if (skipped) *skipped = 0;
    return make_synthetic_set(data.synthetic_count, data.synthetic_size, data.synthetic_size,
                              data.synthetic_seed);
  }
  std::vector<ImageBuffer> images;
  for (const auto& path : list_pngs(data.dir)) images.push_back(read_png(path));
  auto patches = sample_patches(images, data.patch_size, data.stride, skipped);
  if (patches.empty()) throw ConfigError("no training patches found in " + data.dir);
  return patches;
}

Trainer::Trainer(TrainConfig config, std::vector<ImageBuffer> patches)
    : Trainer(config, std::move(patches), SchnModel<float>::initialized(config.model, config.seed),
              TrainState{}) {}

Trainer::Trainer(TrainConfig config, std::vector<ImageBuffer> patches, SchnModel<float> model,
                 TrainState state)
    : config_(std::move(config)),
      patches_(std::move(patches)),
      model_(std::move(model)),
      state_(std::move(state)) {
  config_.validate();
  if (patches_.empty()) throw ConfigError("trainer needs at least one patch");
  if (!(model_.config() == config_.model)) throw ConfigError("model does not match train config");
}

std::int64_t Trainer::steps_per_epoch() const {
  const auto n = static_cast<std::int64_t>(patches_.size());
  return (n + config_.batch_size - 1) / config_.batch_size;
}

bool Trainer::finished() const { return state_.epoch >= config_.max_epochs; }

StepResult Trainer::step() {
  const std::int64_t spe = steps_per_epoch();
  const std::int64_t within = state_.global_step % spe;
  state_.epoch = state_.global_step / spe;
  if (within == 0) {
    state_.head_loss_sum.clear();
    state_.head_loss_count = 0;
  }
  const auto order = epoch_order(config_.seed, state_.epoch, patches_.size());
  const auto begin = static_cast<std::size_t>(within * config_.batch_size);
  const auto end = std::min(order.size(), begin + static_cast<std::size_t>(config_.batch_size));
  std::vector<std::size_t> batch(order.begin() + begin, order.begin() + end);
  auto result = train_step(model_, patches_, batch, config_, state_);
  state_.epoch = state_.global_step / spe;
  return result;
}

CheckpointContents Trainer::checkpoint() const {
  auto contents = model_contents(model_);
  const auto named = model_.named_parameters();
  if (state_.adam.initialized()) {
    for (std::size_t k = 0; k < named.size(); ++k) {
      contents.tensors.push_back({"adam.m." + named[k].first, named[k].second.shape(), state_.adam.first_moment[k]});
    }
    for (std::size_t k = 0; k < named.size(); ++k) {
      contents.tensors.push_back({"adam.v." + named[k].first, named[k].second.shape(), state_.adam.second_moment[k]});
    }
  }
  contents.extra = {
      {"train_config", config_},
      {"state",
       {{"epoch", state_.epoch},
        {"global_step", state_.global_step},
        {"adam_step_count", state_.adam.step_count},
        {"head_loss_sum", state_.head_loss_sum},
        {"head_loss_count", state_.head_loss_count},
        {"rng", {{"scheme", "derived"}, {"seed", config_.seed}}}}}};
  return contents;
}

TrainConfig Trainer::config_from(const CheckpointContents& contents) {
  if (!contents.extra.is_object() || !contents.extra.contains("train_config")) {
    throw FormatError("checkpoint carries no training state");
  }
  return contents.extra.at("train_config").get<TrainConfig>();
}

Trainer Trainer::restore(const CheckpointContents& contents, std::vector<ImageBuffer> patches) {
  TrainConfig config = config_from(contents);
  auto model = model_from_contents(contents);
  TrainState state;
  try {
    const auto& s = contents.extra.at("state");
    state.epoch = s.at("epoch").get<std::int64_t>();
    state.global_step = s.at("global_step").get<std::int64_t>();
    state.adam.step_count = s.at("adam_step_count").get<std::int64_t>();
    state.head_loss_sum = s.at("head_loss_sum").get<std::vector<double>>();
    state.head_loss_count = s.at("head_loss_count").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid training state in checkpoint: ") + e.what());
  }
  state.adam.hyper = config.adam;
  if (state.adam.step_count > 0) {
    for (const auto& [name, p] : model.named_parameters()) {
      const auto* m = contents.find("adam.m." + name);
      const auto* v = contents.find("adam.v." + name);
      if (!m || !v || m->shape != p.shape() || v->shape != p.shape()) {
        throw FormatError("checkpoint is missing optimiser moments for " + name);
      }
      state.adam.first_moment.push_back(m->values);
      state.adam.second_moment.push_back(v->values);
    }
  }
  return Trainer(std::move(config), std::move(patches), std::move(model), std::move(state));
}

JsonlLog::JsonlLog(const std::filesystem::path& path, bool append)
    : out_(path, append ? std::ios::app : std::ios::trunc) {
  if (!out_) throw ConfigError("cannot open log " + path.string());
}

void JsonlLog::write(const nlohmann::json& record) {
  const std::string line = record.dump() + "\n";
  std::lock_guard lock(mutex_);
  out_ << line;
  out_.flush();
}

}  // namespace schn
