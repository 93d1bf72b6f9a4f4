#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "schn/adam.hpp"
#include "schn/checkpoint.hpp"
#include "schn/degradation.hpp"
#include "schn/errors.hpp"
#include "schn/network.hpp"

namespace schn {

// NF trains on the noise-free LR image y, AN on the noisy LR image x.
enum class Variant { kNF, kAN };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);

// Where HR training patches come from: a directory of PNGs cut into
// patch_size windows, or a procedural set when dir is empty.
struct DataSource {
  std::string dir;
  int patch_size = 256;
  int stride = 240;
  std::size_t synthetic_count = 16;
  int synthetic_size = 64;
  std::uint64_t synthetic_seed = 1;
};

struct TrainConfig {
  Variant variant = Variant::kNF;
  double lambda = 0.05;
  int batch_size = 4;
  double lr_initial = 5e-5;
  int lr_halving_period = 10;  // epochs
  int max_epochs = 60;
  std::uint64_t seed = 0;
  SCHConfig model = SCHConfig::reference(4);
  DegradationSpec degradation = DegradationSpec::for_scale(4);
  DataSource data;
  AdamHyper adam;

  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

template <typename T>
struct LossBreakdown {
  Tensor<T> total;
  std::vector<T> per_head;
};

// lambda * sum_{j<n} L1(out_j, target) + L1(out_n, target).
template <typename T>
LossBreakdown<T> multi_head_loss(const std::vector<Tensor<T>>& outputs, const Tensor<T>& target,
                                 T lambda);

// lr_initial * 0.5^floor(epoch / lr_halving_period).
double lr_schedule(std::int64_t epoch, const TrainConfig& config);

struct TrainState {
  std::int64_t epoch = 0;
  std::int64_t global_step = 0;
  AdamState<float> adam;
  // Running sums of per-head losses over the current epoch.
  std::vector<double> head_loss_sum;
  std::int64_t head_loss_count = 0;

  std::vector<double> head_loss_means() const;
};

struct BatchItemRecord {
  std::size_t patch_index = 0;
  std::uint64_t seed = 0;
  int transform_id = 0;
  Provenance provenance;
};

nlohmann::json to_json(const BatchItemRecord& r);

struct StepResult {
  std::int64_t step = 0;
  std::int64_t epoch = 0;
  double lr = 0.0;
  double total = 0.0;
  std::vector<double> per_head;
  std::vector<BatchItemRecord> batch;
};

// Raised when a step produces NaN/Inf; carries the offending batch manifest.
class NonFiniteLoss : public NumericalError {
 public:
  NonFiniteLoss(const std::string& what, nlohmann::json batch)
      : NumericalError(what), batch_(std::move(batch)) {}
  const nlohmann::json& batch() const { return batch_; }

 private:
  nlohmann::json batch_;
};

// Per-sample stream for (seed, epoch, patch index).
std::uint64_t sample_seed(std::uint64_t seed, std::int64_t epoch, std::size_t patch_index);

// Patch order for one epoch (seeded permutation).
std::vector<std::size_t> epoch_order(std::uint64_t seed, std::int64_t epoch, std::size_t count);

// One optimisation step on the given HR patches (indices into the manifest):
// augment + degrade each, forward, multi-head loss, backward, Adam.
StepResult train_step(SchnModel<float>& model, const std::vector<ImageBuffer>& patches,
                      const std::vector<std::size_t>& batch, const TrainConfig& config,
                      TrainState& state);

// HR training patches described by config.data.
std::vector<ImageBuffer> load_training_patches(const DataSource& data, std::size_t* skipped = nullptr);

class Trainer {
 public:
  Trainer(TrainConfig config, std::vector<ImageBuffer> patches);
  Trainer(TrainConfig config, std::vector<ImageBuffer> patches, SchnModel<float> model,
          TrainState state);

  StepResult step();
  bool finished() const;

  std::int64_t steps_per_epoch() const;
  const TrainConfig& config() const { return config_; }
  const SchnModel<float>& model() const { return model_; }
  const TrainState& state() const { return state_; }

  // Model weights plus optimiser state and config.
  CheckpointContents checkpoint() const;
  static Trainer restore(const CheckpointContents& contents, std::vector<ImageBuffer> patches);
  // Config embedded in a training checkpoint.
  static TrainConfig config_from(const CheckpointContents& contents);

 private:
  TrainConfig config_;
  std::vector<ImageBuffer> patches_;
  SchnModel<float> model_;
  TrainState state_;
};

// Append-only newline-delimited JSON sink, safe for concurrent writers.
class JsonlLog {
 public:
  explicit JsonlLog(const std::filesystem::path& path, bool append = true);
  void write(const nlohmann::json& record);

 private:
  std::mutex mutex_;
  std::ofstream out_;
};

}  // namespace schn
