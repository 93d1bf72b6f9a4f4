#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "schn/tensor.hpp"

namespace schn {

struct SCHConfig {
  int channels = 64;
  int n_modules = 8;
  int n_maps = 2;
  int scale_factor = 4;
  double leaky_slope = 0.2;

  static SCHConfig reference(int scale_factor = 4) { return {64, 8, 2, scale_factor, 0.2}; }
  void validate() const;
  friend bool operator==(const SCHConfig&, const SCHConfig&) = default;
};

void to_json(nlohmann::json& j, const SCHConfig& c);
void from_json(const nlohmann::json& j, SCHConfig& c);

enum class ParamMode {
  kFull,
  // Drops the HR heads of every module but the last; they never reach the
  // final prediction at inference.
  kTestBypassed,
};

// Closed-form scalar parameter count for the architecture.
std::int64_t param_count(const SCHConfig& config, ParamMode mode = ParamMode::kFull);

template <typename T>
struct Conv2dParams {
  Tensor<T> weight;  // [out, in, 3, 3]
  Tensor<T> bias;    // [out]
};

template <typename T>
struct BranchParams {
  Conv2dParams<T> conv1;  // C -> C
  Conv2dParams<T> conv2;  // C -> 2, produces (x_offset, y_offset)
};

template <typename T>
struct HeadParams {
  Conv2dParams<T> expand;  // C -> C * s^2, followed by pixel shuffle
  Conv2dParams<T> rgb;     // C -> 3
};

template <typename T>
struct SCHModuleParams {
  std::vector<BranchParams<T>> branches;
  Conv2dParams<T> fusion;  // C * (n_maps + 1) -> C
  HeadParams<T> head;
};

// mask[module][map]; false replaces that warped feature map with zeros.
using AblationMask = std::vector<std::vector<bool>>;

AblationMask full_mask(const SCHConfig& config);

// Grammar: "none" | item (';' item)*, item := ("all" | <module>) ':' <map> (',' <map>)*.
// Modules and maps are 1-based. "all:1" zeroes the first hallucination output
// in every module.
AblationMask parse_mask(const std::string& spec, const SCHConfig& config);

template <typename T>
class SchnModel {
 public:
  explicit SchnModel(SCHConfig config);

  // Fan-in scaled uniform init; biases and each branch's offset conv start at zero.
  static SchnModel initialized(SCHConfig config, std::uint64_t seed);

  const SCHConfig& config() const { return config_; }

  Conv2dParams<T> entry;
  Conv2dParams<T> res_conv1;
  Conv2dParams<T> res_conv2;
  std::vector<SCHModuleParams<T>> modules;
  HeadParams<T> standalone_head;  // only used when n_modules == 0
  AblationMask mask;

  // Stable, name-ordered-by-construction list used by optimizers and checkpoints.
  std::vector<std::pair<std::string, Tensor<T>>> named_parameters() const;
  std::vector<Tensor<T>> parameters() const;
  std::int64_t parameter_count() const;

  template <typename U>
  SchnModel<U> cast() const;

 private:
  SCHConfig config_;
};

template <typename T>
struct ModuleOutput {
  Tensor<T> features;         // [N, C, h, w], threaded to the next module
  Tensor<T> hr;               // [N, 3, s*h, s*w]; undefined when the head is skipped
  std::vector<Tensor<T>> maps;
};

struct ForwardOptions {
  // When false only the last module's head is evaluated.
  bool all_heads = true;
};

template <typename T>
struct ForwardResult {
  std::vector<Tensor<T>> hr_outputs;
  std::vector<std::vector<Tensor<T>>> maps;  // [module][map], each [N, 2, h, w]

  const Tensor<T>& final_output() const { return hr_outputs.back(); }
};

template <typename T>
Tensor<T> conv3x3(const Tensor<T>& x, const Conv2dParams<T>& p);

// conv -> leaky_relu -> resblock(conv -> leaky_relu -> conv, + skip).
template <typename T>
Tensor<T> entry_forward(const Tensor<T>& lr, const SchnModel<T>& model);

// conv1 -> leaky_relu -> conv2; raw offsets, no terminal activation.
template <typename T>
Tensor<T> hallucination_branch(const Tensor<T>& feat, const BranchParams<T>& params, T slope);

// expand conv -> pixel shuffle(s) -> rgb conv.
template <typename T>
Tensor<T> hr_head(const Tensor<T>& feat, const HeadParams<T>& params, int scale_factor);

template <typename T>
ModuleOutput<T> sch_module_forward(const Tensor<T>& feat, const SCHModuleParams<T>& params,
                                   const std::vector<bool>& mask, const SCHConfig& config,
                                   bool compute_head = true);

template <typename T>
ForwardResult<T> schn_forward(const Tensor<T>& lr, const SchnModel<T>& model,
                              ForwardOptions options = {});

extern template class SchnModel<float>;
extern template class SchnModel<double>;

}  // namespace schn
