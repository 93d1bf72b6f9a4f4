#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "schn/tensor.hpp"

namespace schn {

struct AdamHyper {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Moment buffers are stored per parameter, in the order parameters are passed
// to adam_step.
template <typename T>
struct AdamState {
  std::vector<std::vector<T>> first_moment;
  std::vector<std::vector<T>> second_moment;
  std::int64_t step_count = 0;
  AdamHyper hyper;

  bool initialized() const { return !first_moment.empty(); }
};

// Bias-corrected Adam update using each parameter's accumulated grad. The
// state is lazily sized on first use; afterwards every buffer must match the
// corresponding parameter or a ConfigError is thrown.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state);

template <typename T>
void zero_grads(std::span<Tensor<T>> params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace schn
