#include "schn/adam.hpp"

#include <cmath>
#include <string>

#include "schn/errors.hpp"

namespace schn {

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state) {
  if (!state.initialized()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.numel(), T(0));
      state.second_moment.emplace_back(p.numel(), T(0));
    }
  }
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ConfigError("adam state holds " + std::to_string(state.first_moment.size()) +
                      " buffers for " + std::to_string(params.size()) + " parameters");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (state.first_moment[k].size() != params[k].numel() ||
        state.second_moment[k].size() != params[k].numel()) {
      throw ConfigError("adam moment buffer " + std::to_string(k) +
                        " is not congruent with its parameter");
    }
  }

  state.step_count += 1;
  const auto& hp = state.hyper;
  const double t = static_cast<double>(state.step_count);
  const T b1 = static_cast<T>(hp.beta1);
  const T b2 = static_cast<T>(hp.beta2);
  const T correction1 = static_cast<T>(1.0 - std::pow(hp.beta1, t));
  const T correction2 = static_cast<T>(1.0 - std::pow(hp.beta2, t));
  const T lr = static_cast<T>(hp.lr);
  const T eps = static_cast<T>(hp.eps);

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (!p.requires_grad()) continue;
    auto data = p.mutable_data();
    const auto grad = p.grad();
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < data.size(); ++i) {
      const T g = grad[i];
      m[i] = b1 * m[i] + (T(1) - b1) * g;
      v[i] = b2 * v[i] + (T(1) - b2) * g * g;
      const T m_hat = m[i] / correction1;
      const T v_hat = v[i] / correction2;
      data[i] -= lr * m_hat / (std::sqrt(v_hat) + eps);
    }
  }
}

template void adam_step<float>(std::span<Tensor<float>>, AdamState<float>&);
template void adam_step<double>(std::span<Tensor<double>>, AdamState<double>&);

}  // namespace schn
