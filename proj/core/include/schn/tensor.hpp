#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace schn {

using Shape = std::vector<std::int64_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

enum class Precision { kSingle, kDouble };

template <typename T>
constexpr Precision precision_of();
template <>
constexpr Precision precision_of<float>() { return Precision::kSingle; }
template <>
constexpr Precision precision_of<double>() { return Precision::kDouble; }

// Disables graph recording on the current thread while in scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

  static bool grad_enabled();

 private:
  bool previous_;
};

namespace detail {

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;
  bool requires_grad = false;
  bool is_leaf = true;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents' grads.
  std::function<void(Node&)> backward_fn;

  // Parent grad buffer, zero-allocated on first use.
  std::span<T> grad_buffer() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    return grad;
  }
};

template <typename T>
void check_finite(std::span<const T> values, const char* op);

}  // namespace detail

// Dense NCHW array with reverse-mode autodiff. Cheap to copy: copies share
// storage. Values produced by operators are immutable; only leaves (parameters
// and inputs) may be mutated, and only outside a forward/backward pass.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodeType = detail::Node<T>;
  using BackwardFn = std::function<void(NodeType&)>;

  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, T value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  // Builds an operator result. When grad mode is on and any parent requires
  // grad, the result records its parents and backward closure.
  static Tensor make_result(Shape shape, std::vector<T> values, const char* op,
                            std::vector<Tensor> parents, BackwardFn backward);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::int64_t dim(std::size_t axis) const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::span<const T> data() const;
  T item() const;
  T at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;

  bool requires_grad() const;
  bool is_leaf() const;
  const char* op_name() const;

  bool has_grad() const;
  std::span<const T> grad() const;
  void zero_grad();

  // Leaf-only mutable access for optimizers, initializers and tests.
  std::span<T> mutable_data();
  std::span<T> mutable_grad();
  void set_requires_grad(bool value);

  Tensor detach() const;
  Tensor clone() const;

  // Reverse-mode accumulation from a scalar. Leaf gradients accumulate across
  // calls; intermediate gradients are recomputed per call.
  void backward() const;

  const std::shared_ptr<NodeType>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}
  NodeType& checked() const;

  std::shared_ptr<NodeType> node_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t, bool requires_grad = false) {
  std::vector<To> values(t.data().begin(), t.data().end());
  return Tensor<To>::from_vector(t.shape(), std::move(values), requires_grad);
}

}  // namespace schn
