#include "schn/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

#include "schn/errors.hpp"

namespace schn {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ConfigError("negative dimension in shape " + to_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool NoGradGuard::grad_enabled() { return g_grad_enabled; }

namespace detail {

template <typename T>
void check_finite(std::span<const T> values, const char* op) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      std::ostringstream os;
      os << "non-finite value produced by " << op << " at flat index " << i;
      throw NumericalError(os.str());
    }
  }
}

template void check_finite<float>(std::span<const float>, const char*);
template void check_finite<double>(std::span<const double>, const char*);

}  // namespace detail

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), T(0), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value, bool requires_grad) {
  const auto n = schn::numel(shape);
  return from_vector(std::move(shape), std::vector<T>(n, value), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from_vector(Shape shape, std::vector<T> values, bool requires_grad) {
  if (schn::numel(shape) != values.size()) {
    throw ConfigError("data length " + std::to_string(values.size()) +
                      " does not match shape " + to_string(shape));
  }
  auto node = std::make_shared<NodeType>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->requires_grad = requires_grad;
  if (requires_grad) node->grad.assign(node->data.size(), T(0));
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from_vector({}, {value}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, std::vector<T> values, const char* op,
                                 std::vector<Tensor> parents, BackwardFn backward) {
  detail::check_finite<T>(values, op);
  auto node = std::make_shared<NodeType>();
  node->shape = std::move(shape);
  node->data = std::move(values);
  node->op = op;
  node->is_leaf = false;
  bool any = false;
  if (NoGradGuard::grad_enabled()) {
    for (const auto& p : parents) any = any || (p.defined() && p.requires_grad());
  }
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward_fn = std::move(backward);
  }
  return Tensor(std::move(node));
}

template <typename T>
typename Tensor<T>::NodeType& Tensor<T>::checked() const {
  if (!node_) throw UsageError("operation on an undefined tensor");
  return *node_;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
  return checked().shape;
}

template <typename T>
std::int64_t Tensor<T>::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw UsageError("axis out of range for shape " + to_string(s));
  return s[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
  return checked().data.size();
}

template <typename T>
std::span<const T> Tensor<T>::data() const {
  return checked().data;
}

template <typename T>
T Tensor<T>::item() const {
  const auto& n = checked();
  if (n.data.size() != 1) throw UsageError("item() on tensor of shape " + to_string(n.shape));
  return n.data[0];
}

template <typename T>
T Tensor<T>::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
  const auto& s = shape();
  if (s.size() != 4) throw UsageError("at() requires a rank-4 tensor");
  return checked().data[static_cast<std::size_t>(((n * s[1] + c) * s[2] + h) * s[3] + w)];
}

template <typename T>
bool Tensor<T>::requires_grad() const {
  return checked().requires_grad;
}

template <typename T>
bool Tensor<T>::is_leaf() const {
  return checked().is_leaf;
}

template <typename T>
const char* Tensor<T>::op_name() const {
  return checked().op;
}

template <typename T>
bool Tensor<T>::has_grad() const {
  const auto& n = checked();
  return n.grad.size() == n.data.size();
}

template <typename T>
std::span<const T> Tensor<T>::grad() const {
  auto& n = checked();
  if (n.grad.size() != n.data.size()) n.grad.assign(n.data.size(), T(0));
  return n.grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  auto& n = checked();
  n.grad.assign(n.data.size(), T(0));
}

template <typename T>
std::span<T> Tensor<T>::mutable_data() {
  auto& n = checked();
  if (!n.is_leaf) throw UsageError(std::string("cannot mutate result of ") + n.op);
  return n.data;
}

template <typename T>
std::span<T> Tensor<T>::mutable_grad() {
  return checked().grad_buffer();
}

template <typename T>
void Tensor<T>::set_requires_grad(bool value) {
  auto& n = checked();
  if (!n.is_leaf) throw UsageError("requires_grad can only be set on leaves");
  n.requires_grad = value;
  if (value && n.grad.size() != n.data.size()) n.grad.assign(n.data.size(), T(0));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  const auto& n = checked();
  auto node = std::make_shared<NodeType>();
  node->shape = n.shape;
  node->data = n.data;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  auto t = detach();
  if (requires_grad()) t.set_requires_grad(true);
  return t;
}

template <typename T>
void Tensor<T>::backward() const {
  auto& root = checked();
  if (root.data.size() != 1) {
    throw UsageError("backward() requires a scalar loss, got shape " + to_string(root.shape));
  }
  if (!root.requires_grad) throw UsageError("backward() on a tensor that does not require grad");

  // Iterative post-order DFS gives a topological order (parents before children).
  std::vector<NodeType*> order;
  std::unordered_set<NodeType*> seen;
  std::vector<std::pair<NodeType*, std::size_t>> stack{{&root, 0}};
  seen.insert(&root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodeType* parent = node->parents[next++].get();
      if (parent && parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* node : order) {
    if (!node->is_leaf) node->grad.assign(node->data.size(), T(0));
  }
  if (root.is_leaf) {
    root.grad_buffer()[0] += T(1);
    return;
  }
  root.grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeType* node = *it;
    if (node->is_leaf) continue;
    node->backward_fn(*node);
    std::vector<T>().swap(node->grad);
  }
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace schn
