#include "easr/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "easr/errors.hpp"

namespace easr {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void MemoryTracker::on_allocate(std::size_t bytes) {
  const auto delta = static_cast<std::int64_t>(bytes);
  const std::int64_t now = live_.fetch_add(delta, std::memory_order_relaxed) + delta;
  const std::int64_t cap = limit_.load(std::memory_order_relaxed);
  if (cap > 0 && now > cap) {
    live_.fetch_sub(delta, std::memory_order_relaxed);
    throw std::bad_alloc();
  }
  std::int64_t seen = peak_.load(std::memory_order_relaxed);
  while (now > seen && !peak_.compare_exchange_weak(seen, now, std::memory_order_relaxed)) {
  }
}

void FlopCounter::add(std::uint64_t flops) { flops_ += flops; }

FlopProfile::FlopProfile() : previous_(active_) { active_ = this; }
FlopProfile::~FlopProfile() { active_ = previous_; }

FlopScope::FlopScope(std::string block)
    : block_(std::move(block)), start_(FlopCounter::matmul_flops()) {}

FlopScope::~FlopScope() {
  if (auto* profile = FlopProfile::active()) {
    profile->record(block_, FlopCounter::matmul_flops() - start_);
  }
}

namespace detail {

Buffer& Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  return grad;
}

}  // namespace detail

Tensor::Tensor(Shape shape, Buffer data, bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_to_string(shape) + " does not match " +
                         std::to_string(data.size()) + " values");
  }
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive: " + shape_to_string(shape));
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->data = std::move(data);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  Buffer data(shape_numel(shape), value);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

Tensor Tensor::from_vector(Shape shape, const std::vector<double>& values, bool requires_grad) {
  return Tensor(std::move(shape), Buffer(values.begin(), values.end()), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, Buffer{value}, requires_grad);
}

Tensor Tensor::make_result(Shape shape, Buffer data, std::initializer_list<Tensor> parents,
                           std::function<void(detail::Node&)> backward_fn) {
  return make_result(std::move(shape), std::move(data), std::vector<Tensor>(parents),
                     std::move(backward_fn));
}

Tensor Tensor::make_result(Shape shape, Buffer data, const std::vector<Tensor>& parents,
                           std::function<void(detail::Node&)> backward_fn) {
  Tensor out(std::move(shape), std::move(data));
  if (!GradMode::enabled()) return out;
  const bool any = std::any_of(parents.begin(), parents.end(),
                               [](const Tensor& p) { return p.requires_grad(); });
  if (!any) return out;
  out.node_->requires_grad = true;
  out.node_->parents.reserve(parents.size());
  for (const auto& p : parents) out.node_->parents.push_back(p.node_);
  out.node_->backward_fn = std::move(backward_fn);
  return out;
}

const Shape& Tensor::shape() const { return node_->shape; }

std::size_t Tensor::numel() const { return node_->data.size(); }

std::size_t Tensor::dim(int axis) const {
  const auto r = static_cast<int>(rank());
  const int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r) {
    throw RankError("axis " + std::to_string(axis) + " out of range for shape " +
                    shape_to_string(shape()));
  }
  return node_->shape[static_cast<std::size_t>(a)];
}

std::span<const double> Tensor::data() const { return {node_->data.data(), node_->data.size()}; }

std::span<double> Tensor::mutable_data() { return {node_->data.data(), node_->data.size()}; }

std::vector<double> Tensor::to_vector() const {
  return std::vector<double>(node_->data.begin(), node_->data.end());
}

double Tensor::item() const {
  if (numel() != 1) throw RankError("item() on tensor of shape " + shape_to_string(shape()));
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw RankError("index rank mismatch for " + shape_to_string(shape()));
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= node_->shape[axis]) throw DimensionError("index out of range");
    flat = flat * node_->shape[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }

bool Tensor::is_leaf() const { return node_->is_leaf(); }

std::span<const double> Tensor::grad() const {
  auto& g = node_->ensure_grad();
  return {g.data(), g.size()};
}

std::span<double> Tensor::mutable_grad() {
  auto& g = node_->ensure_grad();
  return {g.data(), g.size()};
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw RankError("backward() requires a scalar loss, got shape " + shape_to_string(shape()));
  }
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (auto* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->data.size(), 0.0);
  }
  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
  for (auto* n : order) {
    if (!n->is_leaf()) Buffer().swap(n->grad);
  }
}

Tensor Tensor::detach() const { return Tensor(node_->shape, node_->data); }

}  // namespace easr
