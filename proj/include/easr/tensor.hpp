#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace easr {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Pre-softmax value used for masked attention scores. exp(kMaskedScore - m)
// underflows to exactly 0 for any finite row maximum m.
inline constexpr double kMaskedScore = -1e30;

inline bool is_masked_score(double v) { return v <= kMaskedScore; }

// Process-wide accounting of bytes held by tensor buffers (data and grads).
class MemoryTracker {
 public:
  static std::int64_t live_bytes() { return live_.load(std::memory_order_relaxed); }
  static std::int64_t peak_bytes() { return peak_.load(std::memory_order_relaxed); }
  // Resets the peak to the current live byte count.
  static void reset_peak() { peak_.store(live_bytes(), std::memory_order_relaxed); }
  // Allocations that would push live bytes above the limit throw
  // std::bad_alloc. Zero disables the limit.
  static void set_limit(std::int64_t bytes) { limit_.store(bytes, std::memory_order_relaxed); }
  static std::int64_t limit() { return limit_.load(std::memory_order_relaxed); }

  static void on_allocate(std::size_t bytes);
  static void on_deallocate(std::size_t bytes) {
    live_.fetch_sub(static_cast<std::int64_t>(bytes), std::memory_order_relaxed);
  }

 private:
  static inline std::atomic<std::int64_t> live_{0};
  static inline std::atomic<std::int64_t> peak_{0};
  static inline std::atomic<std::int64_t> limit_{0};
};

template <class T>
struct TrackingAllocator {
  using value_type = T;

  TrackingAllocator() noexcept = default;
  template <class U>
  TrackingAllocator(const TrackingAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    MemoryTracker::on_allocate(n * sizeof(T));
    try {
      return std::allocator<T>{}.allocate(n);
    } catch (...) {
      MemoryTracker::on_deallocate(n * sizeof(T));
      throw;
    }
  }
  void deallocate(T* p, std::size_t n) noexcept {
    MemoryTracker::on_deallocate(n * sizeof(T));
    std::allocator<T>{}.deallocate(p, n);
  }

  template <class U>
  bool operator==(const TrackingAllocator<U>&) const noexcept { return true; }
};

using Buffer = std::vector<double, TrackingAllocator<double>>;

// Counts forward matrix-product FLOPs (2*m*n*k per product) on the calling
// thread. Nothing else contributes.
class FlopCounter {
 public:
  static std::uint64_t matmul_flops() { return flops_; }
  static void add(std::uint64_t flops);
  static void reset() { flops_ = 0; }

 private:
  static inline thread_local std::uint64_t flops_ = 0;
};

// Accumulates per-block FLOPs while installed. Blocks are attributed through
// FlopScope; nested scopes each see their own delta.
class FlopProfile {
 public:
  FlopProfile();
  ~FlopProfile();
  FlopProfile(const FlopProfile&) = delete;
  FlopProfile& operator=(const FlopProfile&) = delete;

  const std::map<std::string, std::uint64_t>& blocks() const { return blocks_; }
  static FlopProfile* active() { return active_; }
  void record(const std::string& block, std::uint64_t flops) { blocks_[block] += flops; }

 private:
  std::map<std::string, std::uint64_t> blocks_;
  FlopProfile* previous_;
  static inline thread_local FlopProfile* active_ = nullptr;
};

class FlopScope {
 public:
  explicit FlopScope(std::string block);
  ~FlopScope();
  FlopScope(const FlopScope&) = delete;
  FlopScope& operator=(const FlopScope&) = delete;

 private:
  std::string block_;
  std::uint64_t start_ = 0;
};

// Graph recording is on by default; NoGradGuard disables it for its scope.
class GradMode {
 public:
  static bool enabled() { return enabled_; }
  static void set_enabled(bool on) { enabled_ = on; }

 private:
  static inline thread_local bool enabled_ = true;
};

class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace detail {

struct Node {
  Shape shape;
  Buffer data;
  Buffer grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents' grads.
  std::function<void(Node&)> backward_fn;

  bool is_leaf() const { return parents.empty(); }
  // Allocates a zero gradient on first use.
  Buffer& ensure_grad();
};

}  // namespace detail

// Dense row-major tensor with value semantics for its data and a shared
// autograd node. Copies of a Tensor alias the same node.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, Buffer data, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_vector(Shape shape, const std::vector<double>& values,
                            bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  // Builds an op output. When grad mode is on and any parent requires grad,
  // the result records the parents and the backward closure.
  static Tensor make_result(Shape shape, Buffer data, std::initializer_list<Tensor> parents,
                            std::function<void(detail::Node&)> backward_fn);
  static Tensor make_result(Shape shape, Buffer data, const std::vector<Tensor>& parents,
                            std::function<void(detail::Node&)> backward_fn);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  // Extent along axis; negative axes count from the back.
  std::size_t dim(int axis) const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  std::vector<double> to_vector() const;
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool is_leaf() const;
  // Gradient buffer; zero-filled if nothing has been accumulated yet.
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // Reverse-mode sweep from a scalar. Leaf gradients accumulate across calls.
  void backward() const;

  // Same data, no graph history.
  Tensor detach() const;

  detail::Node& node() const { return *node_; }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  std::shared_ptr<detail::Node> node_;
};

}  // namespace easr
