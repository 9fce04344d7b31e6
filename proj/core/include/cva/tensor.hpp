#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cva {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Thrown for shape and rank violations in tensor operations.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when the autodiff tape is misused (non-scalar loss, stale graph).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Thrown by run-time guards when an op produces NaN/Inf or a broken
/// normalization invariant.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Run-time NaN/Inf guards after every op. Defaults to on in debug builds and
/// off otherwise; tests switch it on explicitly.
bool debug_checks();
void set_debug_checks(bool enabled);

/// Allocator with a fixed 64-byte alignment. Vectorized kernels choose their
/// summation order from buffer alignment, so a fixed alignment keeps results
/// bit-identical from run to run.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlignment)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }
  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using Storage = std::vector<double, AlignedAllocator<double>>;

namespace detail {

struct TensorImpl {
  Shape shape;
  Storage data;
  Storage grad;  // empty until first accumulation
  bool requires_grad = false;
  bool is_leaf = true;
  std::uint64_t graph_generation = 0;  // generation of the tape that produced it

  void accumulate(std::span<const double> g);
  Storage& grad_buffer();
};

}  // namespace detail

/// Dense row-major float64 tensor with optional gradient tracking.
///
/// Copies share storage (handle semantics); use clone() for a deep copy.
class Tensor {
 public:
  Tensor();
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);
  static Tensor from_storage(Shape shape, Storage data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);

  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return impl_->data.size(); }

  std::span<const double> data() const { return impl_->data; }
  std::span<double> mutable_data() { return impl_->data; }
  const double* ptr() const { return impl_->data.data(); }

  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool v = true);
  bool is_leaf() const { return impl_->is_leaf; }

  bool has_grad() const { return !impl_->grad.empty(); }
  /// Gradient buffer; zeros if nothing has been accumulated yet.
  std::vector<double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  Tensor clone() const;
  /// Same values, no gradient history.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  bool equals(const Tensor& other) const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

/// Define-by-run tape. Nodes are appended in forward order and replayed in
/// reverse by backward(); each node runs exactly once.
class Graph {
 public:
  using BackwardFn = std::function<void(std::span<const double> grad_out)>;

  struct Node {
    std::string_view op;
    std::vector<std::shared_ptr<detail::TensorImpl>> inputs;
    std::shared_ptr<detail::TensorImpl> output;
    BackwardFn backward;
  };

  std::size_t size() const { return nodes_.size(); }
  std::uint64_t generation() const { return generation_; }
  const std::vector<Node>& nodes() const { return nodes_; }

  void record(Node node);
  void run_backward(const Tensor& loss);
  void clear();

  /// Tape for the calling thread.
  static Graph& current();

 private:
  std::vector<Node> nodes_;
  std::uint64_t generation_ = 1;
};

/// Disables recording on this thread while alive.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

/// Reverse-mode sweep from a scalar loss. Populates grad() on every
/// requires_grad leaf reachable from the loss and releases the tape.
void backward(const Tensor& loss);

namespace detail {

/// Builds the output tensor of an op and, when any input tracks gradients,
/// appends a node whose backward receives d(loss)/d(output).
Tensor make_result(std::string_view op, Shape shape, Storage data,
                   std::span<const Tensor* const> inputs, Graph::BackwardFn backward);
inline Tensor make_result(std::string_view op, Shape shape, Storage data,
                          std::initializer_list<const Tensor*> inputs,
                          Graph::BackwardFn backward) {
  return make_result(op, std::move(shape), std::move(data),
                     std::span<const Tensor* const>(inputs.begin(), inputs.size()),
                     std::move(backward));
}

/// True when an op on these inputs must be recorded.
bool needs_grad(std::span<const Tensor* const> inputs);
inline bool needs_grad(std::initializer_list<const Tensor*> inputs) {
  return needs_grad(std::span<const Tensor* const>(inputs.begin(), inputs.size()));
}

void check_finite(std::string_view op, std::span<const double> values);

}  // namespace detail

}  // namespace cva
