#include "cva/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cva {

namespace {

#ifdef NDEBUG
bool g_debug_checks = false;
#else
bool g_debug_checks = true;
#endif

thread_local bool t_grad_enabled = true;

}  // namespace

bool debug_checks() { return g_debug_checks; }
void set_debug_checks(bool enabled) { g_debug_checks = enabled; }

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

Storage& TensorImpl::grad_buffer() {
  if (grad.empty()) grad.assign(data.size(), 0.0);
  return grad;
}

void TensorImpl::accumulate(std::span<const double> g) {
  auto& buf = grad_buffer();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += g[i];
}

bool needs_grad(std::span<const Tensor* const> inputs) {
  if (!t_grad_enabled) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

void check_finite(std::string_view op, std::span<const double> values) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError("non-finite value produced by op '" + std::string(op) + "'");
    }
  }
}

Tensor make_result(std::string_view op, Shape shape, Storage data,
                   std::span<const Tensor* const> inputs, Graph::BackwardFn backward) {
  if (g_debug_checks) check_finite(op, data);
  Tensor out = Tensor::from_storage(std::move(shape), std::move(data));
  if (needs_grad(inputs)) {
    auto& impl = *out.impl();
    impl.requires_grad = true;
    impl.is_leaf = false;
    Graph& g = Graph::current();
    impl.graph_generation = g.generation();
    Graph::Node node;
    node.op = op;
    node.inputs.reserve(inputs.size());
    for (const Tensor* t : inputs) node.inputs.push_back(t->impl());
    node.output = out.impl();
    node.backward = std::move(backward);
    g.record(std::move(node));
  }
  return out;
}

}  // namespace detail

Tensor::Tensor() : impl_(std::make_shared<detail::TensorImpl>()) {
  impl_->data.assign(1, 0.0);
}

Tensor::Tensor(Shape shape, double fill) : impl_(std::make_shared<detail::TensorImpl>()) {
  impl_->data.assign(numel(shape), fill);
  impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " elements");
  }
  impl_->shape = std::move(shape);
  impl_->data.assign(data.begin(), data.end());
}

Tensor Tensor::from_storage(Shape shape, Storage data) {
  if (numel(shape) != data.size()) {
    throw DimensionError("tensor shape " + shape_str(shape) + " does not match " +
                         std::to_string(data.size()) + " elements");
  }
  Tensor t;
  t.impl_->shape = std::move(shape);
  t.impl_->data = std::move(data);
  return t;
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(shape()));
  }
  return impl_->shape[axis];
}

double Tensor::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  if (index.size() != rank()) throw DimensionError("index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= impl_->shape[axis]) throw DimensionError("index out of range");
    flat = flat * impl_->shape[axis] + i;
    ++axis;
  }
  return impl_->data[flat];
}

Tensor& Tensor::set_requires_grad(bool v) {
  impl_->requires_grad = v;
  return *this;
}

std::vector<double> Tensor::grad() const {
  if (impl_->grad.empty()) return std::vector<double>(size(), 0.0);
  return std::vector<double>(impl_->grad.begin(), impl_->grad.end());
}

std::span<double> Tensor::mutable_grad() { return impl_->grad_buffer(); }

void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::clone() const {
  Tensor t = from_storage(impl_->shape, impl_->data);
  t.impl_->requires_grad = impl_->requires_grad;
  return t;
}

Tensor Tensor::detach() const { return from_storage(impl_->shape, impl_->data); }

bool Tensor::equals(const Tensor& other) const {
  return shape() == other.shape() && impl_->data == other.impl_->data;
}

void Graph::record(Node node) { nodes_.push_back(std::move(node)); }

void Graph::clear() {
  nodes_.clear();
  ++generation_;
}

Graph& Graph::current() {
  thread_local Graph graph;
  return graph;
}

void Graph::run_backward(const Tensor& loss) {
  if (loss.size() != 1 || loss.rank() > 1) {
    throw GraphError("backward() requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) {
    throw GraphError("backward() on a loss that does not require grad");
  }
  auto& loss_impl = *loss.impl();
  if (!loss_impl.is_leaf && loss_impl.graph_generation != generation_) {
    throw GraphError("graph already consumed: re-run the forward pass before calling backward()");
  }
  loss_impl.grad_buffer()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    auto& out = *it->output;
    if (out.grad.empty()) continue;
    it->backward(out.grad);
    if (g_debug_checks) {
      for (const auto& in : it->inputs) {
        if (!in->grad.empty()) detail::check_finite(it->op, in->grad);
      }
    }
  }
  // Release intermediate gradients and saved activations.
  for (auto& node : nodes_) node.output->grad.clear();
  clear();
}

void backward(const Tensor& loss) { Graph::current().run_backward(loss); }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

bool grad_enabled() { return t_grad_enabled; }

}  // namespace cva
