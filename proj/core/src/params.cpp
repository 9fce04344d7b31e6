#include "cva/params.hpp"

#include <stdexcept>

namespace cva {

Tensor& ParameterSet::add(std::string name, Tensor t) {
  for (const auto& item : items_) {
    if (item.name == name) throw std::invalid_argument("duplicate parameter name: " + name);
  }
  t.set_requires_grad(true);
  items_.push_back({std::move(name), std::move(t)});
  return items_.back().tensor;
}

std::vector<Tensor> ParameterSet::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const auto& item : items_) out.push_back(item.tensor);
  return out;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& item : items_) n += item.tensor.size();
  return n;
}

const Tensor* ParameterSet::find(const std::string& name) const {
  for (const auto& item : items_) {
    if (item.name == name) return &item.tensor;
  }
  return nullptr;
}

void ParameterSet::zero_grad() {
  for (auto& item : items_) item.tensor.zero_grad();
}

void ParameterSet::assign_from(const std::vector<NamedTensor>& other) {
  for (auto& item : items_) {
    const NamedTensor* src = nullptr;
    for (const auto& o : other) {
      if (o.name == item.name) {
        src = &o;
        break;
      }
    }
    if (!src) throw std::runtime_error("missing parameter in source: " + item.name);
    if (src->tensor.shape() != item.tensor.shape()) {
      throw DimensionError("parameter " + item.name + " has shape " +
                           shape_str(item.tensor.shape()) + " but source has " +
                           shape_str(src->tensor.shape()));
    }
    auto dst = item.tensor.mutable_data();
    std::copy(src->tensor.data().begin(), src->tensor.data().end(), dst.begin());
  }
}

Tensor normal_tensor(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.mutable_data()) v = dist(rng);
  return t;
}

Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.mutable_data()) v = dist(rng);
  return t;
}

}  // namespace cva
