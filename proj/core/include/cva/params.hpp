#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "cva/tensor.hpp"

namespace cva {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Ordered registry of trainable tensors. Order is registration order and is
/// what checkpoints and the optimizer iterate over.
class ParameterSet {
 public:
  /// Registers `t` under `name` and marks it as requiring grad.
  Tensor& add(std::string name, Tensor t);

  const std::vector<NamedTensor>& items() const { return items_; }
  std::vector<NamedTensor>& items() { return items_; }
  std::vector<Tensor> tensors() const;
  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const;

  const Tensor* find(const std::string& name) const;
  void zero_grad();

  /// Copies values from `other` by name; shapes must match and every name must
  /// be present.
  void assign_from(const std::vector<NamedTensor>& other);

 private:
  std::vector<NamedTensor> items_;
};

/// Seeded generator used for every stochastic choice in the library.
using Rng = std::mt19937_64;

Tensor normal_tensor(Shape shape, double stddev, Rng& rng);
Tensor uniform_tensor(Shape shape, double lo, double hi, Rng& rng);

}  // namespace cva
