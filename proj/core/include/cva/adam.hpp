#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cva/params.hpp"
#include "cva/tensor.hpp"

namespace cva {

struct AdamOptions {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 1e-4;
};

/// Moment buffers and step counter. Weight decay is decoupled from the
/// gradient (applied as p -= lr * wd * p).
struct AdamState {
  AdamOptions options;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;

  /// Zeroed buffers matching `params`.
  static AdamState for_params(std::span<const Tensor> params, AdamOptions options);
};

/// One Adam update with bias correction. `grads[i]` must match `params[i]`.
void adam_step(std::span<Tensor> params, std::span<const std::vector<double>> grads,
               AdamState& state);

/// Optimizer over a ParameterSet reading the accumulated tensor gradients.
class Adam {
 public:
  Adam(const ParameterSet& params, AdamOptions options);

  void step();
  void zero_grad();
  const AdamState& state() const { return state_; }
  void set_learning_rate(double lr) { state_.options.learning_rate = lr; }

 private:
  std::vector<Tensor> params_;
  AdamState state_;
};

/// Rescales gradients so their global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

}  // namespace cva
