#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cva/params.hpp"
#include "cva/tensor.hpp"

namespace cva::test {

/// Relative floor for the error denominator: an input whose gradient norm is
/// below this fraction of the largest input gradient norm in the same check is
/// compared against that scaled norm instead. Parameters with a structurally
/// zero gradient then register finite-difference noise (about 1e-10) rather
/// than a relative error of 1.
inline constexpr double kGradNormFloor = 1e-3;

struct GradCheckOptions {
  double step = 1e-5;
  /// Probe at most this many randomly chosen elements per input; 0 probes all.
  std::size_t max_probes = 0;
  std::uint64_t seed = 0;
};

/// Worst relative error between the analytic gradient and central finite
/// differences over `inputs`, measured per input as
/// ||analytic - numeric||_2 / max(||analytic||_2, ||numeric||_2, kGradNormFloor * S)
/// with S the largest analytic or numeric gradient norm over all inputs
/// on the probed elements. `loss` must rebuild the graph on every call.
double grad_check(const std::function<Tensor()>& loss, std::span<Tensor> inputs,
                  const GradCheckOptions& options = {});

Tensor random_tensor(Shape shape, Rng& rng, double stddev = 1.0);

}  // namespace cva::test
