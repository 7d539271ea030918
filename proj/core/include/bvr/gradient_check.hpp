#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bvr/layer_stack.hpp"

namespace bvr {

struct GradCheckOptions {
  /// Central-difference step.
  double epsilon = 1e-5;
  /// Denominator floor: error = |a - n| / max(|a|, |n|, floor).
  double floor = 1e-4;
  /// Multiplies analytic gradients before comparison (fault injection only).
  double analytic_scale = 1.0;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // "<block>[index]"
  std::size_t checked = 0;
};

double relative_error(double analytic, double numeric, double floor) noexcept;

/// Compares the analytic gradients already held in `blocks` against central
/// differences of `loss`, perturbing each value in place and restoring it.
GradCheckReport compare_with_finite_differences(const std::vector<ParamBlock>& blocks,
                                                const std::function<double()>& loss,
                                                const GradCheckOptions& options = {});

/// Scalar loss of a network output; writes dLoss/dOutput into `grad`.
using OutputLoss = std::function<double(const Matrix& output, Matrix& grad)>;

/// Checks every parameter gradient of `net` (plus the input gradient) for
/// `loss(net(input))`. Stochastic layers draw once and are then replayed, so
/// every perturbed pass sees the same masks and weight noise.
GradCheckReport gradient_check(LayerStack& net, const Matrix& input, const OutputLoss& loss, PassOptions opts,
                               Rng& rng, const GradCheckOptions& options = {});

}  // namespace bvr
