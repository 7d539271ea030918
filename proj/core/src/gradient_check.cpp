#include "bvr/gradient_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bvr {

double relative_error(double analytic, double numeric, double floor) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

GradCheckReport compare_with_finite_differences(const std::vector<ParamBlock>& blocks,
                                                const std::function<double()>& loss,
                                                const GradCheckOptions& options) {
  GradCheckReport report;
  const double h = options.epsilon;
  for (const ParamBlock& block : blocks) {
    for (std::size_t i = 0; i < block.values.size(); ++i) {
      const double saved = block.values[i];
      block.values[i] = saved + h;
      const double up = loss();
      block.values[i] = saved - h;
      const double down = loss();
      block.values[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = options.analytic_scale * block.grads[i];
      const double err = relative_error(analytic, numeric, options.floor);
      ++report.checked;
      if (err > report.max_rel_error || report.worst.empty()) {
        report.max_rel_error = err;
        report.worst = block.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return report;
}

GradCheckReport gradient_check(LayerStack& net, const Matrix& input, const OutputLoss& loss, PassOptions opts,
                               Rng& rng, const GradCheckOptions& options) {
  Matrix x = input;
  net.zero_grads();
  opts.replay = false;
  const Matrix out = net.forward(x, opts, rng);
  Matrix grad_out(out.rows(), out.cols());
  loss(out, grad_out);
  Matrix grad_in = net.backward(grad_out);

  std::vector<ParamBlock> blocks = net.parameters();
  blocks.push_back({"input", as_span(x), as_span(grad_in)});

  PassOptions replay = opts;
  replay.replay = true;
  Matrix scratch;
  auto objective = [&]() {
    const Matrix o = net.forward(x, replay, rng);
    scratch.resize(o.rows(), o.cols());
    return loss(o, scratch);
  };
  return compare_with_finite_differences(blocks, objective, options);
}

}  // namespace bvr
