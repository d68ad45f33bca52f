#include "sphdiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "sphdiff/error.hpp"

namespace sphdiff::gradcheck {

std::vector<BlockError> compare(const std::function<double()>& loss,
                                std::span<const nn::NamedParams> params,
                                std::span<const nn::NamedParams> analytic, double step) {
  require(params.size() == analytic.size(), "gradient check: block count mismatch");
  require(step > 0.0, "gradient check: step must be positive");
  std::vector<BlockError> errors;
  for (std::size_t b = 0; b < params.size(); ++b) {
    const auto values = params[b].values;
    const auto grad = analytic[b].values;
    require(values.size() == grad.size(), "gradient check: size mismatch in " + params[b].name);
    BlockError e{params[b].name};
    double numeric_max = 0.0;
    double analytic_max = 0.0;
    for (std::size_t k = 0; k < values.size(); ++k) {
      const double saved = values[k];
      values[k] = saved + step;
      const double up = loss();
      values[k] = saved - step;
      const double down = loss();
      values[k] = saved;
      const double numeric = (up - down) / (2.0 * step);
      e.max_abs_diff = std::max(e.max_abs_diff, std::abs(numeric - grad[k]));
      numeric_max = std::max(numeric_max, std::abs(numeric));
      analytic_max = std::max(analytic_max, std::abs(grad[k]));
    }
    e.scale = std::max(numeric_max, analytic_max);
    e.relative_error = e.max_abs_diff / std::max(e.scale, kZeroGradientFloor);
    errors.push_back(e);
  }
  return errors;
}

double worst(std::span<const BlockError> errors) {
  double w = 0.0;
  for (const auto& e : errors) w = std::max(w, e.relative_error);
  return w;
}

}  // namespace sphdiff::gradcheck
