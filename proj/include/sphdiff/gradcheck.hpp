#pragma once

// Central finite-difference comparison against analytic gradients.

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sphdiff/conv.hpp"

namespace sphdiff::gradcheck {

struct BlockError {
  std::string name;
  double max_abs_diff = 0.0;
  double scale = 0.0;  // max(|analytic|_inf, |numeric|_inf)
  double relative_error = 0.0;
};

// Scale below which a gradient block counts as zero; keeps the ratio finite
// for blocks that vanish analytically.
inline constexpr double kZeroGradientFloor = 1e-8;

// For every entry of every block in `params`, evaluates
// (loss(x + h) - loss(x - h)) / 2h and compares it with the matching entry of
// `analytic`. The relative error of a block is
// max|analytic - numeric| / max(|analytic|_inf, |numeric|_inf, kZeroGradientFloor).
std::vector<BlockError> compare(const std::function<double()>& loss,
                                std::span<const nn::NamedParams> params,
                                std::span<const nn::NamedParams> analytic, double step = 1e-5);

double worst(std::span<const BlockError> errors);

}  // namespace sphdiff::gradcheck
