#pragma once

// Dense 2-D convolution with hand-written backward pass, plus the pointwise
// activations used between layers.

#include <span>
#include <string>
#include <vector>

#include "sphdiff/rng.hpp"
#include "sphdiff/tensor.hpp"

namespace sphdiff::nn {

enum class Activation { kSiLU, kIdentity };

double activate(Activation act, double x);
double activate_derivative(Activation act, double x);
Tensor activate(Activation act, const Tensor& pre);
// grad_out * act'(pre), elementwise.
Tensor activate_backward(Activation act, const Tensor& pre, const Tensor& grad_out);

Activation parse_activation(const std::string& name);
std::string to_string(Activation act);

// View onto one parameter array of a model; used for optimisers, checkpoints
// and finite-difference checks.
struct NamedParams {
  std::string name;
  std::span<double> values;
};

class Conv2d {
 public:
  Conv2d() = default;
  // padding < 0 selects "same" padding (kernel / 2).
  Conv2d(int in_channels, int out_channels, int kernel, int stride = 1, int padding = -1);

  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  int kernel() const { return kernel_; }
  int stride() const { return stride_; }
  int padding() const { return padding_; }

  // Weights are laid out out x in x k x k.
  std::vector<double>& weight() { return weight_; }
  const std::vector<double>& weight() const { return weight_; }
  std::vector<double>& bias() { return bias_; }
  const std::vector<double>& bias() const { return bias_; }
  double& w(int o, int i, int a, int b) {
    return weight_[((static_cast<std::size_t>(o) * in_channels_ + i) * kernel_ + a) * kernel_ + b];
  }
  double w(int o, int i, int a, int b) const {
    return weight_[((static_cast<std::size_t>(o) * in_channels_ + i) * kernel_ + a) * kernel_ + b];
  }

  Shape output_shape(const Shape& in) const;
  Tensor forward(const Tensor& in) const;
  // Adds dL/dweight and dL/dbias into `grad` and returns dL/din.
  Tensor backward(const Tensor& in, const Tensor& grad_out, Conv2d& grad) const;

  // Uniform(-scale, scale) with scale = gain / sqrt(fan_in); bias likewise.
  void init_uniform(Rng& rng, double gain = 1.0);
  void set_zero();
  Conv2d zeros_like() const;
  void collect(const std::string& prefix, std::vector<NamedParams>& out);

 private:
  void check_input(const Tensor& in) const;

  int in_channels_ = 0;
  int out_channels_ = 0;
  int kernel_ = 1;
  int stride_ = 1;
  int padding_ = 0;
  std::vector<double> weight_;
  std::vector<double> bias_;
};

}  // namespace sphdiff::nn
