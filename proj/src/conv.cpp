#include "sphdiff/conv.hpp"

#include <algorithm>
#include <cmath>

#include "sphdiff/error.hpp"

namespace sphdiff::nn {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Output columns j with 0 <= j * stride + offset < width.
std::pair<int, int> valid_range(int offset, int stride, int width, int out_width) {
  int lo = 0;
  if (offset < 0) lo = (-offset + stride - 1) / stride;
  // j * stride + offset <= width - 1
  const int limit = width - 1 - offset;
  const int hi = limit < 0 ? 0 : std::min(out_width, limit / stride + 1);
  return {lo, std::max(lo, hi)};
}

}  // namespace

double activate(Activation act, double x) {
  switch (act) {
    case Activation::kSiLU:
      return x * sigmoid(x);
    case Activation::kIdentity:
      return x;
  }
  return x;
}

double activate_derivative(Activation act, double x) {
  switch (act) {
    case Activation::kSiLU: {
      const double s = sigmoid(x);
      return s * (1.0 + x * (1.0 - s));
    }
    case Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

Tensor activate(Activation act, const Tensor& pre) {
  Tensor out(pre.shape());
  auto dst = out.values();
  auto src = pre.values();
  for (std::size_t k = 0; k < src.size(); ++k) dst[k] = activate(act, src[k]);
  return out;
}

Tensor activate_backward(Activation act, const Tensor& pre, const Tensor& grad_out) {
  require(pre.shape() == grad_out.shape(), "activation backward shape mismatch");
  Tensor out(pre.shape());
  auto dst = out.values();
  for (std::size_t k = 0; k < dst.size(); ++k)
    dst[k] = grad_out.values()[k] * activate_derivative(act, pre.values()[k]);
  return out;
}

Activation parse_activation(const std::string& name) {
  if (name == "silu") return Activation::kSiLU;
  if (name == "identity") return Activation::kIdentity;
  throw PreconditionError("unknown activation '" + name + "' (expected silu or identity)");
}

std::string to_string(Activation act) {
  return act == Activation::kSiLU ? "silu" : "identity";
}

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel), stride_(stride),
      padding_(padding < 0 ? kernel / 2 : padding) {
  require(in_channels >= 1 && out_channels >= 1, "convolution needs >= 1 input and output channel");
  require(kernel >= 1 && kernel % 2 == 1, "convolution kernel size must be odd");
  require(stride >= 1, "convolution stride must be >= 1");
  weight_.assign(static_cast<std::size_t>(out_channels) * in_channels * kernel * kernel, 0.0);
  bias_.assign(out_channels, 0.0);
}

Shape Conv2d::output_shape(const Shape& in) const {
  return {out_channels_, (in.height + 2 * padding_ - kernel_) / stride_ + 1,
          (in.width + 2 * padding_ - kernel_) / stride_ + 1};
}

void Conv2d::check_input(const Tensor& in) const {
  require(in.channels() == in_channels_,
          "convolution expects " + std::to_string(in_channels_) + " input channels, got " +
              std::to_string(in.channels()));
  require(in.height() + 2 * padding_ >= kernel_ && in.width() + 2 * padding_ >= kernel_,
          "convolution input " + to_string(in.shape()) + " smaller than kernel");
}

Tensor Conv2d::forward(const Tensor& in) const {
  check_input(in);
  const Shape os = output_shape(in.shape());
  Tensor out(os);
  for (int o = 0; o < out_channels_; ++o) {
    auto dst = out.plane(o);
    std::fill(dst.begin(), dst.end(), bias_[o]);
    for (int ci = 0; ci < in_channels_; ++ci) {
      const auto src = in.plane(ci);
      for (int a = 0; a < kernel_; ++a) {
        for (int b = 0; b < kernel_; ++b) {
          const double wv = w(o, ci, a, b);
          const auto [jlo, jhi] = valid_range(b - padding_, stride_, in.width(), os.width);
          for (int i = 0; i < os.height; ++i) {
            const int si = i * stride_ + a - padding_;
            if (si < 0 || si >= in.height()) continue;
            const double* row = src.data() + static_cast<std::size_t>(si) * in.width();
            double* orow = dst.data() + static_cast<std::size_t>(i) * os.width;
            for (int j = jlo; j < jhi; ++j) orow[j] += wv * row[j * stride_ + b - padding_];
          }
        }
      }
    }
  }
  return out;
}

Tensor Conv2d::backward(const Tensor& in, const Tensor& grad_out, Conv2d& grad) const {
  check_input(in);
  const Shape os = output_shape(in.shape());
  require(grad_out.shape() == os, "convolution backward: upstream gradient shape mismatch");
  require(grad.weight_.size() == weight_.size() && grad.bias_.size() == bias_.size(),
          "convolution backward: gradient container shape mismatch");
  Tensor grad_in(in.shape());
  for (int o = 0; o < out_channels_; ++o) {
    const auto g = grad_out.plane(o);
    double bias_acc = 0.0;
    for (double v : g) bias_acc += v;
    grad.bias_[o] += bias_acc;
    for (int ci = 0; ci < in_channels_; ++ci) {
      const auto src = in.plane(ci);
      auto gin = grad_in.plane(ci);
      for (int a = 0; a < kernel_; ++a) {
        for (int b = 0; b < kernel_; ++b) {
          const double wv = w(o, ci, a, b);
          double w_acc = 0.0;
          const auto [jlo, jhi] = valid_range(b - padding_, stride_, in.width(), os.width);
          for (int i = 0; i < os.height; ++i) {
            const int si = i * stride_ + a - padding_;
            if (si < 0 || si >= in.height()) continue;
            const double* row = src.data() + static_cast<std::size_t>(si) * in.width();
            double* grow = gin.data() + static_cast<std::size_t>(si) * in.width();
            const double* g_row = g.data() + static_cast<std::size_t>(i) * os.width;
            for (int j = jlo; j < jhi; ++j) {
              const int sj = j * stride_ + b - padding_;
              w_acc += row[sj] * g_row[j];
              grow[sj] += wv * g_row[j];
            }
          }
          grad.w(o, ci, a, b) += w_acc;
        }
      }
    }
  }
  return grad_in;
}

void Conv2d::init_uniform(Rng& rng, double gain) {
  const double scale = gain / std::sqrt(static_cast<double>(in_channels_ * kernel_ * kernel_));
  for (double& v : weight_) v = rng.uniform(-scale, scale);
  for (double& v : bias_) v = rng.uniform(-scale, scale);
}

void Conv2d::set_zero() {
  std::fill(weight_.begin(), weight_.end(), 0.0);
  std::fill(bias_.begin(), bias_.end(), 0.0);
}

Conv2d Conv2d::zeros_like() const {
  Conv2d z = *this;
  z.set_zero();
  return z;
}

void Conv2d::collect(const std::string& prefix, std::vector<NamedParams>& out) {
  out.push_back({prefix + ".weight", weight_});
  out.push_back({prefix + ".bias", bias_});
}

}  // namespace sphdiff::nn
