#pragma once

// Deformable distortion-aware hint block: three convolutions, a deformable
// convolution whose learned sampling offsets are clamped to a fraction of the
// feature-map size, and a zero-initialised output convolution.

#include <array>
#include <vector>

#include "sphdiff/conv.hpp"
#include "sphdiff/rng.hpp"
#include "sphdiff/tensor.hpp"

namespace sphdiff::ddab {

using nn::Activation;
using nn::Conv2d;
using nn::NamedParams;

// Clamps raw offsets (2*k*k x H x W, channels ordered row0, col0, row1, col1, ...)
// to |row| <= k_d * H and |col| <= k_d * W.
Tensor clamp_offsets(const Tensor& raw, double k_d, int height, int width);

// Bilinear interpolation of every channel at continuous (y, x); samples outside
// the map read as zero.
std::vector<double> bilinear_sample(const Tensor& feature, double y, double x);

// Stride-1, "same"-padded deformable convolution (no modulation masks).
class DeformConv2d {
 public:
  DeformConv2d() = default;
  DeformConv2d(int in_channels, int out_channels, int kernel, double k_d);

  Conv2d& base() { return base_; }
  const Conv2d& base() const { return base_; }
  // Offset predictor g: in_channels -> 2 * k * k channels.
  Conv2d& offset_predictor() { return offset_; }
  const Conv2d& offset_predictor() const { return offset_; }
  double k_d() const { return k_d_; }

  Tensor offsets(const Tensor& in) const;
  Tensor forward(const Tensor& in) const;
  Tensor backward(const Tensor& in, const Tensor& grad_out, DeformConv2d& grad) const;

  void init_uniform(Rng& rng, double offset_gain);
  DeformConv2d zeros_like() const;
  void collect(const std::string& prefix, std::vector<NamedParams>& out);

 private:
  // Samples of every input channel at every tap: (C_in * k * k) x H x W.
  Tensor sample_columns(const Tensor& in, const Tensor& offsets) const;

  Conv2d base_;
  Conv2d offset_;
  double k_d_ = 0.1;
};

struct HintBlockConfig {
  int in_channels = 16;                     // C_E
  std::array<int, 4> widths{16, 16, 32, 32};  // outputs of layers 1-4
  int out_channels = 4;                     // C_z
  int kernel = 3;
  double k_d = 0.1;
  Activation activation = Activation::kSiLU;
};

class HintBlock {
 public:
  HintBlock() = default;
  explicit HintBlock(const HintBlockConfig& config);
  // Random layers 1-4, zero output convolution.
  static HintBlock initialized(const HintBlockConfig& config, Rng& rng);

  const HintBlockConfig& config() const { return config_; }
  Conv2d& conv(int index) { return convs_.at(index); }  // layers 1-3
  const Conv2d& conv(int index) const { return convs_.at(index); }
  DeformConv2d& deform() { return deform_; }
  const DeformConv2d& deform() const { return deform_; }
  Conv2d& zero_conv() { return zero_conv_; }
  const Conv2d& zero_conv() const { return zero_conv_; }

  Tensor forward(const Tensor& embedding) const;
  // Adds parameter gradients into `grad` and returns dL/dembedding.
  Tensor backward(const Tensor& embedding, const Tensor& grad_out, HintBlock& grad) const;

  HintBlock zeros_like() const;
  std::vector<NamedParams> parameters();

 private:
  HintBlockConfig config_;
  std::array<Conv2d, 3> convs_;
  DeformConv2d deform_;
  Conv2d zero_conv_;
};

}  // namespace sphdiff::ddab
