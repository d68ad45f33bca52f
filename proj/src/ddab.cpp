#include "sphdiff/ddab.hpp"

#include <algorithm>
#include <cmath>

#include "sphdiff/error.hpp"

namespace sphdiff::ddab {
namespace {

struct BilinearCorners {
  int y0, x0;
  double ly, lx;  // fractional parts
  bool inside;    // false when the sample lies entirely in the zero border
};

BilinearCorners corners(double y, double x, int height, int width) {
  BilinearCorners c{};
  c.inside = !(y <= -1.0 || y >= height || x <= -1.0 || x >= width);
  if (!c.inside) return c;
  const double fy = std::floor(y);
  const double fx = std::floor(x);
  c.y0 = static_cast<int>(fy);
  c.x0 = static_cast<int>(fx);
  c.ly = y - fy;
  c.lx = x - fx;
  return c;
}

double read(std::span<const double> plane, int width, int height, int y, int x) {
  if (y < 0 || y >= height || x < 0 || x >= width) return 0.0;
  return plane[static_cast<std::size_t>(y) * width + x];
}

void accumulate(std::span<double> plane, int width, int height, int y, int x, double v) {
  if (y < 0 || y >= height || x < 0 || x >= width) return;
  plane[static_cast<std::size_t>(y) * width + x] += v;
}

double interpolate(std::span<const double> plane, int height, int width, const BilinearCorners& c) {
  if (!c.inside) return 0.0;
  const double v1 = read(plane, width, height, c.y0, c.x0);
  const double v2 = read(plane, width, height, c.y0, c.x0 + 1);
  const double v3 = read(plane, width, height, c.y0 + 1, c.x0);
  const double v4 = read(plane, width, height, c.y0 + 1, c.x0 + 1);
  const double hy = 1.0 - c.ly;
  const double hx = 1.0 - c.lx;
  return hy * hx * v1 + hy * c.lx * v2 + c.ly * hx * v3 + c.ly * c.lx * v4;
}

}  // namespace

Tensor clamp_offsets(const Tensor& raw, double k_d, int height, int width) {
  require(k_d >= 0.0, "offset clamp bound k_D must be non-negative");
  require(raw.channels() % 2 == 0, "offset tensor needs an even channel count");
  const double row_bound = k_d * height;
  const double col_bound = k_d * width;
  Tensor out(raw.shape());
  for (int c = 0; c < raw.channels(); ++c) {
    const double bound = (c % 2 == 0) ? row_bound : col_bound;
    const auto src = raw.plane(c);
    auto dst = out.plane(c);
    for (std::size_t p = 0; p < src.size(); ++p) dst[p] = std::clamp(src[p], -bound, bound);
  }
  return out;
}

std::vector<double> bilinear_sample(const Tensor& feature, double y, double x) {
  const BilinearCorners c = corners(y, x, feature.height(), feature.width());
  std::vector<double> out(feature.channels(), 0.0);
  for (int ch = 0; ch < feature.channels(); ++ch)
    out[ch] = interpolate(feature.plane(ch), feature.height(), feature.width(), c);
  return out;
}

DeformConv2d::DeformConv2d(int in_channels, int out_channels, int kernel, double k_d)
    : base_(in_channels, out_channels, kernel),
      offset_(in_channels, 2 * kernel * kernel, kernel),
      k_d_(k_d) {
  require(k_d >= 0.0, "offset clamp bound k_D must be non-negative");
}

Tensor DeformConv2d::offsets(const Tensor& in) const {
  return clamp_offsets(offset_.forward(in), k_d_, in.height(), in.width());
}

Tensor DeformConv2d::sample_columns(const Tensor& in, const Tensor& offsets) const {
  const int k = base_.kernel();
  const int taps = k * k;
  const int pad = k / 2;
  const int h = in.height();
  const int w = in.width();
  Tensor columns(in.channels() * taps, h, w);
  for (int t = 0; t < taps; ++t) {
    const int a = t / k;
    const int b = t % k;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const auto c = corners(i + a - pad + offsets(2 * t, i, j),
                               j + b - pad + offsets(2 * t + 1, i, j), h, w);
        for (int ci = 0; ci < in.channels(); ++ci)
          columns(ci * taps + t, i, j) = interpolate(in.plane(ci), h, w, c);
      }
    }
  }
  return columns;
}

Tensor DeformConv2d::forward(const Tensor& in) const {
  require(in.channels() == base_.in_channels(),
          "deformable convolution expects " + std::to_string(base_.in_channels()) +
              " input channels, got " + std::to_string(in.channels()));
  const Tensor columns = sample_columns(in, offsets(in));
  const int taps = base_.kernel() * base_.kernel();
  Tensor out(base_.out_channels(), in.height(), in.width());
  for (int o = 0; o < base_.out_channels(); ++o) {
    auto dst = out.plane(o);
    std::fill(dst.begin(), dst.end(), base_.bias()[o]);
    for (int ci = 0; ci < base_.in_channels(); ++ci) {
      for (int t = 0; t < taps; ++t) {
        const double wv = base_.weight()[(static_cast<std::size_t>(o) * base_.in_channels() + ci) * taps + t];
        const auto col = columns.plane(ci * taps + t);
        for (std::size_t p = 0; p < dst.size(); ++p) dst[p] += wv * col[p];
      }
    }
  }
  return out;
}

Tensor DeformConv2d::backward(const Tensor& in, const Tensor& grad_out, DeformConv2d& grad) const {
  const int k = base_.kernel();
  const int taps = k * k;
  const int pad = k / 2;
  const int h = in.height();
  const int w = in.width();
  const int cin = base_.in_channels();
  require(in.channels() == cin, "deformable convolution backward: input channel mismatch");
  require(grad_out.shape() == Shape{base_.out_channels(), h, w},
          "deformable convolution backward: upstream gradient shape mismatch");

  const Tensor raw = offset_.forward(in);
  const Tensor off = clamp_offsets(raw, k_d_, h, w);
  const Tensor columns = sample_columns(in, off);

  Tensor grad_columns(columns.shape());
  for (int o = 0; o < base_.out_channels(); ++o) {
    const auto g = grad_out.plane(o);
    double bias_acc = 0.0;
    for (double v : g) bias_acc += v;
    grad.base_.bias()[o] += bias_acc;
    for (int ci = 0; ci < cin; ++ci) {
      for (int t = 0; t < taps; ++t) {
        const std::size_t widx = (static_cast<std::size_t>(o) * cin + ci) * taps + t;
        const double wv = base_.weight()[widx];
        const auto col = columns.plane(ci * taps + t);
        auto gcol = grad_columns.plane(ci * taps + t);
        double acc = 0.0;
        for (std::size_t p = 0; p < g.size(); ++p) {
          acc += g[p] * col[p];
          gcol[p] += wv * g[p];
        }
        grad.base_.weight()[widx] += acc;
      }
    }
  }

  Tensor grad_in(in.shape());
  Tensor grad_raw(raw.shape());
  const double row_bound = k_d_ * h;
  const double col_bound = k_d_ * w;
  for (int t = 0; t < taps; ++t) {
    const int a = t / k;
    const int b = t % k;
    for (int i = 0; i < h; ++i) {
      for (int j = 0; j < w; ++j) {
        const auto c = corners(i + a - pad + off(2 * t, i, j), j + b - pad + off(2 * t + 1, i, j), h, w);
        if (!c.inside) continue;
        const double hy = 1.0 - c.ly;
        const double hx = 1.0 - c.lx;
        double gy = 0.0;
        double gx = 0.0;
        for (int ci = 0; ci < cin; ++ci) {
          const double gc = grad_columns(ci * taps + t, i, j);
          if (gc == 0.0) continue;
          const auto plane = in.plane(ci);
          const double v1 = read(plane, w, h, c.y0, c.x0);
          const double v2 = read(plane, w, h, c.y0, c.x0 + 1);
          const double v3 = read(plane, w, h, c.y0 + 1, c.x0);
          const double v4 = read(plane, w, h, c.y0 + 1, c.x0 + 1);
          gy += gc * (-hx * v1 - c.lx * v2 + hx * v3 + c.lx * v4);
          gx += gc * (-hy * v1 + hy * v2 - c.ly * v3 + c.ly * v4);
          auto gplane = grad_in.plane(ci);
          accumulate(gplane, w, h, c.y0, c.x0, gc * hy * hx);
          accumulate(gplane, w, h, c.y0, c.x0 + 1, gc * hy * c.lx);
          accumulate(gplane, w, h, c.y0 + 1, c.x0, gc * c.ly * hx);
          accumulate(gplane, w, h, c.y0 + 1, c.x0 + 1, gc * c.ly * c.lx);
        }
        // Clamp passes gradient on the closed interval, blocks it outside.
        const double ry = raw(2 * t, i, j);
        const double rx = raw(2 * t + 1, i, j);
        if (ry >= -row_bound && ry <= row_bound) grad_raw(2 * t, i, j) = gy;
        if (rx >= -col_bound && rx <= col_bound) grad_raw(2 * t + 1, i, j) = gx;
      }
    }
  }
  grad_in += offset_.backward(in, grad_raw, grad.offset_);
  return grad_in;
}

void DeformConv2d::init_uniform(Rng& rng, double offset_gain) {
  base_.init_uniform(rng);
  offset_.init_uniform(rng, offset_gain);
}

DeformConv2d DeformConv2d::zeros_like() const {
  DeformConv2d z = *this;
  z.base_.set_zero();
  z.offset_.set_zero();
  return z;
}

void DeformConv2d::collect(const std::string& prefix, std::vector<NamedParams>& out) {
  base_.collect(prefix + ".base", out);
  offset_.collect(prefix + ".offset", out);
}

HintBlock::HintBlock(const HintBlockConfig& config) : config_(config) {
  require(config.in_channels >= 1 && config.out_channels >= 1, "hint block needs >= 1 channel");
  for (int width : config.widths) require(width >= 1, "hint block widths must be >= 1");
  convs_[0] = Conv2d(config.in_channels, config.widths[0], config.kernel);
  convs_[1] = Conv2d(config.widths[0], config.widths[1], config.kernel);
  convs_[2] = Conv2d(config.widths[1], config.widths[2], config.kernel);
  deform_ = DeformConv2d(config.widths[2], config.widths[3], config.kernel, config.k_d);
  zero_conv_ = Conv2d(config.widths[3], config.out_channels, config.kernel);
}

HintBlock HintBlock::initialized(const HintBlockConfig& config, Rng& rng) {
  HintBlock block(config);
  for (Conv2d& conv : block.convs_) conv.init_uniform(rng);
  block.deform_.init_uniform(rng, 0.1);
  block.zero_conv_.set_zero();
  return block;
}

Tensor HintBlock::forward(const Tensor& embedding) const {
  Tensor h = embedding;
  for (const Conv2d& conv : convs_) h = nn::activate(config_.activation, conv.forward(h));
  h = nn::activate(config_.activation, deform_.forward(h));
  return zero_conv_.forward(h);
}

Tensor HintBlock::backward(const Tensor& embedding, const Tensor& grad_out, HintBlock& grad) const {
  // Inputs to each layer and the pre-activations that follow it.
  std::array<Tensor, 4> inputs;
  std::array<Tensor, 4> pre;
  Tensor h = embedding;
  for (int l = 0; l < 3; ++l) {
    inputs[l] = h;
    pre[l] = convs_[l].forward(h);
    h = nn::activate(config_.activation, pre[l]);
  }
  inputs[3] = h;
  pre[3] = deform_.forward(h);
  const Tensor last = nn::activate(config_.activation, pre[3]);

  Tensor g = zero_conv_.backward(last, grad_out, grad.zero_conv_);
  g = nn::activate_backward(config_.activation, pre[3], g);
  g = deform_.backward(inputs[3], g, grad.deform_);
  for (int l = 2; l >= 0; --l) {
    g = nn::activate_backward(config_.activation, pre[l], g);
    g = convs_[l].backward(inputs[l], g, grad.convs_[l]);
  }
  return g;
}

HintBlock HintBlock::zeros_like() const {
  HintBlock z = *this;
  for (Conv2d& conv : z.convs_) conv.set_zero();
  z.deform_ = deform_.zeros_like();
  z.zero_conv_.set_zero();
  return z;
}

std::vector<NamedParams> HintBlock::parameters() {
  std::vector<NamedParams> out;
  convs_[0].collect("hint.conv1", out);
  convs_[1].collect("hint.conv2", out);
  convs_[2].collect("hint.conv3", out);
  deform_.collect("hint.deform4", out);
  zero_conv_.collect("hint.zero_conv", out);
  return out;
}

}  // namespace sphdiff::ddab
