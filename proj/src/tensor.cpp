#include "sphdiff/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "sphdiff/error.hpp"

namespace sphdiff {

std::string to_string(const Shape& shape) {
  return std::to_string(shape.channels) + "x" + std::to_string(shape.height) + "x" +
         std::to_string(shape.width);
}

Tensor::Tensor(Shape shape, double fill) : shape_(shape) {
  require(shape.channels >= 0 && shape.height >= 0 && shape.width >= 0,
          "tensor dimensions must be non-negative");
  values_.assign(shape.size(), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(shape), values_(std::move(values)) {
  require(values_.size() == shape.size(),
          "tensor payload has " + std::to_string(values_.size()) +
              " values, shape " + to_string(shape) + " needs " +
              std::to_string(shape.size()));
}

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double value) { std::fill(values_.begin(), values_.end(), value); }

Tensor& Tensor::operator+=(const Tensor& other) {
  require(shape_ == other.shape_, "tensor shape mismatch in +=");
  for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += other.values_[k];
  return *this;
}

Tensor& Tensor::operator*=(double factor) {
  for (double& v : values_) v *= factor;
  return *this;
}

Tensor concat_channels(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_channels needs at least one tensor");
  const int h = parts.front().height();
  const int w = parts.front().width();
  int channels = 0;
  for (const Tensor& t : parts) {
    require(t.height() == h && t.width() == w,
            "concat_channels spatial mismatch: " + to_string(t.shape()));
    channels += t.channels();
  }
  Tensor out(channels, h, w);
  auto dst = out.values().begin();
  for (const Tensor& t : parts) dst = std::copy(t.values().begin(), t.values().end(), dst);
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require(a.shape() == b.shape(), "max_abs_diff shape mismatch");
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    worst = std::max(worst, std::abs(a.values()[k] - b.values()[k]));
  return worst;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), "dot length mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) acc += a[k] * b[k];
  return acc;
}

}  // namespace sphdiff
