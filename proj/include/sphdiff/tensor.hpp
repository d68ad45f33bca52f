#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sphdiff {

struct Shape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& shape);

// Dense C x H x W field of doubles, row-major with channel outermost.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(int channels, int height, int width, double fill = 0.0)
      : Tensor(Shape{channels, height, width}, fill) {}
  Tensor(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  int channels() const { return shape_.channels; }
  int height() const { return shape_.height; }
  int width() const { return shape_.width; }
  std::size_t size() const { return values_.size(); }
  std::size_t plane_size() const {
    return static_cast<std::size_t>(shape_.height) * shape_.width;
  }

  std::size_t index(int c, int i, int j) const {
    return (static_cast<std::size_t>(c) * shape_.height + i) * shape_.width + j;
  }
  double& operator()(int c, int i, int j) { return values_[index(c, i, j)]; }
  double operator()(int c, int i, int j) const { return values_[index(c, i, j)]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<double> plane(int c) {
    return std::span<double>(values_).subspan(c * plane_size(), plane_size());
  }
  std::span<const double> plane(int c) const {
    return std::span<const double>(values_).subspan(c * plane_size(), plane_size());
  }

  bool all_finite() const;
  void fill(double value);
  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double factor);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_{};
  std::vector<double> values_;
};

// Stacks tensors of equal spatial size along the channel axis.
Tensor concat_channels(std::span<const Tensor> parts);

// Largest elementwise absolute difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace sphdiff
