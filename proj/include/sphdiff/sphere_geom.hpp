#pragma once

// Equirectangular (ERP) geometry: pixel <-> direction transforms, rotation
// matrices and nearest-neighbour panorama rotation.
//
// Conventions: z is up, longitude is measured from +x towards +y, and pixel
// (i, j) refers to the centre of the cell, i.e. longitude (j + 0.5) / W * 360 - 180
// and latitude 90 - (i + 0.5) / H * 180. Rotations act on direction vectors as
// v' = Rx(roll) * Ry(pitch) * Rz(yaw) * v, so a yaw-only rotation adds yaw to
// every longitude.

#include <array>
#include <cstddef>
#include <vector>

#include "sphdiff/mask.hpp"
#include "sphdiff/tensor.hpp"

namespace sphdiff::geom {

using Vec3 = std::array<double, 3>;

// 2:1 pixel grid.
class ErpGrid {
 public:
  ErpGrid(int height, int width);
  static ErpGrid with_height(int height) { return ErpGrid(height, 2 * height); }

  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height_) * width_; }
  // Angular width of one column in degrees.
  double column_step_deg() const { return 360.0 / width_; }

  friend bool operator==(const ErpGrid&, const ErpGrid&) = default;

 private:
  int height_;
  int width_;
};

// Unit vector on the sphere.
class SphericalDirection {
 public:
  // Normalises v; throws on zero or non-finite input.
  static SphericalDirection from_vector(const Vec3& v);
  const Vec3& vector() const { return v_; }
  double x() const { return v_[0]; }
  double y() const { return v_[1]; }
  double z() const { return v_[2]; }

 private:
  explicit SphericalDirection(const Vec3& v) : v_(v) {}
  Vec3 v_;
};

// Yaw, pitch, roll in degrees.
struct RotationAngles {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;

  // yaw in [0, 360), pitch and roll in [-180, 180).
  RotationAngles canonical() const;
  friend bool operator==(const RotationAngles&, const RotationAngles&) = default;
};

class RotationMatrix {
 public:
  using Rows = std::array<std::array<double, 3>, 3>;

  RotationMatrix();  // identity
  explicit RotationMatrix(const Rows& m) : m_(m) {}

  double operator()(int r, int c) const { return m_[r][c]; }
  const Rows& rows() const { return m_; }

  Vec3 apply(const Vec3& v) const;
  SphericalDirection apply(const SphericalDirection& d) const;
  RotationMatrix transpose() const;
  double determinant() const;
  // Largest |(R R^T - I)_{rc}|.
  double orthonormality_error() const;

  friend RotationMatrix operator*(const RotationMatrix& a, const RotationMatrix& b);

 private:
  Rows m_;
};

RotationMatrix rotation_matrix(const RotationAngles& angles);

struct PixelCoordinate {
  double row = 0.0;  // continuous, pixel-centre units
  double col = 0.0;
  int nearest_row = 0;
  int nearest_col = 0;
};

SphericalDirection pixel_to_direction(const ErpGrid& grid, int i, int j);
PixelCoordinate direction_to_pixel(const ErpGrid& grid, const SphericalDirection& d);

// C x H x W field on a 2:1 grid with finite values.
class EquirectImage {
 public:
  explicit EquirectImage(Tensor data);
  EquirectImage(int channels, const ErpGrid& grid, double fill = 0.0)
      : EquirectImage(Tensor(channels, grid.height(), grid.width(), fill)) {}

  const Tensor& tensor() const { return data_; }
  Tensor&& release() && { return std::move(data_); }
  ErpGrid grid() const { return ErpGrid(data_.height(), data_.width()); }
  int channels() const { return data_.channels(); }
  double operator()(int c, int i, int j) const { return data_(c, i, j); }

  friend bool operator==(const EquirectImage&, const EquirectImage&) = default;

 private:
  Tensor data_;
};

// For each output pixel (row-major), the flat index of the input pixel it
// pulls from under rotation by `angles` (nearest neighbour, pull-back).
std::vector<std::size_t> rotation_source_map(const ErpGrid& grid, const RotationAngles& angles);
// Same, for an arbitrary forward rotation matrix.
std::vector<std::size_t> rotation_source_map(const ErpGrid& grid, const RotationMatrix& forward);

// Gathers every channel of `data` through a source map.
Tensor gather_pixels(const Tensor& data, const std::vector<std::size_t>& source);
// Adjoint of gather_pixels: scatter-adds gradients back to source pixels.
Tensor scatter_pixels(const Tensor& grad, const std::vector<std::size_t>& source);

EquirectImage rotate_image(const EquirectImage& image, const RotationAngles& angles);
// Circular column shift: out[.., j] = in[.., (j - k) mod W].
EquirectImage yaw_shift(const EquirectImage& image, int k);
Tensor yaw_shift(const Tensor& data, int k);

struct NfovSpec {
  double fov_h_deg = 90.0;
  double aspect = 2.0;  // width / height of the image plane
  RotationAngles viewpoint{};
};

// Pixels whose direction falls inside the rectilinear frustum of the camera.
// The camera looks along R(viewpoint) * (1, 0, 0).
BinaryMask nfov_mask(const ErpGrid& grid, const NfovSpec& spec);

}  // namespace sphdiff::geom
