#include "sphdiff/sphere_geom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "sphdiff/error.hpp"

namespace sphdiff::geom {
namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kRadToDeg = 180.0 / std::numbers::pi;

struct SinCos {
  double sin;
  double cos;
};

// Exact at multiples of 90 degrees so that quarter and full turns are exact.
SinCos sin_cos_deg(double deg) {
  double reduced = std::fmod(deg, 360.0);
  if (reduced < 0) reduced += 360.0;
  if (reduced == 0.0) return {0.0, 1.0};
  if (reduced == 90.0) return {1.0, 0.0};
  if (reduced == 180.0) return {0.0, -1.0};
  if (reduced == 270.0) return {-1.0, 0.0};
  const double rad = deg * kDegToRad;
  return {std::sin(rad), std::cos(rad)};
}

double wrap_signed(double deg) {
  double r = std::fmod(deg + 180.0, 360.0);
  if (r < 0) r += 360.0;
  return r - 180.0;
}

}  // namespace

ErpGrid::ErpGrid(int height, int width) : height_(height), width_(width) {
  require(height >= 1, "ERP grid height must be >= 1, got " + std::to_string(height));
  require(width == 2 * height, "ERP grid must be 2:1, got " + std::to_string(height) +
                                   "x" + std::to_string(width));
}

SphericalDirection SphericalDirection::from_vector(const Vec3& v) {
  const double norm = std::hypot(v[0], v[1], v[2]);
  require(std::isfinite(norm) && norm > 0.0, "direction must be a finite non-zero vector");
  return SphericalDirection({v[0] / norm, v[1] / norm, v[2] / norm});
}

RotationAngles RotationAngles::canonical() const {
  double y = std::fmod(yaw, 360.0);
  if (y < 0) y += 360.0;
  if (y >= 360.0) y = 0.0;
  return {y, wrap_signed(pitch), wrap_signed(roll)};
}

RotationMatrix::RotationMatrix() : m_{{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}} {}

Vec3 RotationMatrix::apply(const Vec3& v) const {
  Vec3 out{};
  for (int r = 0; r < 3; ++r) out[r] = m_[r][0] * v[0] + m_[r][1] * v[1] + m_[r][2] * v[2];
  return out;
}

SphericalDirection RotationMatrix::apply(const SphericalDirection& d) const {
  return SphericalDirection::from_vector(apply(d.vector()));
}

RotationMatrix RotationMatrix::transpose() const {
  Rows t{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) t[r][c] = m_[c][r];
  return RotationMatrix(t);
}

double RotationMatrix::determinant() const {
  return m_[0][0] * (m_[1][1] * m_[2][2] - m_[1][2] * m_[2][1]) -
         m_[0][1] * (m_[1][0] * m_[2][2] - m_[1][2] * m_[2][0]) +
         m_[0][2] * (m_[1][0] * m_[2][1] - m_[1][1] * m_[2][0]);
}

double RotationMatrix::orthonormality_error() const {
  double worst = 0.0;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += m_[r][k] * m_[c][k];
      worst = std::max(worst, std::abs(acc - (r == c ? 1.0 : 0.0)));
    }
  }
  return worst;
}

RotationMatrix operator*(const RotationMatrix& a, const RotationMatrix& b) {
  RotationMatrix::Rows out{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c)
      out[r][c] = a.m_[r][0] * b.m_[0][c] + a.m_[r][1] * b.m_[1][c] + a.m_[r][2] * b.m_[2][c];
  return RotationMatrix(out);
}

RotationMatrix rotation_matrix(const RotationAngles& angles) {
  const auto [sa, ca] = sin_cos_deg(angles.yaw);
  const auto [sb, cb] = sin_cos_deg(angles.pitch);
  const auto [sg, cg] = sin_cos_deg(angles.roll);
  const RotationMatrix rz({{{ca, -sa, 0}, {sa, ca, 0}, {0, 0, 1}}});
  const RotationMatrix ry({{{cb, 0, sb}, {0, 1, 0}, {-sb, 0, cb}}});
  const RotationMatrix rx({{{1, 0, 0}, {0, cg, -sg}, {0, sg, cg}}});
  return rx * ry * rz;
}

SphericalDirection pixel_to_direction(const ErpGrid& grid, int i, int j) {
  require(i >= 0 && i < grid.height() && j >= 0 && j < grid.width(),
          "pixel (" + std::to_string(i) + ", " + std::to_string(j) + ") outside " +
              std::to_string(grid.height()) + "x" + std::to_string(grid.width()) + " grid");
  const double lon = ((j + 0.5) / grid.width() * 360.0 - 180.0) * kDegToRad;
  const double lat = (90.0 - (i + 0.5) / grid.height() * 180.0) * kDegToRad;
  const double cl = std::cos(lat);
  return SphericalDirection::from_vector({cl * std::cos(lon), cl * std::sin(lon), std::sin(lat)});
}

PixelCoordinate direction_to_pixel(const ErpGrid& grid, const SphericalDirection& d) {
  const double lon = std::atan2(d.y(), d.x()) * kRadToDeg;
  const double lat = std::asin(std::clamp(d.z(), -1.0, 1.0)) * kRadToDeg;
  PixelCoordinate p;
  p.col = (lon + 180.0) / 360.0 * grid.width() - 0.5;
  p.row = (90.0 - lat) / 180.0 * grid.height() - 0.5;
  const auto w = static_cast<long>(grid.width());
  long col = static_cast<long>(std::floor(p.col + 0.5)) % w;
  if (col < 0) col += w;
  p.nearest_col = static_cast<int>(col);
  p.nearest_row = std::clamp(static_cast<int>(std::floor(p.row + 0.5)), 0, grid.height() - 1);
  return p;
}

EquirectImage::EquirectImage(Tensor data) : data_(std::move(data)) {
  require(data_.channels() >= 1, "equirectangular image needs at least one channel");
  ErpGrid check(data_.height(), data_.width());
  (void)check;
  require(data_.all_finite(), "equirectangular image contains non-finite values");
}

std::vector<std::size_t> rotation_source_map(const ErpGrid& grid, const RotationAngles& angles) {
  return rotation_source_map(grid, rotation_matrix(angles));
}

std::vector<std::size_t> rotation_source_map(const ErpGrid& grid, const RotationMatrix& forward) {
  const RotationMatrix inverse = forward.transpose();
  std::vector<std::size_t> source(grid.pixel_count());
  for (int i = 0; i < grid.height(); ++i) {
    for (int j = 0; j < grid.width(); ++j) {
      const auto from = direction_to_pixel(grid, inverse.apply(pixel_to_direction(grid, i, j)));
      source[static_cast<std::size_t>(i) * grid.width() + j] =
          static_cast<std::size_t>(from.nearest_row) * grid.width() + from.nearest_col;
    }
  }
  return source;
}

Tensor gather_pixels(const Tensor& data, const std::vector<std::size_t>& source) {
  require(source.size() == data.plane_size(), "source map does not match tensor plane");
  Tensor out(data.shape());
  for (int c = 0; c < data.channels(); ++c) {
    const auto in = data.plane(c);
    auto dst = out.plane(c);
    for (std::size_t p = 0; p < source.size(); ++p) dst[p] = in[source[p]];
  }
  return out;
}

Tensor scatter_pixels(const Tensor& grad, const std::vector<std::size_t>& source) {
  require(source.size() == grad.plane_size(), "source map does not match tensor plane");
  Tensor out(grad.shape());
  for (int c = 0; c < grad.channels(); ++c) {
    const auto g = grad.plane(c);
    auto dst = out.plane(c);
    for (std::size_t p = 0; p < source.size(); ++p) dst[source[p]] += g[p];
  }
  return out;
}

EquirectImage rotate_image(const EquirectImage& image, const RotationAngles& angles) {
  return EquirectImage(gather_pixels(image.tensor(), rotation_source_map(image.grid(), angles)));
}

Tensor yaw_shift(const Tensor& data, int k) {
  const int w = data.width();
  require(w >= 1, "yaw_shift needs a non-empty tensor");
  const int shift = ((k % w) + w) % w;
  Tensor out(data.shape());
  for (int c = 0; c < data.channels(); ++c)
    for (int i = 0; i < data.height(); ++i)
      for (int j = 0; j < w; ++j) out(c, i, (j + shift) % w) = data(c, i, j);
  return out;
}

EquirectImage yaw_shift(const EquirectImage& image, int k) {
  return EquirectImage(yaw_shift(image.tensor(), k));
}

BinaryMask nfov_mask(const ErpGrid& grid, const NfovSpec& spec) {
  require(spec.fov_h_deg > 0.0 && spec.fov_h_deg < 180.0,
          "NFOV horizontal field of view must lie in (0, 180) degrees");
  require(spec.aspect > 0.0 && std::isfinite(spec.aspect), "NFOV aspect must be positive");
  const double tan_h = std::tan(spec.fov_h_deg * 0.5 * kDegToRad);
  const double tan_v = tan_h / spec.aspect;
  // Columns of R are the camera axes in world space, so R^T maps world to camera.
  const RotationMatrix to_camera = rotation_matrix(spec.viewpoint).transpose();
  BinaryMask mask(grid.height(), grid.width());
  for (int i = 0; i < grid.height(); ++i) {
    for (int j = 0; j < grid.width(); ++j) {
      const Vec3 v = to_camera.apply(pixel_to_direction(grid, i, j).vector());
      if (v[0] <= 0.0) continue;
      const bool inside = std::abs(v[1]) <= tan_h * v[0] && std::abs(v[2]) <= tan_v * v[0];
      mask.set(i, j, inside);
    }
  }
  return mask;
}

}  // namespace sphdiff::geom
