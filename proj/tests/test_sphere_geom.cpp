#include <cmath>
#include <numbers>

#include "doctest.h"
#include "sphdiff/error.hpp"
#include "sphdiff/rng.hpp"
#include "sphdiff/sphere_geom.hpp"

using namespace sphdiff;
using namespace sphdiff::geom;

namespace {

Tensor random_image(int c, int h, Rng& rng) {
  Tensor t(c, h, 2 * h);
  for (double& v : t.values()) v = rng.uniform(-1, 1);
  return t;
}

RotationAngles random_angles(Rng& rng) {
  return {rng.uniform(-720, 720), rng.uniform(-720, 720), rng.uniform(-720, 720)};
}

}  // namespace

TEST_CASE("grid must be 2:1 and non-empty") {
  CHECK_NOTHROW(ErpGrid(1, 2));
  CHECK_THROWS_AS(ErpGrid(4, 4), PreconditionError);
  CHECK_THROWS_AS(ErpGrid(0, 0), PreconditionError);
}

TEST_CASE("pixel_to_direction examples") {
  const auto d = pixel_to_direction(ErpGrid(2, 4), 0, 0);
  CHECK(d.x() == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(d.y() == doctest::Approx(-0.5).epsilon(1e-12));
  CHECK(d.z() == doctest::Approx(std::sqrt(2.0) / 2).epsilon(1e-12));

  // Values from an independent scalar evaluation of lat 0.5 deg, lon -0.5 deg.
  const auto e = pixel_to_direction(ErpGrid(180, 360), 89, 179);
  CHECK(std::abs(e.x() - 0.9999238475781956) < 1e-12);
  CHECK(std::abs(e.y() - -0.008726203218641756) < 1e-12);
  CHECK(std::abs(e.z() - 0.008726535498373935) < 1e-12);

  CHECK_THROWS_AS(pixel_to_direction(ErpGrid(2, 4), 2, 0), PreconditionError);
  CHECK_THROWS_AS(pixel_to_direction(ErpGrid(2, 4), 0, -1), PreconditionError);
}

TEST_CASE("directions are unit length and round-trip to their pixel") {
  const ErpGrid grid(8, 16);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 16; ++j) {
      const auto d = pixel_to_direction(grid, i, j);
      CHECK(std::abs(std::hypot(d.x(), d.y(), d.z()) - 1.0) < 1e-12);
      const auto p = direction_to_pixel(grid, d);
      CHECK(p.nearest_row == i);
      CHECK(p.nearest_col == j);
      CHECK(std::abs(p.row - i) < 1e-9);
      CHECK(std::abs(p.col - j) < 1e-9);
    }
}

TEST_CASE("direction_to_pixel at poles and inverse example") {
  const ErpGrid grid(2, 4);
  const auto north = direction_to_pixel(grid, SphericalDirection::from_vector({0, 0, 1}));
  CHECK(north.row == doctest::Approx(-0.5));
  CHECK(north.nearest_row == 0);
  const auto south = direction_to_pixel(grid, SphericalDirection::from_vector({0, 0, -1}));
  CHECK(south.nearest_row == 1);
  const auto p = direction_to_pixel(grid, SphericalDirection::from_vector({-0.5, -0.5, std::sqrt(2.0) / 2}));
  CHECK(p.nearest_row == 0);
  CHECK(p.nearest_col == 0);
  CHECK_THROWS_AS(SphericalDirection::from_vector({0, 0, 0}), PreconditionError);
}

TEST_CASE("longitude wraps at the seam") {
  const ErpGrid grid(4, 8);
  // Exactly at longitude 180 (the seam): continuous column W - 0.5 rounds to W, wrapping to 0.
  const auto p = direction_to_pixel(grid, SphericalDirection::from_vector({-1, 1e-17, 0}));
  CHECK(p.nearest_col == 0);
}

TEST_CASE("rotation matrix examples") {
  const RotationMatrix id = rotation_matrix({0, 0, 0});
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) CHECK(id(r, c) == (r == c ? 1.0 : 0.0));
  const Vec3 v = rotation_matrix({90, 0, 0}).apply(Vec3{1, 0, 0});
  CHECK(v[0] == 0.0);
  CHECK(v[1] == 1.0);
  CHECK(v[2] == 0.0);
}

TEST_CASE("yaw adds to longitude") {
  const ErpGrid grid(16, 32);
  const auto d = pixel_to_direction(grid, 5, 3);
  const auto before = direction_to_pixel(grid, d);
  const auto after = direction_to_pixel(grid, rotation_matrix({45, 0, 0}).apply(d));
  CHECK(after.col - before.col == doctest::Approx(45.0 / 360.0 * 32).epsilon(1e-12));
  CHECK(after.row == doctest::Approx(before.row));
}

TEST_CASE("orthonormality over random triples") {
  Rng rng(11);
  for (int k = 0; k < 1000; ++k) {
    const RotationMatrix r = rotation_matrix(random_angles(rng));
    // Independent R R^T evaluation.
    double worst = 0.0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        double s = 0.0;
        for (int c = 0; c < 3; ++c) s += r(a, c) * r(b, c);
        worst = std::max(worst, std::abs(s - (a == b)));
      }
    REQUIRE(worst < 1e-12);
    REQUIRE(std::abs(r.determinant() - 1.0) < 1e-12);
    REQUIRE(r.orthonormality_error() < 1e-12);
  }
}

TEST_CASE("composition of rotations and coordinate-level inverse") {
  Rng rng(12);
  for (int k = 0; k < 100; ++k) {
    // Yaw-only rotations compose additively.
    const double a = rng.uniform(-360, 360), b = rng.uniform(-360, 360);
    const RotationMatrix ab = rotation_matrix({a, 0, 0}) * rotation_matrix({b, 0, 0});
    const RotationMatrix sum = rotation_matrix({a + b, 0, 0});
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) CHECK(std::abs(ab(r, c) - sum(r, c)) < 1e-12);
    // R^-1 R v = v
    const RotationMatrix r = rotation_matrix(random_angles(rng));
    const Vec3 v = SphericalDirection::from_vector({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)}).vector();
    const Vec3 back = r.transpose().apply(r.apply(v));
    for (int c = 0; c < 3; ++c) CHECK(std::abs(back[c] - v[c]) < 1e-12);
  }
}

TEST_CASE("canonical angles") {
  const RotationAngles c = RotationAngles{-30, 190, -181}.canonical();
  CHECK(c.yaw == doctest::Approx(330));
  CHECK(c.pitch == doctest::Approx(-170));
  CHECK(c.roll == doctest::Approx(179));
  CHECK(RotationAngles{360, 180, 0}.canonical().yaw == 0.0);
  CHECK(RotationAngles{360, 180, 0}.canonical().pitch == -180.0);
}

TEST_CASE("rotate_image identity and full turn are bit-exact") {
  Rng rng(13);
  const EquirectImage img(random_image(3, 8, rng));
  CHECK(rotate_image(img, {0, 0, 0}) == img);
  CHECK(rotate_image(img, {360, 0, 0}) == img);
  CHECK(rotate_image(img, {0, 360, -360}) == img);
}

TEST_CASE("yaw_shift examples") {
  Tensor t(1, 2, 4);
  for (int j = 0; j < 4; ++j) t(0, 0, j) = t(0, 1, j) = j;  // [a,b,c,d] = [0,1,2,3]
  const Tensor s = yaw_shift(t, 1);
  CHECK(s(0, 0, 0) == 3);
  CHECK(s(0, 0, 1) == 0);
  CHECK(s(0, 0, 2) == 1);
  CHECK(s(0, 0, 3) == 2);
  CHECK(yaw_shift(t, 0) == t);
  CHECK(yaw_shift(t, 4) == t);
  CHECK(yaw_shift(t, -1) == yaw_shift(t, 3));
}

TEST_CASE("yaw by whole columns equals circular shift, against a brute-force pull-back") {
  Rng rng(14);
  for (int h : {8, 32}) {
    const EquirectImage img(random_image(2, h, rng));
    const int w = 2 * h;
    for (int k = -w; k <= 2 * w; ++k) {
      const EquirectImage rotated = rotate_image(img, {k * 360.0 / w, 0, 0});
      REQUIRE(rotated == yaw_shift(img, k));
      // brute force: output column j pulls from column j - k
      for (int j = 0; j < w; j += 7) {
        const int src = ((j - k) % w + w) % w;
        REQUIRE(rotated(1, h / 2, j) == img(1, h / 2, src));
      }
    }
  }
}

TEST_CASE("composed whole-column yaws are bit-exact") {
  Rng rng(15);
  const EquirectImage img(random_image(1, 16, rng));
  const double step = 360.0 / 32;
  for (int s : {-5, 0, 3, 17}) {
    for (int t : {1, 8, 40}) {
      CHECK(rotate_image(rotate_image(img, {s * step, 0, 0}), {t * step, 0, 0}) ==
            rotate_image(img, {(s + t) * step, 0, 0}));
    }
  }
}

TEST_CASE("rotation preserves the value multiset for permutation maps and uses only input values") {
  Rng rng(16);
  const EquirectImage img(random_image(1, 8, rng));
  const auto rotated = rotate_image(img, {37, 12, -20});
  std::vector<double> in(img.tensor().values().begin(), img.tensor().values().end());
  std::sort(in.begin(), in.end());
  for (double v : rotated.tensor().values()) CHECK(std::binary_search(in.begin(), in.end(), v));
}

TEST_CASE("scatter_pixels is the adjoint of gather_pixels") {
  Rng rng(17);
  const ErpGrid grid(6, 12);
  const auto map = rotation_source_map(grid, RotationAngles{50, 20, 10});
  const Tensor x = random_image(2, 6, rng);
  const Tensor y = random_image(2, 6, rng);
  CHECK(dot(gather_pixels(x, map).values(), y.values()) ==
        doctest::Approx(dot(x.values(), scatter_pixels(y, map).values())).epsilon(1e-13));
}

TEST_CASE("equirect image rejects bad data") {
  CHECK_THROWS_AS(EquirectImage(Tensor(1, 4, 4)), PreconditionError);
  Tensor t(1, 2, 4);
  t(0, 0, 0) = std::nan("");
  CHECK_THROWS_AS(EquirectImage{t}, PreconditionError);
}

TEST_CASE("nfov mask examples") {
  const ErpGrid grid(32, 64);
  NfovSpec spec;
  spec.fov_h_deg = 120;
  const BinaryMask mask = nfov_mask(grid, spec);
  // direction (1, 0, 0) is longitude 0, latitude 0: between rows 15/16, columns 31/32
  CHECK(mask(15, 31) == 1);
  CHECK(mask(16, 32) == 1);
  // (-1, 0, 0) lies on the seam
  CHECK(mask(16, 0) == 0);
  CHECK(mask(15, 63) == 0);
  spec.fov_h_deg = 180;
  CHECK_THROWS_AS(nfov_mask(grid, spec), PreconditionError);
  spec.fov_h_deg = 0;
  CHECK_THROWS_AS(nfov_mask(grid, spec), PreconditionError);
}

TEST_CASE("nfov mask follows the viewpoint yaw") {
  const ErpGrid grid(16, 32);
  NfovSpec spec;
  spec.fov_h_deg = 60;
  const BinaryMask base = nfov_mask(grid, spec);
  spec.viewpoint.yaw = 90;  // 8 columns
  const BinaryMask turned = nfov_mask(grid, spec);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 32; ++j) CHECK(turned(i, (j + 8) % 32) == base(i, j));
}

TEST_CASE("nfov coverage matches a Monte-Carlo frustum estimate") {
  // Pixel-area-weighted mask coverage vs 1e6 uniform directions tested
  // against the same frustum in closed form.
  const ErpGrid grid(256, 512);
  NfovSpec spec;
  spec.fov_h_deg = 90;
  spec.aspect = 2;
  spec.viewpoint = {30, 20, 0};
  const BinaryMask mask = nfov_mask(grid, spec);
  double covered = 0.0, total = 0.0;
  for (int i = 0; i < grid.height(); ++i) {
    const double lat = (90.0 - (i + 0.5) / grid.height() * 180.0) * std::numbers::pi / 180;
    const double area = std::cos(lat);
    for (int j = 0; j < grid.width(); ++j) {
      covered += area * mask(i, j);
      total += area;
    }
  }
  const double fraction = covered / total;

  Rng rng(18);
  const double tan_h = std::tan(std::numbers::pi / 4), tan_v = tan_h / 2;
  int hits = 0;
  const int n = 1000000;
  for (int k = 0; k < n; ++k) {
    // camera-frame direction is uniform on the sphere too
    const double z = rng.uniform(-1, 1), phi = rng.uniform(0, 2 * std::numbers::pi);
    const double r = std::sqrt(1 - z * z);
    const double x = r * std::cos(phi), y = r * std::sin(phi);
    hits += x > 0 && std::abs(y) <= tan_h * x && std::abs(z) <= tan_v * x;
  }
  const double mc = static_cast<double>(hits) / n;
  CHECK(std::abs(fraction - mc) / mc < 0.01);
}
