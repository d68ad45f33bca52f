#include "sphdiff/sga_gen.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "sphdiff/error.hpp"
#include "sphdiff/rng.hpp"
#include "sphdiff/sphere_geom.hpp"

namespace sphdiff::gen {

NoiseSchedule::NoiseSchedule(std::vector<double> betas) : betas_(std::move(betas)) {
  require(!betas_.empty(), "noise schedule needs at least one step");
  alpha_bar_.reserve(betas_.size() + 1);
  alpha_bar_.push_back(1.0);
  for (double b : betas_) {
    require(b > 0.0 && b < 1.0, "noise variances must lie in (0, 1)");
    alpha_bar_.push_back(alpha_bar_.back() * (1.0 - b));
  }
}

NoiseSchedule build_noise_schedule(int steps, double beta_min, double beta_max) {
  require(steps >= 1, "noise schedule needs N >= 1");
  require(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0,
          "noise schedule needs 0 < beta_min <= beta_max < 1");
  std::vector<double> betas(steps);
  for (int t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
    betas[t] = beta_min + (beta_max - beta_min) * frac;
  }
  return NoiseSchedule(std::move(betas));
}

std::vector<int> select_rotation_steps(int steps, int k_rot) {
  require(steps >= 1, "rotation schedule needs N >= 1");
  require(k_rot >= 0 && k_rot <= steps, "rotation count K must satisfy 0 <= K <= N");
  std::set<int> chosen;
  const double spacing = static_cast<double>(steps) / (k_rot + 1);
  for (int m = 1; m <= k_rot; ++m) {
    const long s = std::lround(m * spacing);
    chosen.insert(static_cast<int>(std::clamp<long>(s, 1, steps)));
  }
  return {chosen.begin(), chosen.end()};
}

double rotation_angle(int k_rot, int width, bool snap) {
  require(k_rot >= 1, "rotation angle needs K >= 1");
  const double angle = 360.0 / k_rot;
  if (!snap) return angle;
  require(width >= 1, "snapping needs a positive grid width");
  const long columns = std::lround(static_cast<double>(width) / k_rot);
  return columns * (360.0 / width);
}

SgaSchedule make_sga_schedule(int steps, int k_rot, int width, bool snap) {
  SgaSchedule s;
  s.k_rot = k_rot;
  s.snap = snap;
  s.steps = select_rotation_steps(steps, k_rot);
  s.angle_deg = k_rot == 0 ? 0.0 : rotation_angle(k_rot, width, snap);
  return s;
}

AnalyticGaussianDenoiser::AnalyticGaussianDenoiser(std::vector<double> channel_mean, double variance)
    : mean_(std::move(channel_mean)), variance_(variance) {
  require(!mean_.empty(), "analytic denoiser needs a mean per channel");
  require(variance > 0.0 && std::isfinite(variance), "analytic denoiser prior variance must be > 0");
}

Tensor AnalyticGaussianDenoiser::predict_x0(const Tensor& z_t, int t, const NoiseSchedule& schedule) const {
  require(t >= 1 && t <= schedule.steps(), "denoiser step t outside [1, N]");
  require(z_t.channels() == static_cast<int>(mean_.size()), "analytic denoiser channel mismatch");
  const double ab = schedule.alpha_bar(t);
  const double sqrt_ab = std::sqrt(ab);
  const double denom = ab * variance_ + (1.0 - ab);
  Tensor out(z_t.shape());
  for (int c = 0; c < z_t.channels(); ++c) {
    const double prior = (1.0 - ab) * mean_[c];
    const auto src = z_t.plane(c);
    auto dst = out.plane(c);
    for (std::size_t p = 0; p < src.size(); ++p)
      dst[p] = (sqrt_ab * variance_ * src[p] + prior) / denom;
  }
  return out;
}

Tensor AnalyticGaussianDenoiser::predict_eps(const Tensor& z_t, int t, const NoiseSchedule& schedule,
                                             const Tensor* /*guidance*/) const {
  const Tensor x0 = predict_x0(z_t, t, schedule);
  const double ab = schedule.alpha_bar(t);
  const double sqrt_ab = std::sqrt(ab);
  const double sqrt_one_minus = std::sqrt(1.0 - ab);
  Tensor eps(z_t.shape());
  for (std::size_t p = 0; p < eps.size(); ++p)
    eps.values()[p] = (z_t.values()[p] - sqrt_ab * x0.values()[p]) / sqrt_one_minus;
  return eps;
}

Tensor rotate_yaw(const Tensor& data, double yaw_deg) {
  const geom::ErpGrid grid(data.height(), data.width());
  return geom::gather_pixels(data, geom::rotation_source_map(grid, {yaw_deg, 0.0, 0.0}));
}

Tensor sga_sample(const Denoiser& denoiser, const NoiseSchedule& schedule, const SgaSchedule& sga,
                  const SamplerConfig& config, const Shape& latent, const Tensor* guidance,
                  SampleTrace* trace) {
  require(latent.size() > 0, "latent shape must be non-empty");
  if (!sga.steps.empty()) {
    // Rotation requires a 2:1 grid.
    geom::ErpGrid check(latent.height, latent.width);
    (void)check;
  }
  if (guidance) {
    require(guidance->height() == latent.height && guidance->width() == latent.width,
            "guidance spatial size must match the latent");
  }
  const int n = schedule.steps();
  const std::set<int> rotate_at(sga.steps.begin(), sga.steps.end());

  Rng init_rng(derive_seed(config.seed, 0));
  Rng step_rng(derive_seed(config.seed, 1));
  Tensor z(latent);
  for (double& v : z.values()) v = init_rng.normal();
  std::optional<Tensor> cond;
  if (guidance) cond = *guidance;

  double cumulative = 0.0;
  for (int t = n; t >= 1; --t) {
    if (rotate_at.contains(t)) {
      z = rotate_yaw(z, sga.angle_deg);
      if (cond) cond = rotate_yaw(*cond, sga.angle_deg);
      cumulative += sga.angle_deg;
      if (trace) trace->events.push_back({t, sga.angle_deg, cumulative});
    }
    const Tensor eps = denoiser.predict_eps(z, t, schedule, cond ? &*cond : nullptr);
    require(eps.shape() == z.shape(), "denoiser output shape does not match latent");
    const double ab = schedule.alpha_bar(t);
    const double ab_prev = schedule.alpha_bar(t - 1);
    const double sqrt_ab = std::sqrt(ab);
    const double sqrt_one_minus = std::sqrt(1.0 - ab);
    Tensor next(z.shape());
    if (config.mode == SamplerMode::kDeterministic) {
      const double a = std::sqrt(ab_prev);
      const double b = std::sqrt(1.0 - ab_prev);
      for (std::size_t p = 0; p < z.size(); ++p) {
        const double e = eps.values()[p];
        const double x0 = (z.values()[p] - sqrt_one_minus * e) / sqrt_ab;
        next.values()[p] = a * x0 + b * e;
      }
    } else {
      const double beta = schedule.beta(t);
      const double coef_x0 = std::sqrt(ab_prev) * beta / (1.0 - ab);
      const double coef_z = std::sqrt(schedule.alpha(t)) * (1.0 - ab_prev) / (1.0 - ab);
      const double sigma = t > 1 ? std::sqrt(beta * (1.0 - ab_prev) / (1.0 - ab)) : 0.0;
      for (std::size_t p = 0; p < z.size(); ++p) {
        const double e = eps.values()[p];
        const double x0 = (z.values()[p] - sqrt_one_minus * e) / sqrt_ab;
        const double noise = t > 1 ? step_rng.normal() : 0.0;
        next.values()[p] = coef_x0 * x0 + coef_z * z.values()[p] + sigma * noise;
      }
    }
    if (!next.all_finite())
      throw NumericError("non-finite latent at denoising step " + std::to_string(t));
    z = std::move(next);
    if (trace && config.keep_snapshots) trace->snapshots.push_back(z);
  }

  const double residual = std::fmod(cumulative, 360.0);
  if (residual != 0.0) z = rotate_yaw(z, -residual);
  if (trace) {
    trace->total_rotation_deg = cumulative;
    trace->frame_correction_deg = residual == 0.0 ? 0.0 : -residual;
  }
  return z;
}

SeamMetric seam_metric(const Tensor& image) {
  const int w = image.width();
  require(w >= 2, "seam metric needs W >= 2");
  require(image.channels() >= 1 && image.height() >= 1, "seam metric needs a non-empty image");
  SeamMetric m;
  double seam = 0.0;
  double interior = 0.0;
  for (int c = 0; c < image.channels(); ++c) {
    for (int i = 0; i < image.height(); ++i) {
      seam += std::abs(image(c, i, 0) - image(c, i, w - 1));
      for (int j = 0; j + 1 < w; ++j) interior += std::abs(image(c, i, j + 1) - image(c, i, j));
    }
  }
  const double rows = static_cast<double>(image.channels()) * image.height();
  m.seam = seam / rows;
  m.interior = interior / (rows * (w - 1));
  m.ratio = m.seam / (m.interior + 1e-12);
  return m;
}

}  // namespace sphdiff::gen
