#pragma once

// Rotation-scheduled diffusion sampling. At K uniformly spaced steps the latent
// and its guidance are rotated in yaw by 360/K degrees so that the panorama's
// left/right boundary is denoised as interior content during part of the run.

#include <cstdint>
#include <optional>
#include <vector>

#include "sphdiff/tensor.hpp"

namespace sphdiff::gen {

// Linear-beta schedule, steps indexed 1..N; alpha_bar(0) = 1.
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> betas);

  int steps() const { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(t - 1); }
  double alpha(int t) const { return 1.0 - beta(t); }
  double alpha_bar(int t) const { return alpha_bar_.at(t); }

 private:
  std::vector<double> betas_;
  std::vector<double> alpha_bar_;
};

NoiseSchedule build_noise_schedule(int steps, double beta_min = 1e-4, double beta_max = 0.02);

// S = { round(m * N / (K + 1)) : m = 1..K }, deduplicated, clamped to [1, N].
std::vector<int> select_rotation_steps(int steps, int k_rot);
// 360 / K, optionally snapped to the nearest multiple of 360 / width.
double rotation_angle(int k_rot, int width, bool snap);

struct SgaSchedule {
  int k_rot = 0;
  std::vector<int> steps;
  double angle_deg = 0.0;
  bool snap = true;
};

SgaSchedule make_sga_schedule(int steps, int k_rot, int width, bool snap);

// Noise predictor used by the sampler.
class Denoiser {
 public:
  virtual ~Denoiser() = default;
  virtual Tensor predict_eps(const Tensor& z_t, int t, const NoiseSchedule& schedule,
                             const Tensor* guidance) const = 0;
};

// Posterior mean of z0 under a per-channel Gaussian prior N(mean, variance).
// Pointwise, so it commutes exactly with any pixel permutation.
class AnalyticGaussianDenoiser : public Denoiser {
 public:
  AnalyticGaussianDenoiser(std::vector<double> channel_mean, double variance);

  Tensor predict_x0(const Tensor& z_t, int t, const NoiseSchedule& schedule) const;
  Tensor predict_eps(const Tensor& z_t, int t, const NoiseSchedule& schedule,
                     const Tensor* guidance) const override;

 private:
  std::vector<double> mean_;
  double variance_;
};

enum class SamplerMode { kDeterministic, kStochastic };

struct SamplerConfig {
  SamplerMode mode = SamplerMode::kDeterministic;
  std::uint64_t seed = 0;
  bool keep_snapshots = false;
};

struct RotationEvent {
  int step = 0;
  double angle_deg = 0.0;
  double cumulative_deg = 0.0;
};

struct SampleTrace {
  std::vector<RotationEvent> events;
  double total_rotation_deg = 0.0;
  double frame_correction_deg = 0.0;
  std::vector<Tensor> snapshots;  // latent after each step, N..1
};

// Reverse diffusion from z_N ~ N(0, I) of shape `latent`. Before the denoising
// step t in sga.steps, the latent and guidance are yaw-rotated by sga.angle_deg.
// The result is rotated back by the accumulated angle modulo 360.
Tensor sga_sample(const Denoiser& denoiser, const NoiseSchedule& schedule, const SgaSchedule& sga,
                  const SamplerConfig& config, const Shape& latent, const Tensor* guidance,
                  SampleTrace* trace = nullptr);

// Yaw rotation of a 2:1 tensor by nearest-neighbour pull-back.
Tensor rotate_yaw(const Tensor& data, double yaw_deg);

struct SeamMetric {
  double seam = 0.0;      // mean |x[.., 0] - x[.., W-1]|
  double interior = 0.0;  // mean |x[.., j+1] - x[.., j]| over j = 0..W-2
  double ratio = 0.0;     // seam / (interior + 1e-12)
};

SeamMetric seam_metric(const Tensor& image);

}  // namespace sphdiff::gen
