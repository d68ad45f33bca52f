#pragma once

// Spherical geometry-aware training: random-rotation data augmentation, the
// symmetrised stop-gradient cosine loss between a control latent and its
// rotated view, the epsilon-prediction diffusion loss, and one SGD step over a
// toy control pipeline (hint block -> control encoder -> denoiser).

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sphdiff/conv.hpp"
#include "sphdiff/ddab.hpp"
#include "sphdiff/drse.hpp"
#include "sphdiff/sga_gen.hpp"
#include "sphdiff/sphere_geom.hpp"

namespace sphdiff::train {

using geom::RotationAngles;
using nn::Activation;
using nn::Conv2d;
using nn::NamedParams;

struct RotationBounds {
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
};

// yaw ~ U[0, yaw), pitch ~ U[-pitch, pitch], roll ~ U[-roll, roll].
RotationAngles sample_rotation(const RotationBounds& bounds, std::uint64_t seed);

drse::SegmentationMap rotate_segmentation(const drse::SegmentationMap& seg,
                                          const RotationAngles& angles);

struct ReprojectedPair {
  geom::EquirectImage image;
  drse::SegmentationMap seg;
  RotationAngles angles;
};

// Rotates a panorama and its class map by one random rotation.
ReprojectedPair spherical_reprojection(const geom::EquirectImage& image,
                                       const drse::SegmentationMap& seg,
                                       const RotationBounds& bounds, std::uint64_t seed);

// D(p, z) = -(p / |p|) . (z / |z|)
double neg_cosine(std::span<const double> p, std::span<const double> z);
// dD/dp
std::vector<double> neg_cosine_grad(std::span<const double> p, std::span<const double> z);

struct ControlEncoderConfig {
  int in_channels = 4;
  int hidden = 8;
  int out_channels = 4;
  int kernel = 3;
  Activation activation = Activation::kSiLU;
  Activation head_activation = Activation::kSiLU;
};

// Control branch F_c (two convolutions) and prediction head h, a two-layer
// perceptron on per-pixel channel vectors with hidden width = channel count.
class ControlEncoder {
 public:
  ControlEncoder() = default;
  explicit ControlEncoder(const ControlEncoderConfig& config);
  static ControlEncoder initialized(const ControlEncoderConfig& config, Rng& rng);

  const ControlEncoderConfig& config() const { return config_; }
  Conv2d& conv(int index) { return convs_.at(index); }
  const Conv2d& conv(int index) const { return convs_.at(index); }
  Conv2d& head(int index) { return head_.at(index); }
  const Conv2d& head(int index) const { return head_.at(index); }
  // Head weights set to identity with zero bias; with an identity head
  // activation h becomes the identity map.
  void set_identity_head();

  Tensor features(const Tensor& control) const;
  Tensor features_backward(const Tensor& control, const Tensor& grad_out, ControlEncoder& grad) const;
  Tensor predict(const Tensor& features) const;
  Tensor predict_backward(const Tensor& features, const Tensor& grad_out, ControlEncoder& grad) const;

  ControlEncoder zeros_like() const;
  std::vector<NamedParams> parameters();

 private:
  ControlEncoderConfig config_;
  std::array<Conv2d, 2> convs_;
  std::array<Conv2d, 2> head_;
};

// inverse: the rotated branch is mapped back with R^-1 before comparison.
// literal: it is rotated again with R, as the loss is sometimes written.
enum class AlignMode { kInverse, kLiteral };
AlignMode parse_align_mode(const std::string& name);
std::string to_string(AlignMode mode);

// Stop-gradient targets. When supplied to simsiam_loss they replace the
// branch features inside stop(), which is how a finite-difference oracle
// reproduces the stop-gradient convention.
struct SiamTargets {
  Tensor z1;
  Tensor z2;
};

struct SiamResult {
  double loss = 0.0;
  RotationAngles angles;
  SiamTargets targets;  // z1, z2 at the evaluated parameters
  ControlEncoder grad;
};

SiamResult simsiam_loss(const ControlEncoder& encoder, const Tensor& control,
                        const RotationAngles& angles, AlignMode mode,
                        const SiamTargets* frozen = nullptr);
SiamResult simsiam_loss(const ControlEncoder& encoder, const Tensor& control,
                        const RotationBounds& bounds, std::uint64_t seed, AlignMode mode);

struct DenoiserConfig {
  int latent_channels = 4;
  int cond_channels = 4;
  int hidden = 16;
  int kernel = 3;
  Activation activation = Activation::kSiLU;
};

// Two-convolution epsilon predictor over [z_t, condition, time features].
class ToyDenoiser {
 public:
  static constexpr int kTimeChannels = 2;

  ToyDenoiser() = default;
  explicit ToyDenoiser(const DenoiserConfig& config);
  static ToyDenoiser initialized(const DenoiserConfig& config, Rng& rng);

  const DenoiserConfig& config() const { return config_; }
  Conv2d& conv(int index) { return convs_.at(index); }
  const Conv2d& conv(int index) const { return convs_.at(index); }

  Tensor predict(const Tensor& z_t, int t, int steps, const Tensor& cond) const;
  // Adds parameter gradients into `grad`; returns dL/dcond.
  Tensor backward(const Tensor& z_t, int t, int steps, const Tensor& cond, const Tensor& grad_out,
                  ToyDenoiser& grad) const;

  ToyDenoiser zeros_like() const;
  std::vector<NamedParams> parameters();

 private:
  Tensor assemble_input(const Tensor& z_t, int t, int steps, const Tensor& cond) const;

  DenoiserConfig config_;
  std::array<Conv2d, 2> convs_;
};

struct EpsLossResult {
  double loss = 0.0;
  ToyDenoiser grad;
  Tensor grad_cond;
};

// mean((eps - eps_hat(sqrt(ab_t) z0 + sqrt(1 - ab_t) eps, t, cond))^2)
EpsLossResult diffusion_eps_loss(const ToyDenoiser& denoiser, const Tensor& z0, int t,
                                 const Tensor& cond, const Tensor& noise,
                                 const gen::NoiseSchedule& schedule);

struct LossBreakdown {
  double control = 0.0;  // L_c
  double siam = 0.0;     // L_siam
  double lambda = 0.0;
  double total = 0.0;    // L_all
};

LossBreakdown total_loss(double control, double siam, double lambda);

// Hint block, control encoder and denoiser trained together.
struct ToyModel {
  ddab::HintBlock hint;
  ControlEncoder encoder;
  ToyDenoiser denoiser;

  ToyModel zeros_like() const;
  std::vector<NamedParams> parameters();
  // noise prediction for a latent conditioned on a per-pixel embedding
  Tensor predict_eps(const Tensor& z_t, int t, int steps, const Tensor& embedding) const;
};

struct ToyModelConfig {
  ddab::HintBlockConfig hint;
  ControlEncoderConfig encoder;
  DenoiserConfig denoiser;
};

ToyModel make_toy_model(const ToyModelConfig& config, std::uint64_t seed);

// Adapts a ToyModel to the sampler; guidance is the per-pixel embedding.
class ToyModelDenoiser : public gen::Denoiser {
 public:
  explicit ToyModelDenoiser(const ToyModel& model) : model_(model) {}
  Tensor predict_eps(const Tensor& z_t, int t, const gen::NoiseSchedule& schedule,
                     const Tensor* guidance) const override;

 private:
  const ToyModel& model_;
};

struct TrainSample {
  Tensor latent;     // z0, C_z x h x w
  Tensor embedding;  // E_pixel, C_E x h x w
};

struct TrainConfig {
  double learning_rate = 1e-2;
  double momentum = 0.0;
  double lambda = 0.1;
  RotationBounds contrastive_bounds{360.0, 3.0, 3.0};
  AlignMode align = AlignMode::kInverse;
  bool use_siam = true;
};

struct TrainState {
  ToyModel model;
  std::vector<std::vector<double>> velocity;
  long step = 0;
};

TrainState make_train_state(ToyModel model);

// p <- p - lr * v with v <- momentum * v + g, over matching parameter blocks.
void sgd_update(std::span<const NamedParams> params, std::span<const NamedParams> grads,
                std::vector<std::vector<double>>& velocity, double learning_rate, double momentum);

struct StepResult {
  LossBreakdown losses;
  ToyModel grad;
};

// Loss and gradient of L_all averaged over the batch, without updating.
StepResult evaluate_batch(const ToyModel& model, std::span<const TrainSample> batch,
                          const gen::NoiseSchedule& schedule, const TrainConfig& config,
                          std::uint64_t seed);

// One SGD step. Throws NumericError (state untouched) on a non-finite loss.
LossBreakdown train_step(TrainState& state, std::span<const TrainSample> batch,
                         const gen::NoiseSchedule& schedule, const TrainConfig& config,
                         std::uint64_t seed);

}  // namespace sphdiff::train
