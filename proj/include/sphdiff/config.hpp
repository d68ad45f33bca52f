#pragma once

// Experiment configuration, read from JSON. Missing keys keep their defaults;
// unknown keys and out-of-range values raise ConfigError.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>

#include "sphdiff/conv.hpp"
#include "sphdiff/sga_gen.hpp"
#include "sphdiff/sga_train.hpp"

namespace sphdiff::cfg {

struct ExperimentConfig {
  int height = 32;
  int width = 64;
  int latent_channels = 4;  // C_z
  int embedding_dim = 16;   // C_E
  int num_classes = 8;      // K_cls, Unknown included (last id)

  int steps = 50;  // N
  int k_rot = 4;
  bool snap = true;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  gen::SamplerMode sampler = gen::SamplerMode::kDeterministic;

  double lambda = 0.1;
  double k_d = 0.1;
  train::RotationBounds contrastive_bounds{360.0, 3.0, 3.0};
  train::RotationBounds reprojection_bounds{360.0, 10.0, 10.0};
  double fov_min = 30.0;
  double fov_max = 120.0;
  double aspect = 2.0;
  train::AlignMode align = train::AlignMode::kInverse;
  std::uint64_t seed = 0;

  // synthetic corpus
  int corpus_size = 16;
  int wavenumbers = 3;

  // toy model
  std::array<int, 4> hint_widths{16, 16, 32, 32};
  int encoder_hidden = 8;
  int denoiser_hidden = 16;
  nn::Activation activation = nn::Activation::kSiLU;

  // optimisation
  int train_steps = 100;
  int batch_size = 4;
  double learning_rate = 1e-2;
  double momentum = 0.0;
  bool use_siam = true;
};

// Throws ConfigError describing the first violated constraint.
void validate(const ExperimentConfig& config);

ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical JSON with every field; parse_config(to_json(c)) == c.
std::string to_json(const ExperimentConfig& config);

train::ToyModelConfig model_config(const ExperimentConfig& config);
train::TrainConfig train_config(const ExperimentConfig& config);
gen::NoiseSchedule noise_schedule(const ExperimentConfig& config);

}  // namespace sphdiff::cfg
