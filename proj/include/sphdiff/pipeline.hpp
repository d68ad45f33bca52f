#pragma once

// End-to-end experiment plumbing shared by the command-line tool and the
// tests: corpus generation, dataset directories, training-sample assembly,
// the training loop and sampling.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

#include "sphdiff/config.hpp"
#include "sphdiff/drse.hpp"
#include "sphdiff/io.hpp"
#include "sphdiff/sga_gen.hpp"
#include "sphdiff/sga_train.hpp"
#include "sphdiff/sphere_geom.hpp"

namespace sphdiff::pipeline {

struct CorpusItem {
  geom::EquirectImage panorama;
  drse::SegmentationMap seg;
};

struct Dataset {
  std::vector<CorpusItem> items;
  drse::LabelEmbeddingTable table;
};

// Panoramas with C_z channels and class maps on the configured grid.
Dataset synth_dataset(const cfg::ExperimentConfig& config);

// Directory layout: manifest.json, table.sdet, and per item
// panorama_NNNN.sdtf / segmap_NNNN.sdtf. Manifest entries may carry the
// rotation applied by `augment`.
void save_dataset(const std::filesystem::path& dir, const Dataset& dataset,
                  const std::vector<geom::RotationAngles>* angles = nullptr);
Dataset load_dataset(const std::filesystem::path& dir);

// Random yaw, pitch uniform in sin(pitch), no roll.
geom::NfovSpec random_nfov(const cfg::ExperimentConfig& config, Rng& rng);

// Reprojection, NFOV visibility, Unknown fill, downsampling to the configured
// grid and the per-pixel embedding.
train::TrainSample make_train_sample(const CorpusItem& item, const drse::LabelEmbeddingTable& table,
                                     const cfg::ExperimentConfig& config, std::uint64_t seed);

// Embedding of a full class map at the configured grid, used as guidance.
Tensor guidance_embedding(const drse::SegmentationMap& seg, const drse::LabelEmbeddingTable& table,
                          const cfg::ExperimentConfig& config);

train::ToyModel make_model(const cfg::ExperimentConfig& config);

struct LogRow {
  long step = 0;
  train::LossBreakdown losses;
};

// config.train_steps SGD steps on batches drawn from the dataset.
train::TrainState train_toy(const cfg::ExperimentConfig& config, const Dataset& dataset,
                            const std::function<void(const LogRow&)>& on_step = {});

io::Checkpoint checkpoint_of(const cfg::ExperimentConfig& config, train::ToyModel& model);
// Rebuilds the model described by the checkpoint's embedded config.
train::ToyModel model_from_checkpoint(const io::Checkpoint& checkpoint, cfg::ExperimentConfig* config);

gen::SgaSchedule sga_schedule(const cfg::ExperimentConfig& config, bool enabled);

Tensor generate(const gen::Denoiser& denoiser, const cfg::ExperimentConfig& config, bool use_sga,
                std::uint64_t seed, const Tensor* guidance, gen::SampleTrace* trace = nullptr);

}  // namespace sphdiff::pipeline
