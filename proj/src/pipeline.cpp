#include "sphdiff/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "json.hpp"
#include "sphdiff/error.hpp"
#include "sphdiff/rng.hpp"
#include "sphdiff/synth.hpp"

namespace sphdiff::pipeline {
namespace {

using json = nlohmann::json;

// Seed streams derived from the experiment seed.
enum Stream : std::uint64_t {
  kCorpusStream = 1,
  kTableStream = 2,
  kModelStream = 3,
  kBatchStream = 4,
  kSampleStream = 5,
  kStepStream = 6,
};

std::string item_name(const char* prefix, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04zu.sdtf", prefix, index);
  return buf;
}

}  // namespace

Dataset synth_dataset(const cfg::ExperimentConfig& config) {
  const geom::ErpGrid grid(config.height, config.width);
  Dataset d{{}, synth::synth_embedding_table(config.num_classes, config.embedding_dim,
                                             derive_seed(config.seed, kTableStream))};
  const std::uint64_t base = derive_seed(config.seed, kCorpusStream);
  for (int k = 0; k < config.corpus_size; ++k) {
    const std::uint64_t s = derive_seed(base, static_cast<std::uint64_t>(k));
    d.items.push_back({synth::synth_panorama(grid, config.latent_channels, config.wavenumbers,
                                             derive_seed(s, 0)),
                       synth::synth_segmap(grid, config.num_classes, derive_seed(s, 1))});
  }
  return d;
}

void save_dataset(const std::filesystem::path& dir, const Dataset& dataset,
                  const std::vector<geom::RotationAngles>* angles) {
  require(!angles || angles->size() == dataset.items.size(), "one rotation per dataset item");
  std::filesystem::create_directories(dir);
  json manifest = {{"version", 1},
                   {"embedding_table", "table.sdet"},
                   {"num_classes", dataset.table.num_classes()},
                   {"unknown_id", dataset.table.unknown_index()},
                   {"items", json::array()}};
  io::save_embedding_table(dir / "table.sdet", dataset.table);
  for (std::size_t k = 0; k < dataset.items.size(); ++k) {
    const auto& item = dataset.items[k];
    require(item.seg.num_classes() == dataset.table.num_classes(),
            "class map and embedding table disagree on K_cls");
    json entry = {{"panorama", item_name("panorama", k)}, {"segmap", item_name("segmap", k)}};
    if (angles) {
      const auto& a = (*angles)[k];
      entry["rotation"] = json::array({a.yaw, a.pitch, a.roll});
    }
    io::save_tensor(dir / entry["panorama"].get<std::string>(), item.panorama.tensor());
    io::save_segmentation(dir / entry["segmap"].get<std::string>(), item.seg);
    manifest["items"].push_back(std::move(entry));
  }
  io::write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");
}

Dataset load_dataset(const std::filesystem::path& dir) {
  json manifest;
  try {
    manifest = json::parse(io::read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
  try {
    if (manifest.at("version").get<int>() != 1) throw FormatError("unsupported manifest version");
    Dataset d{{}, io::load_embedding_table(dir / manifest.at("embedding_table").get<std::string>())};
    const int classes = manifest.at("num_classes").get<int>();
    const int unknown = manifest.at("unknown_id").get<int>();
    if (classes != d.table.num_classes() || unknown != d.table.unknown_index())
      throw FormatError("manifest class count or Unknown id disagrees with the embedding table");
    for (const auto& entry : manifest.at("items")) {
      Tensor pano = io::load_tensor(dir / entry.at("panorama").get<std::string>());
      auto seg = io::load_segmentation(dir / entry.at("segmap").get<std::string>(), classes, unknown);
      try {
        d.items.push_back({geom::EquirectImage(std::move(pano)), std::move(seg)});
      } catch (const PreconditionError& e) {
        throw FormatError(std::string("dataset item is not a valid panorama: ") + e.what());
      }
    }
    return d;
  } catch (const json::exception& e) {
    throw FormatError((dir / "manifest.json").string() + ": " + e.what());
  }
}

geom::NfovSpec random_nfov(const cfg::ExperimentConfig& config, Rng& rng) {
  geom::NfovSpec spec;
  spec.fov_h_deg = rng.uniform(config.fov_min, config.fov_max);
  spec.aspect = config.aspect;
  spec.viewpoint.yaw = rng.uniform(0.0, 360.0);
  spec.viewpoint.pitch = std::asin(rng.uniform(-1.0, 1.0)) * 180.0 / std::numbers::pi;
  return spec;
}

train::TrainSample make_train_sample(const CorpusItem& item, const drse::LabelEmbeddingTable& table,
                                     const cfg::ExperimentConfig& config, std::uint64_t seed) {
  const auto pair = train::spherical_reprojection(item.panorama, item.seg, config.reprojection_bounds,
                                                  derive_seed(seed, 0));
  Rng rng(derive_seed(seed, 1));
  const auto visible = geom::nfov_mask(pair.image.grid(), random_nfov(config, rng));
  const auto filled = drse::fill_unknown(pair.seg, visible);
  const auto small = drse::downsample_seg(filled, config.height, config.width);
  Tensor latent = pair.image.tensor();
  require(latent.height() == config.height && latent.width() == config.width,
          "panorama grid must match the configured latent grid");
  return {std::move(latent), drse::pixel_embedding(drse::masks_from_seg(small), table)};
}

Tensor guidance_embedding(const drse::SegmentationMap& seg, const drse::LabelEmbeddingTable& table,
                          const cfg::ExperimentConfig& config) {
  const auto small = drse::downsample_seg(seg, config.height, config.width);
  return drse::pixel_embedding(drse::masks_from_seg(small), table);
}

train::ToyModel make_model(const cfg::ExperimentConfig& config) {
  return train::make_toy_model(cfg::model_config(config), derive_seed(config.seed, kModelStream));
}

train::TrainState train_toy(const cfg::ExperimentConfig& config, const Dataset& dataset,
                            const std::function<void(const LogRow&)>& on_step) {
  require(!dataset.items.empty(), "training needs a non-empty dataset");
  require(dataset.table.dim() == config.embedding_dim,
          "embedding table dimension does not match embedding_dim");
  train::TrainState state = train::make_train_state(make_model(config));
  const auto schedule = cfg::noise_schedule(config);
  const auto tc = cfg::train_config(config);
  Rng batch_rng(derive_seed(config.seed, kBatchStream));
  const std::uint64_t sample_base = derive_seed(config.seed, kSampleStream);
  const std::uint64_t step_base = derive_seed(config.seed, kStepStream);
  const int last = static_cast<int>(dataset.items.size()) - 1;
  for (int step = 0; step < config.train_steps; ++step) {
    std::vector<train::TrainSample> batch;
    for (int b = 0; b < config.batch_size; ++b) {
      const auto& item = dataset.items[batch_rng.uniform_int(0, last)];
      batch.push_back(make_train_sample(
          item, dataset.table, config,
          derive_seed(sample_base, static_cast<std::uint64_t>(step) * config.batch_size + b)));
    }
    const auto losses = train::train_step(state, batch, schedule, tc,
                                          derive_seed(step_base, static_cast<std::uint64_t>(step)));
    if (on_step) on_step({state.step, losses});
  }
  return state;
}

io::Checkpoint checkpoint_of(const cfg::ExperimentConfig& config, train::ToyModel& model) {
  return io::make_checkpoint(cfg::to_json(config), model.parameters());
}

train::ToyModel model_from_checkpoint(const io::Checkpoint& checkpoint, cfg::ExperimentConfig* config) {
  cfg::ExperimentConfig c;
  try {
    c = cfg::parse_config(checkpoint.config_json);
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint carries an invalid config: ") + e.what());
  }
  train::ToyModel model = make_model(c);
  io::restore_checkpoint(checkpoint, model.parameters());
  if (config) *config = c;
  return model;
}

gen::SgaSchedule sga_schedule(const cfg::ExperimentConfig& config, bool enabled) {
  return gen::make_sga_schedule(config.steps, enabled ? config.k_rot : 0, config.width, config.snap);
}

Tensor generate(const gen::Denoiser& denoiser, const cfg::ExperimentConfig& config, bool use_sga,
                std::uint64_t seed, const Tensor* guidance, gen::SampleTrace* trace) {
  gen::SamplerConfig sc;
  sc.mode = config.sampler;
  sc.seed = seed;
  return gen::sga_sample(denoiser, cfg::noise_schedule(config), sga_schedule(config, use_sga), sc,
                         Shape{config.latent_channels, config.height, config.width}, guidance, trace);
}

}  // namespace sphdiff::pipeline
