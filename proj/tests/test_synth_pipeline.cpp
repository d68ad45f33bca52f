#include <cmath>
#include <filesystem>
#include <numbers>

#include "doctest.h"
#include "sphdiff/error.hpp"
#include "sphdiff/pipeline.hpp"
#include "sphdiff/rng.hpp"
#include "sphdiff/synth.hpp"

using namespace sphdiff;
namespace fs = std::filesystem;

namespace {

cfg::ExperimentConfig tiny_config() {
  cfg::ExperimentConfig c;
  c.height = 8;
  c.width = 16;
  c.latent_channels = 2;
  c.embedding_dim = 3;
  c.num_classes = 5;
  c.steps = 10;
  c.corpus_size = 3;
  c.hint_widths = {4, 4, 4, 4};
  c.encoder_hidden = 3;
  c.denoiser_hidden = 4;
  c.train_steps = 3;
  c.batch_size = 2;
  c.seed = 42;
  return c;
}

}  // namespace

TEST_CASE("synthetic panoramas have a seamless wrap") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto pano = synth::synth_panorama(geom::ErpGrid(16, 32), 3, 4, seed);
    CHECK(gen::seam_metric(pano.tensor()).ratio <= 1.0 + 1e-6);
  }
}

TEST_CASE("single-wavenumber panorama matches its closed form") {
  const geom::ErpGrid grid(4, 8);
  const auto pano = synth::synth_panorama(grid, 1, 1, 77);
  // replay the documented draw order
  Rng rng(77);
  const double d = rng.uniform(-0.5, 0.5);
  const double a = rng.uniform(-1.0, 1.0);
  const double b = rng.uniform(-0.5, 0.5);
  const double pi = std::numbers::pi;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 8; ++j) {
      const double lat = pi / 2 - pi * (i + 0.5) / 4;
      const double expected = d + a * (1 + b * std::sin(lat)) * std::cos(2 * pi * (j + 0.5) / 8);
      CHECK(pano(0, i, j) == doctest::Approx(expected).epsilon(1e-14));
    }
  CHECK(synth::synth_panorama(grid, 2, 3, 5) == synth::synth_panorama(grid, 2, 3, 5));
  CHECK_THROWS_AS(synth::synth_panorama(grid, 1, 0, 5), PreconditionError);
}

TEST_CASE("synthetic class maps use known classes only") {
  const geom::ErpGrid grid(16, 32);
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const auto seg = synth::synth_segmap(grid, 6, seed);
    for (int id : seg.ids()) REQUIRE((id >= 0 && id < 5));
    CHECK(seg == synth::synth_segmap(grid, 6, seed));
  }
}

TEST_CASE("painted bands cover their fraction to within one column") {
  const geom::ErpGrid grid(25, 50);
  synth::SegmapLayout layout;
  layout.band_fractions = {0.13, 0.41, 0.27, 0.19};
  layout.band_classes = {0, 1, 2, 3};
  layout.band_offset = 0.3;
  const auto seg = synth::paint_segmap(grid, 5, layout);
  for (int b = 0; b < 4; ++b) {
    int columns = 0;
    for (int j = 0; j < 50; ++j) columns += seg(3, j) == b;
    CHECK(std::abs(columns - layout.band_fractions[b] * 50) <= 1.0);
  }
  layout.band_classes[0] = 4;  // Unknown is not paintable
  CHECK_THROWS_AS(synth::paint_segmap(grid, 5, layout), PreconditionError);
}

TEST_CASE("ceiling and floor rows follow the layout") {
  const geom::ErpGrid grid(10, 20);
  synth::SegmapLayout layout;
  layout.ceiling = 0.2;
  layout.floor = 0.3;
  layout.ceiling_class = 1;
  layout.floor_class = 2;
  layout.band_fractions = {1.0};
  layout.band_classes = {0};
  const auto seg = synth::paint_segmap(grid, 4, layout);
  for (int j = 0; j < 20; ++j) {
    CHECK(seg(0, j) == 1);
    CHECK(seg(1, j) == 1);
    CHECK(seg(2, j) == 0);
    CHECK(seg(6, j) == 0);
    CHECK(seg(7, j) == 2);
    CHECK(seg(9, j) == 2);
  }
}

TEST_CASE("embedding table ends with Unknown") {
  const auto t = synth::synth_embedding_table(4, 6, 1);
  CHECK(t.labels().front() == "a photo of a wall");
  CHECK(t.labels().back() == "a photo of a Unknown");
  CHECK(t.unknown_index() == 3);
}

TEST_CASE("dataset save and load round trip") {
  const fs::path dir = fs::temp_directory_path() / "sphdiff_test_pipeline" / "data";
  fs::remove_all(dir);
  const auto c = tiny_config();
  const auto d = pipeline::synth_dataset(c);
  REQUIRE(d.items.size() == 3);
  std::vector<geom::RotationAngles> angles(3, {10.0, 1.0, -2.0});
  pipeline::save_dataset(dir, d, &angles);
  const auto back = pipeline::load_dataset(dir);
  REQUIRE(back.items.size() == 3);
  CHECK(back.table.labels() == d.table.labels());
  for (std::size_t k = 0; k < 3; ++k) {
    CHECK(back.items[k].seg == d.items[k].seg);
    CHECK(max_abs_diff(back.items[k].panorama.tensor(), d.items[k].panorama.tensor()) < 1e-6);
  }
  io::write_file_atomic(dir / "manifest.json", "{\"version\": 2}");
  CHECK_THROWS_AS(pipeline::load_dataset(dir), FormatError);
  io::write_file_atomic(dir / "manifest.json", "not json");
  CHECK_THROWS_AS(pipeline::load_dataset(dir), FormatError);
}

TEST_CASE("training samples have the configured shapes") {
  const auto c = tiny_config();
  const auto d = pipeline::synth_dataset(c);
  const auto s = pipeline::make_train_sample(d.items[0], d.table, c, 3);
  CHECK(s.latent.shape() == Shape{2, 8, 16});
  CHECK(s.embedding.shape() == Shape{3, 8, 16});
  const auto again = pipeline::make_train_sample(d.items[0], d.table, c, 3);
  CHECK(again.latent == s.latent);
  CHECK(again.embedding == s.embedding);
  // every embedding column is one of the table columns
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 16; ++j) {
      bool found = false;
      for (int k = 0; k < 5 && !found; ++k) {
        bool same = true;
        for (int e = 0; e < 3; ++e) same = same && s.embedding(e, i, j) == d.table(e, k);
        found = same;
      }
      CHECK(found);
    }
}

TEST_CASE("training is deterministic and checkpoints restore the model") {
  const auto c = tiny_config();
  const auto d = pipeline::synth_dataset(c);
  std::vector<double> losses;
  auto state = pipeline::train_toy(c, d, [&](const pipeline::LogRow& r) { losses.push_back(r.losses.total); });
  CHECK(losses.size() == 3);
  auto again = pipeline::train_toy(c, d);
  CHECK(again.model.parameters()[0].values[0] == state.model.parameters()[0].values[0]);

  const auto ckpt = io::decode_checkpoint(io::encode_checkpoint(pipeline::checkpoint_of(c, state.model)));
  cfg::ExperimentConfig restored_config;
  auto restored = pipeline::model_from_checkpoint(ckpt, &restored_config);
  CHECK(cfg::to_json(restored_config) == cfg::to_json(c));
  const auto a = state.model.parameters();
  const auto b = restored.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k)
    CHECK(std::equal(a[k].values.begin(), a[k].values.end(), b[k].values.begin()));

  io::Checkpoint broken = ckpt;
  broken.config_json = "{\"steps\": 0}";
  CHECK_THROWS_AS(pipeline::model_from_checkpoint(broken, nullptr), FormatError);
}

TEST_CASE("generation through the pipeline") {
  const auto c = tiny_config();
  const gen::AnalyticGaussianDenoiser d({0.0, 0.5}, 1.0);
  const Tensor x = pipeline::generate(d, c, true, 7, nullptr);
  CHECK(x.shape() == Shape{2, 8, 16});
  CHECK(x == pipeline::generate(d, c, true, 7, nullptr));
  CHECK(pipeline::sga_schedule(c, false).steps.empty());
  CHECK(pipeline::sga_schedule(c, true).steps == std::vector<int>{2, 4, 6, 8});
}
