#include "sphdiff/synth.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "sphdiff/error.hpp"
#include "sphdiff/rng.hpp"

namespace sphdiff::synth {
namespace {

int round_fraction(double fraction, int size) {
  return std::clamp(static_cast<int>(std::lround(fraction * size)), 0, size);
}

}  // namespace

geom::EquirectImage synth_panorama(const geom::ErpGrid& grid, int channels, int budget,
                                   std::uint64_t seed) {
  require(channels >= 1, "panorama needs at least one channel");
  require(budget >= 1, "wavenumber budget must be >= 1");
  const double pi = std::numbers::pi;
  Rng rng(seed);
  Tensor out(channels, grid.height(), grid.width());
  for (int c = 0; c < channels; ++c) {
    const double offset = rng.uniform(-0.5, 0.5);
    std::vector<double> amp(budget), env(budget);
    for (int m = 0; m < budget; ++m) {
      amp[m] = rng.uniform(-1.0, 1.0) / (m + 1);
      env[m] = rng.uniform(-0.5, 0.5);
    }
    for (int i = 0; i < grid.height(); ++i) {
      const double lat = pi / 2 - pi * (i + 0.5) / grid.height();
      for (int j = 0; j < grid.width(); ++j) {
        const double lambda = 2 * pi * (j + 0.5) / grid.width();
        double v = offset;
        for (int m = 0; m < budget; ++m)
          v += amp[m] * (1.0 + env[m] * std::sin(lat)) * std::cos((m + 1) * lambda);
        out(c, i, j) = v;
      }
    }
  }
  return geom::EquirectImage(std::move(out));
}

drse::SegmentationMap paint_segmap(const geom::ErpGrid& grid, int num_classes,
                                   const SegmapLayout& layout) {
  require(num_classes >= 2, "segmentation needs at least two classes");
  require(!layout.band_fractions.empty() &&
              layout.band_fractions.size() == layout.band_classes.size(),
          "layout needs one class per band");
  const int h = grid.height();
  const int w = grid.width();
  auto check_id = [&](int id) {
    require(id >= 0 && id < num_classes - 1, "layout class id must lie in [0, K-2]");
  };
  check_id(layout.ceiling_class);
  check_id(layout.floor_class);
  check_id(layout.rect.class_id);
  for (int id : layout.band_classes) check_id(id);

  std::vector<int> ids(static_cast<std::size_t>(h) * w, 0);
  const int offset = round_fraction(layout.band_offset, w) % w;
  double cumulative = 0.0;
  int start = 0;
  for (std::size_t b = 0; b < layout.band_fractions.size(); ++b) {
    cumulative += layout.band_fractions[b];
    const int end = b + 1 == layout.band_fractions.size() ? w : round_fraction(cumulative, w);
    for (int j = start; j < end; ++j)
      for (int i = 0; i < h; ++i) ids[static_cast<std::size_t>(i) * w + (j + offset) % w] = layout.band_classes[b];
    start = end;
  }
  const int ceiling_rows = round_fraction(layout.ceiling, h);
  const int floor_rows = round_fraction(layout.floor, h);
  for (int i = 0; i < ceiling_rows; ++i)
    for (int j = 0; j < w; ++j) ids[static_cast<std::size_t>(i) * w + j] = layout.ceiling_class;
  for (int i = h - floor_rows; i < h; ++i)
    for (int j = 0; j < w; ++j) ids[static_cast<std::size_t>(i) * w + j] = layout.floor_class;
  const Rect& r = layout.rect;
  for (int i = round_fraction(r.row0, h); i < round_fraction(r.row1, h); ++i)
    for (int j = round_fraction(r.col0, w); j < round_fraction(r.col1, w); ++j)
      ids[static_cast<std::size_t>(i) * w + j] = r.class_id;
  return drse::SegmentationMap(h, w, std::move(ids), num_classes, num_classes - 1);
}

SegmapLayout random_layout(int num_classes, std::uint64_t seed) {
  require(num_classes >= 2, "segmentation needs at least two classes");
  Rng rng(seed);
  const int top = num_classes - 2;
  SegmapLayout layout;
  layout.ceiling = rng.uniform(0.1, 0.25);
  layout.floor = rng.uniform(0.1, 0.25);
  layout.ceiling_class = rng.uniform_int(0, top);
  layout.floor_class = rng.uniform_int(0, top);
  const int bands = rng.uniform_int(2, 4);
  double total = 0.0;
  for (int b = 0; b < bands; ++b) {
    layout.band_fractions.push_back(rng.uniform(0.5, 1.5));
    layout.band_classes.push_back(rng.uniform_int(0, top));
    total += layout.band_fractions.back();
  }
  for (double& f : layout.band_fractions) f /= total;
  layout.band_offset = rng.uniform();
  layout.rect.row0 = rng.uniform(0.35, 0.5);
  layout.rect.row1 = layout.rect.row0 + rng.uniform(0.1, 0.25);
  layout.rect.col0 = rng.uniform(0.0, 0.8);
  layout.rect.col1 = layout.rect.col0 + rng.uniform(0.05, 0.2);
  layout.rect.class_id = rng.uniform_int(0, top);
  return layout;
}

drse::SegmentationMap synth_segmap(const geom::ErpGrid& grid, int num_classes, std::uint64_t seed) {
  return paint_segmap(grid, num_classes, random_layout(num_classes, seed));
}

drse::LabelEmbeddingTable synth_embedding_table(int num_classes, int dim, std::uint64_t seed) {
  require(num_classes >= 2, "embedding table needs at least two classes");
  require(dim >= 1, "embedding dimension must be >= 1");
  static constexpr std::array<const char*, 12> kNames = {
      "wall", "floor", "ceiling", "bed", "chair", "table",
      "window", "door", "lamp", "sofa", "cabinet", "picture"};
  std::vector<std::string> labels;
  for (int k = 0; k + 1 < num_classes; ++k) {
    const std::string name = k < static_cast<int>(kNames.size()) ? kNames[k] : "object " + std::to_string(k);
    labels.push_back(drse::prompt_template(name));
  }
  labels.push_back(drse::prompt_template(drse::kUnknownLabel));
  Rng rng(seed);
  std::vector<double> columns(static_cast<std::size_t>(num_classes) * dim);
  for (double& v : columns) v = rng.uniform(-1.0, 1.0);
  return drse::LabelEmbeddingTable(dim, std::move(labels), std::move(columns));
}

}  // namespace sphdiff::synth
