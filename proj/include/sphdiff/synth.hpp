#pragma once

// Synthetic panoramas, room-like class maps and label tables for desk-scale
// experiments.

#include <cstdint>
#include <vector>

#include "sphdiff/drse.hpp"
#include "sphdiff/sphere_geom.hpp"

namespace sphdiff::synth {

// Channel c holds
//   x(i, j) = d_c + sum_{m=1..budget} a_cm * (1 + b_cm * sin(phi_i)) * cos(m * lambda_j)
// with lambda_j = 2 pi (j + 0.5) / W measured from the left edge and phi_i the
// pixel-centre latitude in radians. Cosines of the edge-relative longitude are
// mirror-symmetric about the seam, so columns 0 and W-1 coincide.
// Draw order from Rng(seed): per channel d ~ U[-0.5, 0.5), then per m
// a ~ U[-1, 1) / m followed by b ~ U[-0.5, 0.5).
geom::EquirectImage synth_panorama(const geom::ErpGrid& grid, int channels, int budget,
                                   std::uint64_t seed);

struct Rect {
  double row0 = 0.0;  // fractions of H / W, half-open
  double row1 = 0.0;
  double col0 = 0.0;
  double col1 = 0.0;
  int class_id = 0;
};

// Ceiling and floor strips over longitude bands, then one rectangle on top.
struct SegmapLayout {
  double ceiling = 0.0;  // fraction of rows from the top
  double floor = 0.0;    // fraction of rows from the bottom
  int ceiling_class = 0;
  int floor_class = 0;
  std::vector<double> band_fractions;  // sums to 1
  std::vector<int> band_classes;
  double band_offset = 0.0;  // fraction of W where the first band starts
  Rect rect;
};

// Region boundaries are rounded to the nearest pixel, so each region is
// within one row or column of its requested fraction.
drse::SegmentationMap paint_segmap(const geom::ErpGrid& grid, int num_classes,
                                   const SegmapLayout& layout);
SegmapLayout random_layout(int num_classes, std::uint64_t seed);
// Class ids in [0, K-2]; K-1 is reserved for Unknown.
drse::SegmentationMap synth_segmap(const geom::ErpGrid& grid, int num_classes, std::uint64_t seed);

// Prompts "a photo of a {name}" for K-1 room classes plus Unknown last, with
// random columns standing in for text-encoder outputs.
drse::LabelEmbeddingTable synth_embedding_table(int num_classes, int dim, std::uint64_t seed);

}  // namespace sphdiff::synth
