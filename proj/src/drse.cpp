#include "sphdiff/drse.hpp"

#include <cmath>

#include "sphdiff/error.hpp"

namespace sphdiff::drse {

SegmentationMap::SegmentationMap(int height, int width, std::vector<int> ids, int num_classes,
                                 int unknown_id)
    : height_(height), width_(width), ids_(std::move(ids)), num_classes_(num_classes),
      unknown_id_(unknown_id) {
  require(height >= 1 && width >= 1, "segmentation map must be non-empty");
  require(ids_.size() == static_cast<std::size_t>(height) * width,
          "segmentation id count does not match its dimensions");
  require(num_classes >= 1, "segmentation map needs at least one class");
  require(unknown_id >= 0 && unknown_id < num_classes, "unknown id outside [0, K_cls)");
  for (int id : ids_) {
    require(id >= 0 && id < num_classes,
            "class id " + std::to_string(id) + " outside [0, " + std::to_string(num_classes) + ")");
  }
}

SegmentationMap SegmentationMap::filled(int height, int width, int fill_id, int num_classes,
                                        int unknown_id) {
  return SegmentationMap(height, width,
                         std::vector<int>(static_cast<std::size_t>(height) * width, fill_id),
                         num_classes, unknown_id);
}

BinaryMaskStack::BinaryMaskStack(int num_classes, int height, int width)
    : num_classes_(num_classes), height_(height), width_(width),
      bits_(static_cast<std::size_t>(num_classes) * height * width, 0) {}

bool BinaryMaskStack::is_partition() const {
  for (int i = 0; i < height_; ++i) {
    for (int j = 0; j < width_; ++j) {
      int total = 0;
      for (int k = 0; k < num_classes_; ++k) total += (*this)(k, i, j);
      if (total != 1) return false;
    }
  }
  return true;
}

LabelEmbeddingTable::LabelEmbeddingTable(int dim, std::vector<std::string> labels,
                                         std::vector<double> columns)
    : dim_(dim), labels_(std::move(labels)), columns_(std::move(columns)) {
  require(dim >= 1, "embedding dimension must be >= 1");
  require(!labels_.empty(), "embedding table needs at least one class");
  require(columns_.size() == static_cast<std::size_t>(dim) * labels_.size(),
          "embedding payload does not match C_E x K_cls");
  for (double v : columns_) require(std::isfinite(v), "embedding table has non-finite entries");
}

int LabelEmbeddingTable::unknown_index() const {
  const std::string unknown = prompt_template(kUnknownLabel);
  for (std::size_t k = 0; k < labels_.size(); ++k)
    if (labels_[k] == unknown) return static_cast<int>(k);
  return -1;
}

std::string prompt_template(std::string_view label) {
  require(!label.empty(), "prompt label must be non-empty");
  return "a photo of a " + std::string(label);
}

SegmentationMap fill_unknown(const SegmentationMap& seg, const BinaryMask& visible,
                             int unknown_id) {
  require(visible.height() == seg.height() && visible.width() == seg.width(),
          "visibility mask shape does not match segmentation map");
  std::vector<int> ids = seg.ids();
  for (int i = 0; i < seg.height(); ++i)
    for (int j = 0; j < seg.width(); ++j)
      if (!visible(i, j)) ids[static_cast<std::size_t>(i) * seg.width() + j] = unknown_id;
  return SegmentationMap(seg.height(), seg.width(), std::move(ids), seg.num_classes(), unknown_id);
}

SegmentationMap fill_unknown(const SegmentationMap& seg, const BinaryMask& visible) {
  return fill_unknown(seg, visible, seg.unknown_id());
}

SegmentationMap downsample_seg(const SegmentationMap& seg, int height, int width) {
  require(height >= 1 && width >= 1 && height <= seg.height() && width <= seg.width(),
          "downsample target must satisfy 1 <= h <= H and 1 <= w <= W");
  std::vector<int> ids(static_cast<std::size_t>(height) * width);
  for (int i = 0; i < height; ++i) {
    // floor((i + 0.5) * H / h) in exact integer arithmetic.
    const int si = static_cast<int>((2L * i + 1) * seg.height() / (2L * height));
    for (int j = 0; j < width; ++j) {
      const int sj = static_cast<int>((2L * j + 1) * seg.width() / (2L * width));
      ids[static_cast<std::size_t>(i) * width + j] = seg(si, sj);
    }
  }
  return SegmentationMap(height, width, std::move(ids), seg.num_classes(), seg.unknown_id());
}

BinaryMaskStack masks_from_seg(const SegmentationMap& seg) {
  BinaryMaskStack masks(seg.num_classes(), seg.height(), seg.width());
  for (int i = 0; i < seg.height(); ++i)
    for (int j = 0; j < seg.width(); ++j) masks.set(seg(i, j), i, j, true);
  return masks;
}

Tensor pixel_embedding(const BinaryMaskStack& masks, const LabelEmbeddingTable& table) {
  require(masks.num_classes() == table.num_classes(),
          "mask stack has " + std::to_string(masks.num_classes()) + " classes, table has " +
              std::to_string(table.num_classes()));
  Tensor out(table.dim(), masks.height(), masks.width());
  for (int e = 0; e < table.dim(); ++e) {
    for (int i = 0; i < masks.height(); ++i) {
      for (int j = 0; j < masks.width(); ++j) {
        double acc = 0.0;
        for (int k = 0; k < masks.num_classes(); ++k) acc += table(e, k) * masks(k, i, j);
        out(e, i, j) = acc;
      }
    }
  }
  return out;
}

}  // namespace sphdiff::drse
