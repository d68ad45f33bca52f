#pragma once

// Semantic encoding of segmentation maps: "Unknown"-filled class maps, their
// one-mask-per-class decomposition and the per-pixel label embedding obtained
// by multiplying the masks with a label-embedding table.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "sphdiff/mask.hpp"
#include "sphdiff/tensor.hpp"

namespace sphdiff::drse {

inline constexpr std::string_view kUnknownLabel = "Unknown";

class SegmentationMap {
 public:
  SegmentationMap(int height, int width, std::vector<int> ids, int num_classes, int unknown_id);
  // Every pixel set to `fill_id`.
  static SegmentationMap filled(int height, int width, int fill_id, int num_classes,
                                int unknown_id);

  int height() const { return height_; }
  int width() const { return width_; }
  int num_classes() const { return num_classes_; }
  int unknown_id() const { return unknown_id_; }
  int operator()(int i, int j) const { return ids_[static_cast<std::size_t>(i) * width_ + j]; }
  const std::vector<int>& ids() const { return ids_; }

  friend bool operator==(const SegmentationMap&, const SegmentationMap&) = default;

 private:
  int height_;
  int width_;
  std::vector<int> ids_;
  int num_classes_;
  int unknown_id_;
};

// K_cls x h x w binary masks; exactly one mask is set at each pixel.
class BinaryMaskStack {
 public:
  BinaryMaskStack(int num_classes, int height, int width);

  int num_classes() const { return num_classes_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::uint8_t operator()(int k, int i, int j) const { return bits_[offset(k, i, j)]; }
  void set(int k, int i, int j, bool on) { bits_[offset(k, i, j)] = on ? 1 : 0; }
  bool is_partition() const;

 private:
  std::size_t offset(int k, int i, int j) const {
    return (static_cast<std::size_t>(k) * height_ + i) * width_ + j;
  }
  int num_classes_;
  int height_;
  int width_;
  std::vector<std::uint8_t> bits_;
};

// C_E x K_cls embedding matrix with one column per class, stored column-major
// (the C_E values of a class are contiguous).
class LabelEmbeddingTable {
 public:
  LabelEmbeddingTable(int dim, std::vector<std::string> labels, std::vector<double> columns);

  int dim() const { return dim_; }
  int num_classes() const { return static_cast<int>(labels_.size()); }
  const std::vector<std::string>& labels() const { return labels_; }
  double operator()(int e, int k) const { return columns_[static_cast<std::size_t>(k) * dim_ + e]; }
  const std::vector<double>& columns() const { return columns_; }
  // Index of the label equal to prompt_template(kUnknownLabel), or -1.
  int unknown_index() const;

 private:
  int dim_;
  std::vector<std::string> labels_;
  std::vector<double> columns_;
};

// "a photo of a {label}"
std::string prompt_template(std::string_view label);

SegmentationMap fill_unknown(const SegmentationMap& seg, const BinaryMask& visible, int unknown_id);
SegmentationMap fill_unknown(const SegmentationMap& seg, const BinaryMask& visible);

// Nearest-neighbour class-id downsampling. Target pixel i samples source row
// floor((i + 0.5) * H / h), the source cell containing the target centre.
SegmentationMap downsample_seg(const SegmentationMap& seg, int height, int width);

BinaryMaskStack masks_from_seg(const SegmentationMap& seg);

// E_pixel[:, i, j] = sum_k table[:, k] * masks[k][i][j].
Tensor pixel_embedding(const BinaryMaskStack& masks, const LabelEmbeddingTable& table);

}  // namespace sphdiff::drse
