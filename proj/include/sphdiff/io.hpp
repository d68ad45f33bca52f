#pragma once

// Binary file formats. All integers and floats are little-endian.
//
//   TensorFile          "SDTF" u16 version u16 rank u32 dims[rank] f32 payload[prod(dims)]
//   EmbeddingTableFile  "SDET" u16 version u32 K_cls u32 C_E
//                       K_cls x (u32 length, UTF-8 prompt) f32 payload[C_E * K_cls]
//                       (column-major by class)
//   Checkpoint          "SDCK" u16 version u32 json_length json
//                       u32 blocks, then per block (u32 length, name) u64 count f64 values[count]
//
// Writers go through a temporary file and rename, so a failed write never
// leaves a partial artifact behind.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "sphdiff/conv.hpp"
#include "sphdiff/drse.hpp"
#include "sphdiff/mask.hpp"
#include "sphdiff/tensor.hpp"

namespace sphdiff::io {

inline constexpr std::uint16_t kFormatVersion = 1;

struct TensorFileData {
  std::vector<std::uint32_t> dims;
  std::vector<float> payload;
};

std::string encode_tensor_file(const TensorFileData& data);
TensorFileData decode_tensor_file(const std::string& bytes);

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);
std::string read_file(const std::filesystem::path& path);

// Rank-3 (C, H, W) file; values are narrowed to float32.
void save_tensor(const std::filesystem::path& path, const Tensor& tensor);
// Accepts rank 1 to 3; missing leading dims are 1.
Tensor load_tensor(const std::filesystem::path& path);

// Class ids as a rank-2 (H, W) tensor.
void save_segmentation(const std::filesystem::path& path, const drse::SegmentationMap& seg);
drse::SegmentationMap load_segmentation(const std::filesystem::path& path, int num_classes,
                                        int unknown_id);

void save_mask(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask load_mask(const std::filesystem::path& path);

std::string encode_embedding_table(const drse::LabelEmbeddingTable& table);
drse::LabelEmbeddingTable decode_embedding_table(const std::string& bytes);
void save_embedding_table(const std::filesystem::path& path, const drse::LabelEmbeddingTable& table);
drse::LabelEmbeddingTable load_embedding_table(const std::filesystem::path& path);

struct Checkpoint {
  std::string config_json;
  std::vector<std::string> names;
  std::vector<std::vector<double>> blocks;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes);
Checkpoint make_checkpoint(const std::string& config_json, std::span<const nn::NamedParams> params);
// Copies checkpoint blocks into params, matching by name and size.
void restore_checkpoint(const Checkpoint& checkpoint, std::span<const nn::NamedParams> params);

// 8-bit binary PGM (P5) of one channel, linearly mapped from [lo, hi].
void save_pgm(const std::filesystem::path& path, const Tensor& tensor, int channel, double lo,
              double hi);

}  // namespace sphdiff::io
