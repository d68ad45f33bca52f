#include "sphdiff/io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "sphdiff/error.hpp"

namespace sphdiff::io {
namespace {

class Writer {
 public:
  void bytes(std::string_view s) { out_.append(s); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void string(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  std::string take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int k = 0; k < n; ++k) out_.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
  }
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& data, std::string what) : data_(data), what_(std::move(what)) {}

  void magic(std::string_view expected) {
    if (bytes(expected.size()) != expected)
      throw FormatError(what_ + ": bad magic (expected \"" + std::string(expected) + "\")");
  }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string string() { return std::string(bytes(u32())); }
  std::string_view bytes(std::size_t n) {
    need(n);
    std::string_view v(data_.data() + pos_, n);
    pos_ += n;
    return v;
  }
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw FormatError(what_ + ": truncated file");
  }
  std::size_t remaining() const { return data_.size() - pos_; }
  void finish() const {
    if (pos_ != data_.size()) throw FormatError(what_ + ": trailing bytes after payload");
  }
  void version() {
    const auto v = u16();
    if (v != kFormatVersion)
      throw FormatError(what_ + ": unsupported version " + std::to_string(v));
  }

 private:
  std::uint64_t get(int n) {
    need(static_cast<std::size_t>(n));
    std::uint64_t v = 0;
    for (int k = 0; k < n; ++k)
      v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + k])) << (8 * k);
    pos_ += n;
    return v;
  }
  const std::string& data_;
  std::string what_;
  std::size_t pos_ = 0;
};

float narrow(double v) {
  require(std::isfinite(v), "cannot store non-finite value");
  return static_cast<float>(v);
}

}  // namespace

std::string encode_tensor_file(const TensorFileData& data) {
  std::uint64_t count = 1;
  for (auto d : data.dims) count *= d;
  require(count == data.payload.size(), "tensor payload does not match dims");
  require(data.dims.size() <= 0xffff, "tensor rank too large");
  Writer w;
  w.bytes("SDTF");
  w.u16(kFormatVersion);
  w.u16(static_cast<std::uint16_t>(data.dims.size()));
  for (auto d : data.dims) w.u32(d);
  for (float v : data.payload) w.f32(v);
  return w.take();
}

TensorFileData decode_tensor_file(const std::string& bytes) {
  Reader r(bytes, "tensor file");
  r.magic("SDTF");
  r.version();
  TensorFileData data;
  const auto rank = r.u16();
  std::uint64_t count = 1;
  for (int k = 0; k < rank; ++k) {
    data.dims.push_back(r.u32());
    count *= data.dims.back();
  }
  if (count * 4 != r.remaining())
    throw FormatError("tensor file: payload holds " + std::to_string(r.remaining()) +
                      " bytes, dims need " + std::to_string(count * 4));
  data.payload.resize(count);
  for (auto& v : data.payload) v = r.f32();
  r.finish();
  return data;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  TensorFileData data;
  data.dims = {static_cast<std::uint32_t>(tensor.channels()),
               static_cast<std::uint32_t>(tensor.height()),
               static_cast<std::uint32_t>(tensor.width())};
  data.payload.reserve(tensor.size());
  for (double v : tensor.values()) data.payload.push_back(narrow(v));
  write_file_atomic(path, encode_tensor_file(data));
}

Tensor load_tensor(const std::filesystem::path& path) {
  const TensorFileData data = decode_tensor_file(read_file(path));
  if (data.dims.empty() || data.dims.size() > 3)
    throw FormatError(path.string() + ": expected rank 1 to 3, got " +
                      std::to_string(data.dims.size()));
  std::uint32_t dims[3] = {1, 1, 1};
  std::copy(data.dims.begin(), data.dims.end(), dims + (3 - data.dims.size()));
  std::vector<double> values(data.payload.begin(), data.payload.end());
  return Tensor(Shape{static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2])},
                std::move(values));
}

void save_segmentation(const std::filesystem::path& path, const drse::SegmentationMap& seg) {
  TensorFileData data;
  data.dims = {static_cast<std::uint32_t>(seg.height()), static_cast<std::uint32_t>(seg.width())};
  for (int id : seg.ids()) data.payload.push_back(static_cast<float>(id));
  write_file_atomic(path, encode_tensor_file(data));
}

drse::SegmentationMap load_segmentation(const std::filesystem::path& path, int num_classes,
                                        int unknown_id) {
  const TensorFileData data = decode_tensor_file(read_file(path));
  if (data.dims.size() != 2) throw FormatError(path.string() + ": segmentation map must be rank 2");
  std::vector<int> ids;
  ids.reserve(data.payload.size());
  for (float v : data.payload) {
    if (v != std::floor(v) || v < 0 || v >= static_cast<float>(num_classes))
      throw FormatError(path.string() + ": class id " + std::to_string(v) + " is not in [0, " +
                        std::to_string(num_classes) + ")");
    ids.push_back(static_cast<int>(v));
  }
  return drse::SegmentationMap(static_cast<int>(data.dims[0]), static_cast<int>(data.dims[1]),
                               std::move(ids), num_classes, unknown_id);
}

void save_mask(const std::filesystem::path& path, const BinaryMask& mask) {
  TensorFileData data;
  data.dims = {static_cast<std::uint32_t>(mask.height()), static_cast<std::uint32_t>(mask.width())};
  for (auto v : mask.values()) data.payload.push_back(static_cast<float>(v));
  write_file_atomic(path, encode_tensor_file(data));
}

BinaryMask load_mask(const std::filesystem::path& path) {
  const TensorFileData data = decode_tensor_file(read_file(path));
  if (data.dims.size() != 2) throw FormatError(path.string() + ": mask must be rank 2");
  BinaryMask mask(static_cast<int>(data.dims[0]), static_cast<int>(data.dims[1]));
  for (int i = 0; i < mask.height(); ++i) {
    for (int j = 0; j < mask.width(); ++j) {
      const float v = data.payload[static_cast<std::size_t>(i) * mask.width() + j];
      if (v != 0.0f && v != 1.0f) throw FormatError(path.string() + ": mask values must be 0 or 1");
      mask.set(i, j, v == 1.0f);
    }
  }
  return mask;
}

std::string encode_embedding_table(const drse::LabelEmbeddingTable& table) {
  Writer w;
  w.bytes("SDET");
  w.u16(kFormatVersion);
  w.u32(static_cast<std::uint32_t>(table.num_classes()));
  w.u32(static_cast<std::uint32_t>(table.dim()));
  for (const auto& label : table.labels()) w.string(label);
  for (double v : table.columns()) w.f32(narrow(v));
  return w.take();
}

drse::LabelEmbeddingTable decode_embedding_table(const std::string& bytes) {
  Reader r(bytes, "embedding table");
  r.magic("SDET");
  r.version();
  const auto classes = r.u32();
  const auto dim = r.u32();
  if (classes == 0 || dim == 0) throw FormatError("embedding table: empty dimensions");
  std::vector<std::string> labels;
  for (std::uint32_t k = 0; k < classes; ++k) labels.push_back(r.string());
  const std::uint64_t count = static_cast<std::uint64_t>(classes) * dim;
  if (count * 4 != r.remaining()) throw FormatError("embedding table: payload size mismatch");
  std::vector<double> columns(count);
  for (auto& v : columns) v = r.f32();
  r.finish();
  try {
    drse::LabelEmbeddingTable table(static_cast<int>(dim), std::move(labels), std::move(columns));
    if (table.unknown_index() < 0)
      throw FormatError("embedding table: no \"" + drse::prompt_template(drse::kUnknownLabel) +
                        "\" class");
    return table;
  } catch (const PreconditionError& e) {
    throw FormatError(std::string("embedding table: ") + e.what());
  }
}

void save_embedding_table(const std::filesystem::path& path, const drse::LabelEmbeddingTable& table) {
  write_file_atomic(path, encode_embedding_table(table));
}

drse::LabelEmbeddingTable load_embedding_table(const std::filesystem::path& path) {
  return decode_embedding_table(read_file(path));
}

std::string encode_checkpoint(const Checkpoint& checkpoint) {
  require(checkpoint.names.size() == checkpoint.blocks.size(), "checkpoint name/block mismatch");
  Writer w;
  w.bytes("SDCK");
  w.u16(kFormatVersion);
  w.string(checkpoint.config_json);
  w.u32(static_cast<std::uint32_t>(checkpoint.blocks.size()));
  for (std::size_t b = 0; b < checkpoint.blocks.size(); ++b) {
    w.string(checkpoint.names[b]);
    w.u64(checkpoint.blocks[b].size());
    for (double v : checkpoint.blocks[b]) w.f64(v);
  }
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  Reader r(bytes, "checkpoint");
  r.magic("SDCK");
  r.version();
  Checkpoint c;
  c.config_json = r.string();
  const auto blocks = r.u32();
  for (std::uint32_t b = 0; b < blocks; ++b) {
    c.names.push_back(r.string());
    const auto count = r.u64();
    if (count > r.remaining() / 8) throw FormatError("checkpoint: truncated file");
    std::vector<double> values(count);
    for (auto& v : values) v = r.f64();
    c.blocks.push_back(std::move(values));
  }
  r.finish();
  return c;
}

Checkpoint make_checkpoint(const std::string& config_json, std::span<const nn::NamedParams> params) {
  Checkpoint c;
  c.config_json = config_json;
  for (const auto& p : params) {
    c.names.push_back(p.name);
    c.blocks.emplace_back(p.values.begin(), p.values.end());
  }
  return c;
}

void restore_checkpoint(const Checkpoint& checkpoint, std::span<const nn::NamedParams> params) {
  if (checkpoint.blocks.size() != params.size())
    throw FormatError("checkpoint has " + std::to_string(checkpoint.blocks.size()) +
                      " parameter blocks, model has " + std::to_string(params.size()));
  for (std::size_t b = 0; b < params.size(); ++b) {
    if (checkpoint.names[b] != params[b].name ||
        checkpoint.blocks[b].size() != params[b].values.size())
      throw FormatError("checkpoint block '" + checkpoint.names[b] + "' does not match model block '" +
                        params[b].name + "'");
    std::copy(checkpoint.blocks[b].begin(), checkpoint.blocks[b].end(), params[b].values.begin());
  }
}

void save_pgm(const std::filesystem::path& path, const Tensor& tensor, int channel, double lo,
              double hi) {
  require(channel >= 0 && channel < tensor.channels(), "PGM channel out of range");
  require(hi > lo, "PGM range must be non-empty");
  std::string out = "P5\n" + std::to_string(tensor.width()) + " " + std::to_string(tensor.height()) +
                    "\n255\n";
  for (double v : tensor.plane(channel)) {
    const double scaled = std::clamp((v - lo) / (hi - lo), 0.0, 1.0) * 255.0;
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(scaled))));
  }
  write_file_atomic(path, out);
}

}  // namespace sphdiff::io
