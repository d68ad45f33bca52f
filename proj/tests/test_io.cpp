#include <bit>
#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "sphdiff/config.hpp"
#include "sphdiff/error.hpp"
#include "sphdiff/io.hpp"
#include "sphdiff/rng.hpp"
#include "sphdiff/synth.hpp"

using namespace sphdiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "sphdiff_test_io" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Tensor random_tensor(Shape s, Rng& rng) {
  Tensor t(s);
  for (double& v : t.values()) v = rng.uniform(-1, 1);
  return t;
}

// Independent little-endian encoder for the tensor format.
std::string reference_tensor_bytes(const std::vector<std::uint32_t>& dims, const std::vector<float>& payload) {
  std::string out = "SDTF";
  auto put = [&](std::uint64_t v, int bytes) {
    for (int b = 0; b < bytes; ++b) out.push_back(static_cast<char>((v >> (8 * b)) & 0xff));
  };
  put(1, 2);
  put(dims.size(), 2);
  for (auto d : dims) put(d, 4);
  for (float f : payload) put(std::bit_cast<std::uint32_t>(f), 4);
  return out;
}

}  // namespace

TEST_CASE("tensor file layout matches a reference encoder") {
  const io::TensorFileData data{{2, 3}, {1.f, -2.5f, 0.f, 3.25f, 1e-3f, -7.f}};
  const std::string bytes = io::encode_tensor_file(data);
  CHECK(bytes == reference_tensor_bytes(data.dims, data.payload));
  const auto back = io::decode_tensor_file(bytes);
  CHECK(back.dims == data.dims);
  CHECK(back.payload == data.payload);
}

TEST_CASE("tensor file decoding rejects damaged input") {
  const std::string good = reference_tensor_bytes({2, 2}, {1, 2, 3, 4});
  std::string bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(io::decode_tensor_file(bad_magic), FormatError);
  std::string bad_version = good;
  bad_version[4] = 9;
  CHECK_THROWS_AS(io::decode_tensor_file(bad_version), FormatError);
  for (std::size_t n : {std::size_t{0}, std::size_t{3}, std::size_t{7}, good.size() - 1})
    CHECK_THROWS_AS(io::decode_tensor_file(good.substr(0, n)), FormatError);
  CHECK_THROWS_AS(io::decode_tensor_file(good + "x"), FormatError);
}

TEST_CASE("tensor save and load round trip at float precision") {
  const fs::path dir = scratch("tensor");
  Rng rng(1);
  const Tensor t = random_tensor({3, 4, 8}, rng);
  io::save_tensor(dir / "t.sdtf", t);
  const Tensor back = io::load_tensor(dir / "t.sdtf");
  REQUIRE(back.shape() == t.shape());
  for (std::size_t p = 0; p < t.size(); ++p)
    CHECK(back.values()[p] == static_cast<double>(static_cast<float>(t.values()[p])));
  CHECK_FALSE(fs::exists(dir / "t.sdtf.tmp"));

  Tensor bad = t;
  bad(0, 0, 0) = std::nan("");
  CHECK_THROWS(io::save_tensor(dir / "nan.sdtf", bad));
  CHECK_FALSE(fs::exists(dir / "nan.sdtf"));

  // rank-2 files load as a single channel
  io::write_file_atomic(dir / "r2.sdtf", reference_tensor_bytes({2, 3}, {1, 2, 3, 4, 5, 6}));
  const Tensor r2 = io::load_tensor(dir / "r2.sdtf");
  CHECK(r2.shape() == Shape{1, 2, 3});
  CHECK(r2(0, 1, 2) == 6.0);
  CHECK_THROWS_AS(io::load_tensor(dir / "missing.sdtf"), Error);
}

TEST_CASE("segmentation and mask round trips") {
  const fs::path dir = scratch("seg");
  const auto seg = synth::synth_segmap(geom::ErpGrid(8, 16), 6, 3);
  io::save_segmentation(dir / "s.sdtf", seg);
  CHECK(io::load_segmentation(dir / "s.sdtf", 6, 5) == seg);
  CHECK_THROWS_AS(io::load_segmentation(dir / "s.sdtf", 2, 1), FormatError);

  BinaryMask mask(4, 8);
  mask.set(1, 2, true);
  mask.set(3, 7, true);
  io::save_mask(dir / "m.sdtf", mask);
  CHECK(io::load_mask(dir / "m.sdtf") == mask);
  io::write_file_atomic(dir / "bad.sdtf", reference_tensor_bytes({1, 2}, {0.f, 0.5f}));
  CHECK_THROWS_AS(io::load_mask(dir / "bad.sdtf"), FormatError);
  io::write_file_atomic(dir / "frac.sdtf", reference_tensor_bytes({1, 2}, {0.f, 1.5f}));
  CHECK_THROWS_AS(io::load_segmentation(dir / "frac.sdtf", 3, 2), FormatError);
}

TEST_CASE("embedding table round trip and Unknown requirement") {
  const auto table = synth::synth_embedding_table(5, 4, 9);
  const auto back = io::decode_embedding_table(io::encode_embedding_table(table));
  CHECK(back.labels() == table.labels());
  REQUIRE(back.columns().size() == table.columns().size());
  for (std::size_t k = 0; k < table.columns().size(); ++k)
    CHECK(back.columns()[k] == static_cast<double>(static_cast<float>(table.columns()[k])));

  const drse::LabelEmbeddingTable no_unknown(1, {"a photo of a bed", "a photo of a wall"}, {1, 2});
  CHECK_THROWS_AS(io::decode_embedding_table(io::encode_embedding_table(no_unknown)), FormatError);
  CHECK_THROWS_AS(io::decode_embedding_table("SDET"), FormatError);
}

TEST_CASE("checkpoint round trip and mismatch detection") {
  std::vector<double> a{1.0, 2.0, 3.0}, b{0.1 + 0.2, -4.0};
  const nn::NamedParams params[] = {{"a", a}, {"b", b}};
  const auto ckpt = io::make_checkpoint("{\"x\":1}", params);
  const auto back = io::decode_checkpoint(io::encode_checkpoint(ckpt));
  CHECK(back.config_json == "{\"x\":1}");
  CHECK(back.names == ckpt.names);
  CHECK(back.blocks == ckpt.blocks);

  std::vector<double> a2(3), b2(2);
  const nn::NamedParams target[] = {{"a", a2}, {"b", b2}};
  io::restore_checkpoint(back, target);
  CHECK(a2 == a);
  CHECK(b2 == b);  // doubles survive bit-exactly

  std::vector<double> wrong(4);
  const nn::NamedParams resized[] = {{"a", wrong}, {"b", b2}};
  CHECK_THROWS_AS(io::restore_checkpoint(back, resized), FormatError);
  const nn::NamedParams renamed[] = {{"a", a2}, {"c", b2}};
  CHECK_THROWS_AS(io::restore_checkpoint(back, renamed), FormatError);
  const nn::NamedParams fewer[] = {{"a", a2}};
  CHECK_THROWS_AS(io::restore_checkpoint(back, fewer), FormatError);

  const std::string bytes = io::encode_checkpoint(ckpt);
  CHECK_THROWS_AS(io::decode_checkpoint(bytes.substr(0, bytes.size() - 3)), FormatError);
  CHECK_THROWS_AS(io::decode_checkpoint(bytes + "z"), FormatError);
}

TEST_CASE("atomic writes create parent directories") {
  const fs::path dir = scratch("atomic");
  io::write_file_atomic(dir / "a" / "b" / "file.bin", "hello");
  CHECK(io::read_file(dir / "a" / "b" / "file.bin") == "hello");
  io::write_file_atomic(dir / "a" / "b" / "file.bin", "bye");
  CHECK(io::read_file(dir / "a" / "b" / "file.bin") == "bye");
}

TEST_CASE("pgm export") {
  const fs::path dir = scratch("pgm");
  Tensor t(1, 2, 3);
  t(0, 0, 1) = 1.0;
  t(0, 1, 2) = 2.0;
  io::save_pgm(dir / "x.pgm", t, 0, 0.0, 1.0);
  const std::string bytes = io::read_file(dir / "x.pgm");
  REQUIRE(bytes.rfind("P5", 0) == 0);
  const std::string pixels = bytes.substr(bytes.size() - 6);
  CHECK(static_cast<unsigned char>(pixels[0]) == 0);
  CHECK(static_cast<unsigned char>(pixels[1]) == 255);
  CHECK(static_cast<unsigned char>(pixels[5]) == 255);  // clipped
}

TEST_CASE("config defaults and validation") {
  const cfg::ExperimentConfig d = cfg::parse_config("{}");
  CHECK(d.steps == 50);
  CHECK(d.k_rot == 4);
  CHECK(d.lambda == 0.1);
  CHECK(d.k_d == 0.1);
  CHECK(d.hint_widths == std::array<int, 4>{16, 16, 32, 32});
  CHECK(d.contrastive_bounds.pitch == 3.0);
  CHECK(d.reprojection_bounds.roll == 10.0);
  CHECK_NOTHROW(cfg::validate(d));

  CHECK_THROWS_AS(cfg::parse_config("{\"lambda\": -1}"), ConfigError);
  CHECK_THROWS_AS(cfg::parse_config("{\"steps\": 2, \"k_rot\": 4}"), ConfigError);
  CHECK_THROWS_AS(cfg::parse_config("{\"width\": 63}"), ConfigError);
  CHECK_THROWS_AS(cfg::parse_config("{\"no_such_key\": 1}"), ConfigError);
  CHECK_THROWS_AS(cfg::parse_config("{\"steps\": \"many\"}"), ConfigError);
  CHECK_THROWS_AS(cfg::parse_config("{"), ConfigError);
  CHECK_THROWS_AS(cfg::parse_config("{\"align_mode\": \"sideways\"}"), ConfigError);
  CHECK_THROWS_AS(cfg::load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config survives a JSON round trip") {
  cfg::ExperimentConfig c;
  c.height = 8;
  c.width = 16;
  c.k_rot = 3;
  c.snap = false;
  c.lambda = 0.25;
  c.align = train::AlignMode::kLiteral;
  c.sampler = gen::SamplerMode::kStochastic;
  c.contrastive_bounds = {180.0, 1.5, 2.5};
  c.seed = 12345678901234ull;
  c.hint_widths = {4, 5, 6, 7};
  const auto back = cfg::parse_config(cfg::to_json(c));
  CHECK(cfg::to_json(back) == cfg::to_json(c));
  CHECK(back.seed == c.seed);
  CHECK(back.align == train::AlignMode::kLiteral);
  CHECK(back.contrastive_bounds.roll == 2.5);
}
