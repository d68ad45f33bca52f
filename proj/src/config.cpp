#include "sphdiff/config.hpp"

#include <cmath>
#include <set>

#include "json.hpp"
#include "sphdiff/error.hpp"
#include "sphdiff/io.hpp"

namespace sphdiff::cfg {
namespace {

using json = nlohmann::json;

void check(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

std::string sampler_name(gen::SamplerMode mode) {
  return mode == gen::SamplerMode::kDeterministic ? "deterministic" : "stochastic";
}

gen::SamplerMode parse_sampler(const std::string& name) {
  if (name == "deterministic") return gen::SamplerMode::kDeterministic;
  if (name == "stochastic") return gen::SamplerMode::kStochastic;
  throw ConfigError("sampler must be \"deterministic\" or \"stochastic\", got \"" + name + "\"");
}

json bounds_json(const train::RotationBounds& b) { return json::array({b.yaw, b.pitch, b.roll}); }

train::RotationBounds parse_bounds(const json& j, const std::string& key) {
  check(j.is_array() && j.size() == 3, key + " must be [yaw, pitch, roll]");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

void check_bounds(const train::RotationBounds& b, const std::string& key) {
  check(std::isfinite(b.yaw) && b.yaw >= 0 && b.yaw <= 360, key + " yaw bound must lie in [0, 360]");
  check(std::isfinite(b.pitch) && b.pitch >= 0 && b.pitch <= 90,
        key + " pitch bound must lie in [0, 90]");
  check(std::isfinite(b.roll) && b.roll >= 0 && b.roll <= 180,
        key + " roll bound must lie in [0, 180]");
}

}  // namespace

void validate(const ExperimentConfig& c) {
  check(c.height >= 2, "height must be >= 2");
  check(c.width == 2 * c.height, "width must equal 2 * height");
  check(c.latent_channels >= 1, "latent_channels must be >= 1");
  check(c.embedding_dim >= 1, "embedding_dim must be >= 1");
  check(c.num_classes >= 2, "num_classes must be >= 2 (Unknown included)");
  check(c.steps >= 1, "steps must be >= 1");
  check(c.k_rot >= 0 && c.k_rot <= c.steps, "k_rot must lie in [0, steps]");
  check(c.beta_min > 0 && c.beta_min <= c.beta_max && c.beta_max < 1,
        "betas must satisfy 0 < beta_min <= beta_max < 1");
  check(std::isfinite(c.lambda) && c.lambda >= 0, "lambda must be finite and >= 0");
  check(std::isfinite(c.k_d) && c.k_d > 0 && c.k_d <= 1, "k_d must lie in (0, 1]");
  check_bounds(c.contrastive_bounds, "contrastive_bounds");
  check_bounds(c.reprojection_bounds, "reprojection_bounds");
  check(c.fov_min > 0 && c.fov_min <= c.fov_max && c.fov_max < 180,
        "fov_range must satisfy 0 < min <= max < 180");
  check(std::isfinite(c.aspect) && c.aspect > 0, "aspect must be positive");
  check(c.corpus_size >= 1, "corpus_size must be >= 1");
  check(c.wavenumbers >= 1, "wavenumbers must be >= 1");
  for (int w : c.hint_widths) check(w >= 1, "hint_widths entries must be >= 1");
  check(c.encoder_hidden >= 1, "encoder_hidden must be >= 1");
  check(c.denoiser_hidden >= 1, "denoiser_hidden must be >= 1");
  check(c.train_steps >= 0, "train_steps must be >= 0");
  check(c.batch_size >= 1, "batch_size must be >= 1");
  check(std::isfinite(c.learning_rate) && c.learning_rate >= 0, "learning_rate must be >= 0");
  check(c.momentum >= 0 && c.momentum < 1, "momentum must lie in [0, 1)");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  check(doc.is_object(), "config must be a JSON object");

  ExperimentConfig c;
  static const std::set<std::string> known = {
      "height", "width", "latent_channels", "embedding_dim", "num_classes", "steps", "k_rot",
      "snap", "beta_min", "beta_max", "sampler", "lambda", "k_d", "contrastive_bounds",
      "reprojection_bounds", "fov_range", "aspect", "align_mode", "seed", "corpus_size",
      "wavenumbers", "hint_widths", "encoder_hidden", "denoiser_hidden", "activation",
      "train_steps", "batch_size", "learning_rate", "momentum", "use_siam"};
  for (const auto& [key, value] : doc.items()) check(known.contains(key), "unknown config key \"" + key + "\"");

  try {
    auto read = [&](const char* key, auto& field) {
      if (doc.contains(key)) field = doc.at(key).get<std::remove_reference_t<decltype(field)>>();
    };
    read("height", c.height);
    read("width", c.width);
    read("latent_channels", c.latent_channels);
    read("embedding_dim", c.embedding_dim);
    read("num_classes", c.num_classes);
    read("steps", c.steps);
    read("k_rot", c.k_rot);
    read("snap", c.snap);
    read("beta_min", c.beta_min);
    read("beta_max", c.beta_max);
    if (doc.contains("sampler")) c.sampler = parse_sampler(doc.at("sampler").get<std::string>());
    read("lambda", c.lambda);
    read("k_d", c.k_d);
    if (doc.contains("contrastive_bounds"))
      c.contrastive_bounds = parse_bounds(doc.at("contrastive_bounds"), "contrastive_bounds");
    if (doc.contains("reprojection_bounds"))
      c.reprojection_bounds = parse_bounds(doc.at("reprojection_bounds"), "reprojection_bounds");
    if (doc.contains("fov_range")) {
      const auto& f = doc.at("fov_range");
      check(f.is_array() && f.size() == 2, "fov_range must be [min, max]");
      c.fov_min = f[0].get<double>();
      c.fov_max = f[1].get<double>();
    }
    read("aspect", c.aspect);
    if (doc.contains("align_mode")) {
      try {
        c.align = train::parse_align_mode(doc.at("align_mode").get<std::string>());
      } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
      }
    }
    if (doc.contains("seed")) {
      const auto& s = doc.at("seed");
      check(s.is_number_unsigned() || (s.is_number_integer() && s.get<long long>() >= 0),
            "seed must be a non-negative integer");
      c.seed = s.get<std::uint64_t>();
    }
    read("corpus_size", c.corpus_size);
    read("wavenumbers", c.wavenumbers);
    if (doc.contains("hint_widths")) {
      const auto& w = doc.at("hint_widths");
      check(w.is_array() && w.size() == 4, "hint_widths must list 4 layer widths");
      for (int k = 0; k < 4; ++k) c.hint_widths[k] = w[k].get<int>();
    }
    read("encoder_hidden", c.encoder_hidden);
    read("denoiser_hidden", c.denoiser_hidden);
    if (doc.contains("activation")) {
      try {
        c.activation = nn::parse_activation(doc.at("activation").get<std::string>());
      } catch (const PreconditionError& e) {
        throw ConfigError(e.what());
      }
    }
    read("train_steps", c.train_steps);
    read("batch_size", c.batch_size);
    read("learning_rate", c.learning_rate);
    read("momentum", c.momentum);
    read("use_siam", c.use_siam);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  return parse_config(text);
}

std::string to_json(const ExperimentConfig& c) {
  json doc = {
      {"height", c.height},
      {"width", c.width},
      {"latent_channels", c.latent_channels},
      {"embedding_dim", c.embedding_dim},
      {"num_classes", c.num_classes},
      {"steps", c.steps},
      {"k_rot", c.k_rot},
      {"snap", c.snap},
      {"beta_min", c.beta_min},
      {"beta_max", c.beta_max},
      {"sampler", sampler_name(c.sampler)},
      {"lambda", c.lambda},
      {"k_d", c.k_d},
      {"contrastive_bounds", bounds_json(c.contrastive_bounds)},
      {"reprojection_bounds", bounds_json(c.reprojection_bounds)},
      {"fov_range", json::array({c.fov_min, c.fov_max})},
      {"aspect", c.aspect},
      {"align_mode", train::to_string(c.align)},
      {"seed", c.seed},
      {"corpus_size", c.corpus_size},
      {"wavenumbers", c.wavenumbers},
      {"hint_widths", c.hint_widths},
      {"encoder_hidden", c.encoder_hidden},
      {"denoiser_hidden", c.denoiser_hidden},
      {"activation", nn::to_string(c.activation)},
      {"train_steps", c.train_steps},
      {"batch_size", c.batch_size},
      {"learning_rate", c.learning_rate},
      {"momentum", c.momentum},
      {"use_siam", c.use_siam},
  };
  return doc.dump(2) + "\n";
}

train::ToyModelConfig model_config(const ExperimentConfig& c) {
  train::ToyModelConfig m;
  m.hint.in_channels = c.embedding_dim;
  m.hint.widths = c.hint_widths;
  m.hint.out_channels = c.latent_channels;
  m.hint.k_d = c.k_d;
  m.hint.activation = c.activation;
  m.encoder.in_channels = c.latent_channels;
  m.encoder.hidden = c.encoder_hidden;
  m.encoder.out_channels = c.latent_channels;
  m.encoder.activation = c.activation;
  m.encoder.head_activation = c.activation;
  m.denoiser.latent_channels = c.latent_channels;
  m.denoiser.cond_channels = c.latent_channels;
  m.denoiser.hidden = c.denoiser_hidden;
  m.denoiser.activation = c.activation;
  return m;
}

train::TrainConfig train_config(const ExperimentConfig& c) {
  train::TrainConfig t;
  t.learning_rate = c.learning_rate;
  t.momentum = c.momentum;
  t.lambda = c.lambda;
  t.contrastive_bounds = c.contrastive_bounds;
  t.align = c.align;
  t.use_siam = c.use_siam;
  return t;
}

gen::NoiseSchedule noise_schedule(const ExperimentConfig& c) {
  return gen::build_noise_schedule(c.steps, c.beta_min, c.beta_max);
}

}  // namespace sphdiff::cfg
