// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "sphdiff/ddab.hpp"
#include "sphdiff/drse.hpp"
#include "sphdiff/gradient_suites.hpp"
#include "sphdiff/io.hpp"
#include "sphdiff/pipeline.hpp"
#include "sphdiff/rng.hpp"
#include "sphdiff/sga_gen.hpp"
#include "sphdiff/sga_train.hpp"
#include "sphdiff/sphere_geom.hpp"

using namespace sphdiff;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return 0.5 * (v[v.size() / 2] + v[(v.size() - 1) / 2]);
}

Tensor random_tensor(Shape s, Rng& rng) {
  Tensor t(s);
  for (double& v : t.values()) v = rng.uniform(-1, 1);
  return t;
}

Outcome schedule_arithmetic() {
  const auto t0 = Clock::now();
  const auto steps = gen::select_rotation_steps(50, 4);
  const double angle = gen::rotation_angle(4, 64, true);
  const double ms = seconds_since(t0) * 1e3;
  const bool ok = steps == std::vector<int>{10, 20, 30, 40} && angle == 90.0 && ms < 1.0;
  std::ostringstream d;
  d << "steps {";
  for (std::size_t k = 0; k < steps.size(); ++k) d << (k ? "," : "") << steps[k];
  d << "} angle " << angle << " in " << ms << " ms";
  return {ok, d.str()};
}

Outcome geometry_exactness() {
  const auto t0 = Clock::now();
  Rng rng(2);
  bool shifts = true;
  for (int w : {16, 64}) {
    const geom::EquirectImage image(random_tensor({2, w / 2, w}, rng));
    for (int k = 0; k < w; ++k) {
      const auto rotated = geom::rotate_image(image, {k * (360.0 / w), 0.0, 0.0});
      shifts = shifts && rotated.tensor() == geom::yaw_shift(image.tensor(), k);
    }
  }
  double worst_orth = 0.0, worst_det = 0.0;
  for (int n = 0; n < 1000; ++n) {
    const auto r = geom::rotation_matrix({rng.uniform(-720, 720), rng.uniform(-720, 720), rng.uniform(-720, 720)});
    worst_orth = std::max(worst_orth, r.orthonormality_error());
    worst_det = std::max(worst_det, std::abs(r.determinant() - 1.0));
  }
  const double s = seconds_since(t0);
  std::ostringstream d;
  d << "shift identity " << (shifts ? "exact" : "broken") << ", max |RR^T-I| " << worst_orth << ", max |det-1| "
    << worst_det << " in " << s << " s";
  return {shifts && worst_orth < 1e-12 && worst_det < 1e-12 && s < 5.0, d.str()};
}

Outcome drse_correctness() {
  const auto t0 = Clock::now();
  Rng rng(3);
  bool lookup = true, partition = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int classes = rng.uniform_int(2, 10);
    const int dim = rng.uniform_int(1, 8);
    std::vector<std::string> labels;
    for (int k = 0; k + 1 < classes; ++k) labels.push_back(drse::prompt_template("class " + std::to_string(k)));
    labels.push_back(drse::prompt_template(drse::kUnknownLabel));
    std::vector<double> columns(static_cast<std::size_t>(dim) * classes);
    for (double& v : columns) v = rng.uniform(-3, 3);
    const drse::LabelEmbeddingTable table(dim, labels, columns);
    const int h = rng.uniform_int(1, 12), w = rng.uniform_int(1, 24);
    std::vector<int> ids(static_cast<std::size_t>(h) * w);
    for (int& id : ids) id = rng.uniform_int(0, classes - 1);
    const drse::SegmentationMap seg(h, w, ids, classes, classes - 1);
    const auto masks = drse::masks_from_seg(seg);
    partition = partition && masks.is_partition();
    const Tensor e = drse::pixel_embedding(masks, table);
    for (int i = 0; i < h; ++i)
      for (int j = 0; j < w; ++j)
        for (int c = 0; c < dim; ++c) lookup = lookup && e(c, i, j) == columns[seg(i, j) * dim + c];
  }
  const double s = seconds_since(t0);
  std::ostringstream d;
  d << "lookup " << (lookup ? "exact" : "mismatch") << ", partition " << (partition ? "holds" : "violated")
    << " on 100 pairs in " << s << " s";
  return {lookup && partition && s < 5.0, d.str()};
}

Outcome gradient_suites() {
  const auto t0 = Clock::now();
  const auto results = gradcheck::run_all_suites(10, 2024);
  const double s = seconds_since(t0);
  bool ok = s < 60.0;
  std::ostringstream d;
  for (const auto& r : results) {
    ok = ok && r.instances >= 10 && r.max_relative_error < 1e-4;
    d << r.name << " " << r.max_relative_error << ", ";
  }
  d << "in " << s << " s";
  return {ok, d.str()};
}

Outcome zero_init_control() {
  Rng rng(5);
  const auto block = ddab::HintBlock::initialized(ddab::HintBlockConfig{}, rng);
  bool zero = true;
  for (int trial = 0; trial < 10; ++trial) {
    Tensor e = random_tensor({16, 32, 64}, rng);
    e *= std::pow(10.0, trial - 3);
    const Tensor out = block.forward(e);
    for (double v : out.values()) zero = zero && v == 0.0;
  }
  return {zero, zero ? "output exactly zero on 10 inputs" : "nonzero output"};
}

Outcome sga_equivariance() {
  const auto t0 = Clock::now();
  const auto schedule = gen::build_noise_schedule(50);
  const gen::AnalyticGaussianDenoiser d({0.3, -0.2, 0.0, 0.5}, 0.7);
  const Shape shape{4, 32, 64};
  const auto sga = gen::make_sga_schedule(50, 4, 64, true);
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const gen::SamplerConfig sc{gen::SamplerMode::kDeterministic, seed, false};
    const Tensor base = gen::sga_sample(d, schedule, gen::SgaSchedule{}, sc, shape, nullptr);
    const Tensor rotated = gen::sga_sample(d, schedule, sga, sc, shape, nullptr);
    worst = std::max(worst, max_abs_diff(base, rotated));
  }
  const double s = seconds_since(t0);
  std::ostringstream d2;
  d2 << "max |SGA - baseline| " << worst << " over 5 seeds in " << s << " s";
  return {worst <= 1e-9 && s < 10.0, d2.str()};
}

Outcome seam_direction() {
  const auto t0 = Clock::now();
  cfg::ExperimentConfig c;  // H = 32, W = 64
  c.latent_channels = 1;
  c.embedding_dim = 4;
  c.num_classes = 5;
  c.hint_widths = {4, 4, 8, 8};
  c.encoder_hidden = 4;
  c.denoiser_hidden = 16;
  c.train_steps = 1000;
  c.batch_size = 4;
  c.learning_rate = 1e-2;
  c.momentum = 0.9;
  c.corpus_size = 32;
  c.wavenumbers = 3;
  c.seed = 7;
  const auto data = pipeline::synth_dataset(c);
  const auto state = pipeline::train_toy(c, data);
  const train::ToyModelDenoiser denoiser(state.model);
  std::vector<double> with, without;
  for (int s = 0; s < 20; ++s) {
    const Tensor g = pipeline::guidance_embedding(data.items[s % data.items.size()].seg, data.table, c);
    without.push_back(gen::seam_metric(pipeline::generate(denoiser, c, false, 1000 + s, &g)).ratio);
    with.push_back(gen::seam_metric(pipeline::generate(denoiser, c, true, 1000 + s, &g)).ratio);
  }
  const double mw = median(with), mo = median(without);
  const double s = seconds_since(t0);
  std::ostringstream d;
  d << "median seam ratio with SGA " << mw << ", without " << mo << " (" << c.train_steps
    << " training steps, 20 seeds) in " << s << " s";
  return {mw < mo && s < 900.0, d.str()};
}

Outcome loss_composition() {
  Rng rng(8);
  bool composed = true;
  for (int n = 0; n < 100; ++n) {
    const double lc = rng.uniform(0, 5), ls = rng.uniform(-1, 1);
    composed = composed && train::total_loss(lc, ls, 0.1).total == lc + 0.1 * ls;
  }
  train::ControlEncoderConfig config;
  config.in_channels = 3;
  config.hidden = 4;
  config.out_channels = 3;
  double lo = 1.0, hi = -1.0;
  for (int n = 0; n < 1000; ++n) {
    const auto encoder = train::ControlEncoder::initialized(config, rng);
    const Tensor control = random_tensor({3, 4, 8}, rng);
    const auto mode = n % 2 ? train::AlignMode::kLiteral : train::AlignMode::kInverse;
    const double l = train::simsiam_loss(encoder, control, train::RotationBounds{360, 10, 10}, n, mode).loss;
    lo = std::min(lo, l);
    hi = std::max(hi, l);
  }
  config.head_activation = nn::Activation::kIdentity;
  auto same = train::ControlEncoder::initialized(config, rng);
  same.set_identity_head();
  const double identical =
      train::simsiam_loss(same, random_tensor({3, 8, 16}, rng), geom::RotationAngles{}, train::AlignMode::kInverse)
          .loss;
  std::ostringstream d;
  d << "composition " << (composed ? "exact" : "off") << ", L_siam range [" << lo << ", " << hi
    << "], identical branches " << identical;
  return {composed && lo >= -1.0 && hi <= 1.0 && identical == -1.0, d.str()};
}

// Runs every CLI command into `dir`; returns false if any command fails.
bool run_cli_suite(const fs::path& dir) {
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string d = dir.string() + "/";
  io::write_file_atomic(d + "config.json", R"({"height": 16, "width": 32, "latent_channels": 1, "embedding_dim": 4,
    "num_classes": 5, "steps": 20, "hint_widths": [4, 4, 8, 8], "encoder_hidden": 4, "denoiser_hidden": 4,
    "train_steps": 5, "batch_size": 2, "corpus_size": 3, "seed": 11})");
  const std::string cfgp = d + "config.json";
  const std::vector<std::vector<std::string>> commands = {
      {"synth-data", "--config", cfgp, "--out", d + "data"},
      {"augment", "--config", cfgp, "--data", d + "data", "--out", d + "aug"},
      {"rotate", "--in", d + "data/panorama_0000.sdtf", "--yaw", "33", "--pitch", "7", "--roll", "-4", "--out",
       d + "rot.sdtf"},
      {"nfov-mask", "--height", "16", "--fov", "90", "--yaw", "40", "--pitch", "10", "--out", d + "mask.sdtf"},
      {"encode", "--seg", d + "data/segmap_0000.sdtf", "--table", d + "data/table.sdet", "--visible",
       d + "mask.sdtf", "--out", d + "emb.sdtf"},
      {"train-toy", "--config", cfgp, "--data", d + "aug", "--out", d + "model.ckpt"},
      {"generate", "--checkpoint", d + "model.ckpt", "--guidance", d + "emb.sdtf", "--out", d + "gen.sdtf"},
      {"generate", "--checkpoint", d + "model.ckpt", "--config", cfgp, "--stochastic", "--seed", "5", "--out",
       d + "gen_stoch.sdtf"},
      {"generate", "--analytic", "--config", cfgp, "--k-rot", "3", "--no-snap", "--out", d + "analytic.sdtf",
       "--pgm", d + "analytic.pgm"},
      {"seam", "--in", d + "gen.sdtf", "--out", d + "seam.csv"},
      {"gradcheck", "--instances", "1", "--seed", "3", "--out", d + "gradcheck.txt"},
  };
  for (const auto& args : commands) {
    std::ostringstream out, err;
    if (cli::run(args, out, err) != cli::kOk) {
      std::fprintf(stderr, "command %s failed: %s\n", args[0].c_str(), err.str().c_str());
      return false;
    }
  }
  return true;
}

std::map<std::string, std::string> tree_contents(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file()) files[fs::relative(entry.path(), dir).string()] = io::read_file(entry.path());
  return files;
}

Outcome reproducibility() {
  const fs::path a = fs::current_path() / "acceptance_run_a";
  const fs::path b = fs::current_path() / "acceptance_run_b";
  if (!run_cli_suite(a) || !run_cli_suite(b)) return {false, "a CLI command failed"};
  auto fa = tree_contents(a), fb = tree_contents(b);
  // The config file is an input, and paths inside logs differ by directory; compare everything else.
  std::size_t compared = 0;
  std::vector<std::string> differing;
  for (auto& [name, bytes] : fa) {
    if (name == "config.json") continue;
    ++compared;
    auto it = fb.find(name);
    if (it == fb.end() || it->second != bytes) differing.push_back(name);
  }
  const bool ok = differing.empty() && fa.size() == fb.size() && compared >= 20;
  std::ostringstream d;
  d << compared << " artifacts compared, " << differing.size() << " differ";
  for (const auto& n : differing) d << " " << n;
  return {ok, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"schedule arithmetic", schedule_arithmetic},
      {"geometry exactness", geometry_exactness},
      {"semantic encoding correctness", drse_correctness},
      {"gradient suites", gradient_suites},
      {"zero-init control", zero_init_control},
      {"rotation equivariance oracle", sga_equivariance},
      {"seam connectivity direction", seam_direction},
      {"loss composition and SimSiam range", loss_composition},
      {"CLI reproducibility", reproducibility},
  };
  int failures = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    Outcome o{false, ""};
    try {
      o = criteria[k].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s criterion %zu (%s): %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
