#include "cli.hpp"

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "sphdiff/config.hpp"
#include "sphdiff/error.hpp"
#include "sphdiff/gradient_suites.hpp"
#include "sphdiff/io.hpp"
#include "sphdiff/pipeline.hpp"
#include "sphdiff/sga_gen.hpp"
#include "sphdiff/sphere_geom.hpp"

namespace sphdiff::cli {
namespace {

constexpr double kGradcheckTolerance = 1e-4;

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Options {
  std::uint64_t seed = 0;
  std::string config;
  std::string out;

  std::string in;
  std::string data;
  std::string seg;
  std::string table;
  std::string visible;
  std::string guidance;
  std::string checkpoint;
  std::string log;
  std::string steps_log;
  std::string pgm;

  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  double fov = 90.0;
  double aspect = 2.0;
  int height = 0;
  int count = 0;
  int instances = 10;
  int k_rot = -1;
  int n = 0;
  bool analytic = false;
  bool no_sga = false;
  bool no_snap = false;
  bool stochastic = false;
  double prior_mean = 0.0;
  double prior_var = 1.0;
};

// Config from --config (or defaults) with --seed applied on top.
cfg::ExperimentConfig resolve_config(const Options& o, const CLI::App& sub) {
  cfg::ExperimentConfig c = o.config.empty() ? cfg::ExperimentConfig{} : cfg::load_config(o.config);
  if (sub.count("--seed")) c.seed = o.seed;
  return c;
}

void require_out(const Options& o) {
  if (o.out.empty()) throw CLI::RequiredError("--out");
}

int cmd_rotate(const Options& o, std::ostream& out) {
  require_out(o);
  const geom::EquirectImage image(io::load_tensor(o.in));
  const auto rotated = geom::rotate_image(image, {o.yaw, o.pitch, o.roll});
  io::save_tensor(o.out, rotated.tensor());
  out << "wrote " << o.out << "\n";
  return kOk;
}

int cmd_nfov_mask(const Options& o, const cfg::ExperimentConfig& c, std::ostream& out) {
  require_out(o);
  const int h = o.height > 0 ? o.height : c.height;
  geom::NfovSpec spec;
  spec.fov_h_deg = o.fov;
  spec.aspect = o.aspect;
  spec.viewpoint = {o.yaw, o.pitch, o.roll};
  const BinaryMask mask = geom::nfov_mask(geom::ErpGrid(h, 2 * h), spec);
  io::save_mask(o.out, mask);
  out << "wrote " << o.out << " (" << mask.count() << " visible pixels)\n";
  return kOk;
}

int cmd_encode(const Options& o, std::ostream& out) {
  require_out(o);
  const auto table = io::load_embedding_table(o.table);
  auto seg = io::load_segmentation(o.seg, table.num_classes(), table.unknown_index());
  if (!o.visible.empty()) seg = drse::fill_unknown(seg, io::load_mask(o.visible));
  const int h = o.height > 0 ? o.height : seg.height();
  const auto small = drse::downsample_seg(seg, h, 2 * h);
  io::save_tensor(o.out, drse::pixel_embedding(drse::masks_from_seg(small), table));
  out << "wrote " << o.out << "\n";
  return kOk;
}

int cmd_augment(const Options& o, const cfg::ExperimentConfig& c, std::ostream& out) {
  require_out(o);
  const pipeline::Dataset in = pipeline::load_dataset(o.data);
  pipeline::Dataset result{{}, in.table};
  std::vector<geom::RotationAngles> angles;
  for (std::size_t k = 0; k < in.items.size(); ++k) {
    auto pair = train::spherical_reprojection(in.items[k].panorama, in.items[k].seg,
                                              c.reprojection_bounds, derive_seed(c.seed, k));
    angles.push_back(pair.angles);
    result.items.push_back({std::move(pair.image), std::move(pair.seg)});
  }
  pipeline::save_dataset(o.out, result, &angles);
  out << "wrote " << result.items.size() << " reprojected pairs to " << o.out << "\n";
  return kOk;
}

int cmd_synth_data(const Options& o, cfg::ExperimentConfig c, const CLI::App& sub, std::ostream& out) {
  require_out(o);
  if (sub.count("--count")) c.corpus_size = o.count;
  cfg::validate(c);
  const auto dataset = pipeline::synth_dataset(c);
  pipeline::save_dataset(o.out, dataset);
  out << "wrote " << dataset.items.size() << " panoramas to " << o.out << "\n";
  return kOk;
}

int cmd_train(const Options& o, const cfg::ExperimentConfig& c, std::ostream& out) {
  require_out(o);
  const pipeline::Dataset dataset = o.data.empty() ? pipeline::synth_dataset(c) : pipeline::load_dataset(o.data);
  std::string csv = "step,L_c,L_siam,L_all\n";
  train::LossBreakdown last;
  auto state = pipeline::train_toy(c, dataset, [&](const pipeline::LogRow& row) {
    csv += std::to_string(row.step) + "," + fmt(row.losses.control) + "," + fmt(row.losses.siam) + "," +
           fmt(row.losses.total) + "\n";
    last = row.losses;
  });
  io::write_file_atomic(o.out, io::encode_checkpoint(pipeline::checkpoint_of(c, state.model)));
  const std::string log = o.log.empty() ? o.out + ".loss.csv" : o.log;
  io::write_file_atomic(log, csv);
  out << "trained " << state.step << " steps, final L_all " << fmt(last.total) << "\n"
      << "wrote " << o.out << " and " << log << "\n";
  return kOk;
}

int cmd_generate(const Options& o, cfg::ExperimentConfig c, const CLI::App& sub, std::ostream& out) {
  require_out(o);
  if (o.analytic == !o.checkpoint.empty())
    throw CLI::ValidationError("generate", "give exactly one of --checkpoint and --analytic");

  std::optional<train::ToyModel> model;
  if (!o.checkpoint.empty()) {
    cfg::ExperimentConfig stored;
    model = pipeline::model_from_checkpoint(io::decode_checkpoint(io::read_file(o.checkpoint)), &stored);
    // Architecture and grid come from the checkpoint; sampling settings from --config.
    if (!o.config.empty()) {
      stored.steps = c.steps;
      stored.k_rot = c.k_rot;
      stored.snap = c.snap;
      stored.sampler = c.sampler;
      stored.beta_min = c.beta_min;
      stored.beta_max = c.beta_max;
    }
    if (!o.config.empty() || sub.count("--seed")) stored.seed = c.seed;
    c = stored;
  }
  if (sub.count("--n")) c.steps = o.n;
  if (sub.count("--k-rot")) c.k_rot = o.k_rot;
  if (o.no_snap) c.snap = false;
  if (o.stochastic) c.sampler = gen::SamplerMode::kStochastic;
  cfg::validate(c);

  std::optional<Tensor> guidance;
  if (!o.guidance.empty()) guidance = io::load_tensor(o.guidance);

  gen::SampleTrace trace;
  Tensor image;
  if (model) {
    if (guidance && guidance->channels() != c.embedding_dim)
      throw PreconditionError("guidance has " + std::to_string(guidance->channels()) +
                              " channels, the model expects " + std::to_string(c.embedding_dim));
    train::ToyModelDenoiser denoiser(*model);
    image = pipeline::generate(denoiser, c, !o.no_sga, c.seed, guidance ? &*guidance : nullptr, &trace);
  } else {
    gen::AnalyticGaussianDenoiser denoiser(std::vector<double>(c.latent_channels, o.prior_mean), o.prior_var);
    image = pipeline::generate(denoiser, c, !o.no_sga, c.seed, guidance ? &*guidance : nullptr, &trace);
  }
  io::save_tensor(o.out, image);

  std::ostringstream log;
  log << "steps " << c.steps << " k_rot " << (o.no_sga ? 0 : c.k_rot) << "\n";
  for (const auto& e : trace.events)
    log << "rotate step " << e.step << " yaw " << fmt(e.angle_deg) << " cumulative " << fmt(e.cumulative_deg)
        << "\n";
  log << "total_rotation " << fmt(trace.total_rotation_deg) << "\n"
      << "frame_correction " << fmt(trace.frame_correction_deg) << "\n";
  const std::string steps_log = o.steps_log.empty() ? o.out + ".steps.log" : o.steps_log;
  io::write_file_atomic(steps_log, log.str());
  if (!o.pgm.empty()) {
    double lo = image.values()[0], hi = lo;
    for (double v : image.values()) lo = std::min(lo, v), hi = std::max(hi, v);
    io::save_pgm(o.pgm, image, 0, lo, hi > lo ? hi : lo + 1.0);
  }
  const auto seam = gen::seam_metric(image);
  out << "wrote " << o.out << " and " << steps_log << " (seam ratio " << fmt(seam.ratio) << ")\n";
  return kOk;
}

int cmd_seam(const Options& o, std::ostream& out) {
  const auto m = gen::seam_metric(io::load_tensor(o.in));
  const std::string line = fmt(m.seam) + "," + fmt(m.interior) + "," + fmt(m.ratio) + "\n";
  out << line;
  if (!o.out.empty()) io::write_file_atomic(o.out, "seam,interior,ratio\n" + line);
  return kOk;
}

int cmd_gradcheck(const Options& o, const cfg::ExperimentConfig& c, std::ostream& out) {
  const auto results = gradcheck::run_all_suites(o.instances, c.seed);
  std::ostringstream report;
  bool ok = true;
  for (const auto& r : results) {
    const bool pass = r.max_relative_error < kGradcheckTolerance;
    ok = ok && pass;
    report << r.name << " instances " << r.instances << " max_relative_error " << fmt(r.max_relative_error)
           << " (" << r.worst_block << ") " << (pass ? "ok" : "FAIL") << "\n";
  }
  out << report.str();
  if (!o.out.empty()) io::write_file_atomic(o.out, report.str());
  return ok ? kOk : kCheckFailed;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rotation-aware panorama diffusion toolkit"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--seed", o.seed, "Random seed (overrides the config)");
    sub->add_option("--config", o.config, "Experiment config JSON");
    sub->add_option("--out", o.out, "Output path");
    return sub;
  };
  auto angles = [&](CLI::App* sub) {
    sub->add_option("--yaw", o.yaw, "Yaw in degrees");
    sub->add_option("--pitch", o.pitch, "Pitch in degrees");
    sub->add_option("--roll", o.roll, "Roll in degrees");
  };

  auto* rotate = common(app.add_subcommand("rotate", "Rotate a panorama tensor"));
  rotate->add_option("--in", o.in, "Input tensor")->required();
  angles(rotate);

  auto* nfov = common(app.add_subcommand("nfov-mask", "Visibility mask of a perspective view"));
  nfov->add_option("--height", o.height, "Panorama height (width = 2 * height)");
  nfov->add_option("--fov", o.fov, "Horizontal field of view in degrees");
  nfov->add_option("--aspect", o.aspect, "Image-plane aspect ratio");
  angles(nfov);

  auto* encode = common(app.add_subcommand("encode", "Per-pixel label embedding of a class map"));
  encode->add_option("--seg", o.seg, "Class-id tensor")->required();
  encode->add_option("--table", o.table, "Embedding table")->required();
  encode->add_option("--visible", o.visible, "Visibility mask; hidden pixels become Unknown");
  encode->add_option("--height", o.height, "Output height (default: class map height)");

  auto* augment = common(app.add_subcommand("augment", "Random spherical reprojection of a dataset"));
  augment->add_option("--data", o.data, "Dataset directory")->required();

  auto* train_cmd = common(app.add_subcommand("train-toy", "Train the toy control model"));
  train_cmd->add_option("--data", o.data, "Dataset directory (default: synthetic corpus)");
  train_cmd->add_option("--log", o.log, "Loss CSV (default: <out>.loss.csv)");

  auto* generate = common(app.add_subcommand("generate", "Sample a panorama"));
  generate->add_option("--checkpoint", o.checkpoint, "Trained toy model");
  generate->add_flag("--analytic", o.analytic, "Use the closed-form Gaussian denoiser");
  generate->add_option("--prior-mean", o.prior_mean, "Analytic prior mean");
  generate->add_option("--prior-var", o.prior_var, "Analytic prior variance");
  generate->add_option("--guidance", o.guidance, "Per-pixel embedding tensor");
  generate->add_option("--k-rot", o.k_rot, "Rotation events");
  generate->add_option("--n", o.n, "Denoising steps");
  generate->add_flag("--no-sga", o.no_sga, "Disable rotation events");
  generate->add_flag("--no-snap", o.no_snap, "Do not snap the angle to whole columns");
  generate->add_flag("--stochastic", o.stochastic, "Ancestral sampling instead of deterministic");
  generate->add_option("--steps-log", o.steps_log, "Step log (default: <out>.steps.log)");
  generate->add_option("--pgm", o.pgm, "Also write channel 0 as an 8-bit PGM");

  auto* seam = common(app.add_subcommand("seam", "Seam continuity metric as CSV"));
  seam->add_option("--in", o.in, "Image tensor")->required();

  auto* gradcheck_cmd = common(app.add_subcommand("gradcheck", "Finite-difference gradient suites"));
  gradcheck_cmd->add_option("--instances", o.instances, "Random instances per suite");

  auto* synth = common(app.add_subcommand("synth-data", "Write a synthetic dataset"));
  synth->add_option("--count", o.count, "Number of panoramas (default: corpus_size)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (*rotate) return cmd_rotate(o, out);
    if (*seam) return cmd_seam(o, out);
    if (*encode) return cmd_encode(o, out);
    const CLI::App& sub = *app.get_subcommands().front();
    const cfg::ExperimentConfig c = resolve_config(o, sub);
    if (*nfov) return cmd_nfov_mask(o, c, out);
    if (*augment) return cmd_augment(o, c, out);
    if (*train_cmd) return cmd_train(o, c, out);
    if (*generate) return cmd_generate(o, c, sub, out);
    if (*gradcheck_cmd) return cmd_gradcheck(o, c, out);
    if (*synth) return cmd_synth_data(o, c, sub, out);
    return kUsage;
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const FormatError& e) {
    err << "malformed file: " << e.what() << "\n";
    return kBadFile;
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << "\n";
    return kBadConfig;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kBadInput;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternal;
  }
}

}  // namespace sphdiff::cli
