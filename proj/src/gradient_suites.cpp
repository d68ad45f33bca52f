#include "sphdiff/gradient_suites.hpp"

#include <cmath>

#include "sphdiff/ddab.hpp"
#include "sphdiff/error.hpp"
#include "sphdiff/gradcheck.hpp"
#include "sphdiff/rng.hpp"
#include "sphdiff/sga_train.hpp"

namespace sphdiff::gradcheck {
namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

double weighted_sum(const Tensor& out, const Tensor& weights) { return dot(out.values(), weights.values()); }

void record(SuiteResult& result, int instance, const std::vector<BlockError>& errors) {
  for (const auto& e : errors) {
    if (e.relative_error > result.max_relative_error || result.worst_block.empty()) {
      result.max_relative_error = std::max(result.max_relative_error, e.relative_error);
      result.worst_block = "instance " + std::to_string(instance) + ": " + e.name;
    }
  }
  ++result.instances;
}

// Bilinear sampling has kinks where a sampling position crosses an integer and
// the clamp has kinks at its limits. Instances with an offset closer than
// `margin` to either are not differentiable at the finite-difference scale.
bool offsets_clear_of_kinks(const ddab::DeformConv2d& layer, const Tensor& in, double margin) {
  const Tensor raw = layer.offset_predictor().forward(in);
  for (int c = 0; c < raw.channels(); ++c) {
    const double limit = layer.k_d() * (c % 2 == 0 ? in.height() : in.width());
    for (double v : raw.plane(c)) {
      if (std::abs(std::abs(v) - limit) < margin) return false;
      if (std::abs(v) < limit && std::abs(v - std::round(v)) < margin) return false;
    }
  }
  return true;
}

Tensor deform_input(const ddab::HintBlock& block, const Tensor& embedding) {
  Tensor x = embedding;
  for (int l = 0; l < 3; ++l) x = nn::activate(block.config().activation, block.conv(l).forward(x));
  return x;
}

constexpr double kKinkMargin = 1e-3;
constexpr int kMaxDraws = 100;

template <typename Body>
SuiteResult run(const std::string& name, int instances, std::uint64_t seed, Body body) {
  require(instances >= 1, "a gradient suite needs at least one instance");
  SuiteResult result;
  result.name = name;
  for (int k = 0; k < instances; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    record(result, k, body(k, rng));
  }
  return result;
}

}  // namespace

SuiteResult deform_conv_suite(int instances, std::uint64_t seed) {
  return run("deform_conv", instances, seed, [](int k, Rng& rng) {
    const bool saturate = k % 2 == 1;
    const int h = 4 + k % 3;
    const int w = 6;
    ddab::DeformConv2d layer;
    Tensor in;
    for (int draw = 0;; ++draw) {
      require(draw < kMaxDraws, "no deformable instance clear of sampling kinks");
      layer = ddab::DeformConv2d(2, 3, 3, saturate ? 0.05 : 0.4);
      layer.init_uniform(rng, 0.5);
      if (saturate) {
        // Every other offset channel sits far past the clamp.
        auto& bias = layer.offset_predictor().bias();
        for (std::size_t c = 0; c < bias.size(); c += 2) bias[c] = rng.uniform() < 0.5 ? -3.0 : 3.0;
      }
      in = random_tensor({2, h, w}, rng);
      if (offsets_clear_of_kinks(layer, in, kKinkMargin)) break;
    }
    const Tensor weights = random_tensor(layer.forward(in).shape(), rng);

    std::vector<nn::NamedParams> params, analytic;
    layer.collect("deform", params);
    params.push_back({"input", in.values()});
    ddab::DeformConv2d grad = layer.zeros_like();
    Tensor grad_in = layer.backward(in, weights, grad);
    grad.collect("deform", analytic);
    analytic.push_back({"input", grad_in.values()});
    return compare([&] { return weighted_sum(layer.forward(in), weights); }, params, analytic);
  });
}

SuiteResult hint_block_suite(int instances, std::uint64_t seed) {
  return run("hint_block", instances, seed, [](int k, Rng& rng) {
    ddab::HintBlockConfig config;
    config.in_channels = 3;
    config.widths = {3, 3, 4, 4};
    config.out_channels = 2;
    config.k_d = k % 2 == 0 ? 0.2 : 0.05;
    ddab::HintBlock block;
    Tensor e;
    for (int draw = 0;; ++draw) {
      require(draw < kMaxDraws, "no hint block instance clear of sampling kinks");
      block = ddab::HintBlock::initialized(config, rng);
      block.deform().init_uniform(rng, 2.0);
      e = random_tensor({3, 4, 8}, rng);
      if (offsets_clear_of_kinks(block.deform(), deform_input(block, e), kKinkMargin)) break;
    }
    // A zero output layer would hide every upstream gradient.
    block.zero_conv().init_uniform(rng);
    const Tensor weights = random_tensor({2, 4, 8}, rng);

    auto params = block.parameters();
    params.push_back({"input", e.values()});
    ddab::HintBlock grad = block.zeros_like();
    Tensor grad_e = block.backward(e, weights, grad);
    auto analytic = grad.parameters();
    analytic.push_back({"input", grad_e.values()});
    return compare([&] { return weighted_sum(block.forward(e), weights); }, params, analytic);
  });
}

SuiteResult simsiam_suite(int instances, std::uint64_t seed) {
  return run("simsiam", instances, seed, [](int k, Rng& rng) {
    train::ControlEncoderConfig config;
    config.in_channels = 2;
    config.hidden = 3;
    config.out_channels = 2;
    train::ControlEncoder encoder = train::ControlEncoder::initialized(config, rng);
    const Tensor control = random_tensor({2, 4, 8}, rng);
    const auto mode = k % 2 == 0 ? train::AlignMode::kInverse : train::AlignMode::kLiteral;
    const auto angles = train::sample_rotation({360.0, 30.0, 30.0}, rng.next_u64());

    train::SiamResult at = train::simsiam_loss(encoder, control, angles, mode);
    const train::SiamTargets frozen = at.targets;
    auto params = encoder.parameters();
    auto analytic = at.grad.parameters();
    return compare([&] { return train::simsiam_loss(encoder, control, angles, mode, &frozen).loss; },
                   params, analytic);
  });
}

SuiteResult eps_loss_suite(int instances, std::uint64_t seed) {
  return run("eps_loss", instances, seed, [](int, Rng& rng) {
    train::DenoiserConfig config;
    config.latent_channels = 2;
    config.cond_channels = 2;
    config.hidden = 3;
    train::ToyDenoiser denoiser = train::ToyDenoiser::initialized(config, rng);
    const auto schedule = gen::build_noise_schedule(50);
    const int t = rng.uniform_int(1, 50);
    const Tensor z0 = random_tensor({2, 4, 8}, rng);
    Tensor cond = random_tensor({2, 4, 8}, rng);
    Tensor noise(Shape{2, 4, 8});
    for (double& v : noise.values()) v = rng.normal();

    train::EpsLossResult at = train::diffusion_eps_loss(denoiser, z0, t, cond, noise, schedule);
    auto params = denoiser.parameters();
    params.push_back({"cond", cond.values()});
    auto analytic = at.grad.parameters();
    analytic.push_back({"cond", at.grad_cond.values()});
    return compare(
        [&] { return train::diffusion_eps_loss(denoiser, z0, t, cond, noise, schedule).loss; },
        params, analytic);
  });
}

SuiteResult control_path_suite(int instances, std::uint64_t seed) {
  return run("control_path", instances, seed, [](int, Rng& rng) {
    train::ToyModelConfig config;
    config.hint.in_channels = 3;
    config.hint.widths = {2, 2, 3, 3};
    config.hint.out_channels = 2;
    config.encoder.in_channels = 2;
    config.encoder.hidden = 2;
    config.encoder.out_channels = 2;
    config.denoiser.latent_channels = 2;
    config.denoiser.cond_channels = 2;
    config.denoiser.hidden = 3;
    train::ToyModel model;
    std::vector<train::TrainSample> batch;
    for (int draw = 0;; ++draw) {
      require(draw < kMaxDraws, "no toy model instance clear of sampling kinks");
      model = train::make_toy_model(config, rng.next_u64());
      model.hint.deform().init_uniform(rng, 2.0);
      batch.clear();
      bool clear = true;
      for (int b = 0; b < 2; ++b) {
        batch.push_back({random_tensor({2, 4, 8}, rng), random_tensor({3, 4, 8}, rng)});
        clear = clear && offsets_clear_of_kinks(model.hint.deform(), deform_input(model.hint, batch.back().embedding),
                                                kKinkMargin);
      }
      if (clear) break;
    }
    // Default gains leave the deepest gradients near the roundoff floor of
    // the central difference.
    model.hint.zero_conv().init_uniform(rng, 4.0);
    for (int l = 0; l < 2; ++l) model.encoder.conv(l).init_uniform(rng, 3.0);
    const auto schedule = gen::build_noise_schedule(50);
    train::TrainConfig tc;
    tc.use_siam = false;
    const std::uint64_t step_seed = rng.next_u64();

    train::StepResult at = train::evaluate_batch(model, batch, schedule, tc, step_seed);
    auto params = model.parameters();
    auto analytic = at.grad.parameters();
    return compare(
        [&] { return train::evaluate_batch(model, batch, schedule, tc, step_seed).losses.total; },
        params, analytic);
  });
}

std::vector<SuiteResult> run_all_suites(int instances, std::uint64_t seed) {
  return {deform_conv_suite(instances, derive_seed(seed, 1)),
          hint_block_suite(instances, derive_seed(seed, 2)),
          simsiam_suite(instances, derive_seed(seed, 3)),
          eps_loss_suite(instances, derive_seed(seed, 4)),
          control_path_suite(instances, derive_seed(seed, 5))};
}

}  // namespace sphdiff::gradcheck
