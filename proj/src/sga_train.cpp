#include "sphdiff/sga_train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "sphdiff/error.hpp"
#include "sphdiff/rng.hpp"

namespace sphdiff::train {
namespace {

void add_scaled(std::span<const NamedParams> dst, std::span<const NamedParams> src, double factor) {
  require(dst.size() == src.size(), "parameter block count mismatch");
  for (std::size_t b = 0; b < dst.size(); ++b) {
    require(dst[b].values.size() == src[b].values.size(), "parameter block size mismatch");
    for (std::size_t k = 0; k < dst[b].values.size(); ++k)
      dst[b].values[k] += factor * src[b].values[k];
  }
}

bool all_finite(std::span<const NamedParams> blocks) {
  for (const auto& b : blocks)
    for (double v : b.values)
      if (!std::isfinite(v)) return false;
  return true;
}

double norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

}  // namespace

RotationAngles sample_rotation(const RotationBounds& bounds, std::uint64_t seed) {
  require(bounds.yaw >= 0.0 && bounds.pitch >= 0.0 && bounds.roll >= 0.0,
          "rotation bounds must be non-negative");
  Rng rng(seed);
  RotationAngles a;
  a.yaw = rng.uniform(0.0, bounds.yaw);
  a.pitch = rng.uniform(-bounds.pitch, bounds.pitch);
  a.roll = rng.uniform(-bounds.roll, bounds.roll);
  return a;
}

drse::SegmentationMap rotate_segmentation(const drse::SegmentationMap& seg,
                                          const RotationAngles& angles) {
  const geom::ErpGrid grid(seg.height(), seg.width());
  const auto source = geom::rotation_source_map(grid, angles);
  std::vector<int> ids(source.size());
  for (std::size_t p = 0; p < source.size(); ++p) ids[p] = seg.ids()[source[p]];
  return drse::SegmentationMap(seg.height(), seg.width(), std::move(ids), seg.num_classes(),
                               seg.unknown_id());
}

ReprojectedPair spherical_reprojection(const geom::EquirectImage& image,
                                       const drse::SegmentationMap& seg,
                                       const RotationBounds& bounds, std::uint64_t seed) {
  require(image.grid() == geom::ErpGrid(seg.height(), seg.width()),
          "panorama and segmentation map must share a grid");
  const RotationAngles angles = sample_rotation(bounds, seed);
  const auto source = geom::rotation_source_map(image.grid(), angles);
  std::vector<int> ids(source.size());
  for (std::size_t p = 0; p < source.size(); ++p) ids[p] = seg.ids()[source[p]];
  return {geom::EquirectImage(geom::gather_pixels(image.tensor(), source)),
          drse::SegmentationMap(seg.height(), seg.width(), std::move(ids), seg.num_classes(),
                                seg.unknown_id()),
          angles};
}

double neg_cosine(std::span<const double> p, std::span<const double> z) {
  const double pp = dot(p, p);
  const double zz = dot(z, z);
  require(pp > 0.0 && zz > 0.0, "cosine similarity of a zero vector is undefined");
  // sqrt(pp * pp) == pp exactly, so identical inputs give exactly -1.
  const double d = -dot(p, z) / std::sqrt(pp * zz);
  return std::clamp(d, -1.0, 1.0);
}

std::vector<double> neg_cosine_grad(std::span<const double> p, std::span<const double> z) {
  const double np = norm(p);
  const double nz = norm(z);
  require(np > 0.0 && nz > 0.0, "cosine similarity of a zero vector is undefined");
  const double pz = dot(p, z);
  std::vector<double> g(p.size());
  for (std::size_t k = 0; k < p.size(); ++k)
    g[k] = -(z[k] / (np * nz) - pz * p[k] / (np * np * np * nz));
  return g;
}

ControlEncoder::ControlEncoder(const ControlEncoderConfig& config) : config_(config) {
  convs_[0] = Conv2d(config.in_channels, config.hidden, config.kernel);
  convs_[1] = Conv2d(config.hidden, config.out_channels, config.kernel);
  head_[0] = Conv2d(config.out_channels, config.out_channels, 1);
  head_[1] = Conv2d(config.out_channels, config.out_channels, 1);
}

ControlEncoder ControlEncoder::initialized(const ControlEncoderConfig& config, Rng& rng) {
  ControlEncoder e(config);
  for (Conv2d& c : e.convs_) c.init_uniform(rng);
  for (Conv2d& c : e.head_) c.init_uniform(rng);
  return e;
}

void ControlEncoder::set_identity_head() {
  for (Conv2d& c : head_) {
    c.set_zero();
    for (int k = 0; k < config_.out_channels; ++k) c.w(k, k, 0, 0) = 1.0;
  }
}

Tensor ControlEncoder::features(const Tensor& control) const {
  return convs_[1].forward(nn::activate(config_.activation, convs_[0].forward(control)));
}

Tensor ControlEncoder::features_backward(const Tensor& control, const Tensor& grad_out,
                                         ControlEncoder& grad) const {
  const Tensor pre = convs_[0].forward(control);
  const Tensor hidden = nn::activate(config_.activation, pre);
  Tensor g = convs_[1].backward(hidden, grad_out, grad.convs_[1]);
  g = nn::activate_backward(config_.activation, pre, g);
  return convs_[0].backward(control, g, grad.convs_[0]);
}

Tensor ControlEncoder::predict(const Tensor& features) const {
  return head_[1].forward(nn::activate(config_.head_activation, head_[0].forward(features)));
}

Tensor ControlEncoder::predict_backward(const Tensor& features, const Tensor& grad_out,
                                        ControlEncoder& grad) const {
  const Tensor pre = head_[0].forward(features);
  const Tensor hidden = nn::activate(config_.head_activation, pre);
  Tensor g = head_[1].backward(hidden, grad_out, grad.head_[1]);
  g = nn::activate_backward(config_.head_activation, pre, g);
  return head_[0].backward(features, g, grad.head_[0]);
}

ControlEncoder ControlEncoder::zeros_like() const {
  ControlEncoder z = *this;
  for (Conv2d& c : z.convs_) c.set_zero();
  for (Conv2d& c : z.head_) c.set_zero();
  return z;
}

std::vector<NamedParams> ControlEncoder::parameters() {
  std::vector<NamedParams> out;
  convs_[0].collect("encoder.conv1", out);
  convs_[1].collect("encoder.conv2", out);
  head_[0].collect("encoder.head1", out);
  head_[1].collect("encoder.head2", out);
  return out;
}

AlignMode parse_align_mode(const std::string& name) {
  if (name == "inverse") return AlignMode::kInverse;
  if (name == "literal") return AlignMode::kLiteral;
  throw PreconditionError("unknown align mode '" + name + "' (expected inverse or literal)");
}

std::string to_string(AlignMode mode) {
  return mode == AlignMode::kInverse ? "inverse" : "literal";
}

SiamResult simsiam_loss(const ControlEncoder& encoder, const Tensor& control,
                        const RotationAngles& angles, AlignMode mode, const SiamTargets* frozen) {
  const geom::ErpGrid grid(control.height(), control.width());
  const geom::RotationMatrix rot = geom::rotation_matrix(angles);
  const auto view_map = geom::rotation_source_map(grid, rot);
  const auto align_map =
      mode == AlignMode::kInverse ? geom::rotation_source_map(grid, rot.transpose()) : view_map;

  const Tensor rotated = geom::gather_pixels(control, view_map);
  const Tensor f1 = encoder.features(control);
  const Tensor f2 = encoder.features(rotated);
  const Tensor z2 = geom::gather_pixels(f2, align_map);
  const Tensor p1 = encoder.predict(f1);
  const Tensor p2 = encoder.predict(z2);

  const Tensor& target1 = frozen ? frozen->z1 : f1;
  const Tensor& target2 = frozen ? frozen->z2 : z2;
  require(target1.shape() == f1.shape() && target2.shape() == z2.shape(),
          "frozen SimSiam targets have the wrong shape");

  SiamResult result;
  result.angles = angles;
  result.loss = 0.5 * neg_cosine(p1.values(), target2.values()) +
                0.5 * neg_cosine(p2.values(), target1.values());
  result.targets = {f1, z2};
  result.grad = encoder.zeros_like();

  Tensor g_p1(p1.shape(), neg_cosine_grad(p1.values(), target2.values()));
  Tensor g_p2(p2.shape(), neg_cosine_grad(p2.values(), target1.values()));
  g_p1 *= 0.5;
  g_p2 *= 0.5;
  // The targets sit inside stop(), so gradients reach the encoder only through p1 and p2.
  const Tensor g_f1 = encoder.predict_backward(f1, g_p1, result.grad);
  encoder.features_backward(control, g_f1, result.grad);
  const Tensor g_z2 = encoder.predict_backward(z2, g_p2, result.grad);
  encoder.features_backward(rotated, geom::scatter_pixels(g_z2, align_map), result.grad);
  return result;
}

SiamResult simsiam_loss(const ControlEncoder& encoder, const Tensor& control,
                        const RotationBounds& bounds, std::uint64_t seed, AlignMode mode) {
  return simsiam_loss(encoder, control, sample_rotation(bounds, seed), mode);
}

ToyDenoiser::ToyDenoiser(const DenoiserConfig& config) : config_(config) {
  convs_[0] = Conv2d(config.latent_channels + config.cond_channels + kTimeChannels, config.hidden,
                     config.kernel);
  convs_[1] = Conv2d(config.hidden, config.latent_channels, config.kernel);
}

ToyDenoiser ToyDenoiser::initialized(const DenoiserConfig& config, Rng& rng) {
  ToyDenoiser d(config);
  for (Conv2d& c : d.convs_) c.init_uniform(rng);
  return d;
}

Tensor ToyDenoiser::assemble_input(const Tensor& z_t, int t, int steps, const Tensor& cond) const {
  require(z_t.channels() == config_.latent_channels, "denoiser latent channel mismatch");
  require(cond.channels() == config_.cond_channels, "denoiser condition channel mismatch");
  require(t >= 1 && t <= steps, "denoiser step t outside [1, N]");
  const double phase = static_cast<double>(t) / steps;
  Tensor time(kTimeChannels, z_t.height(), z_t.width());
  for (double& v : time.plane(0)) v = phase;
  for (double& v : time.plane(1)) v = std::sin(std::numbers::pi * phase);
  const Tensor parts[] = {z_t, cond, time};
  return concat_channels(parts);
}

Tensor ToyDenoiser::predict(const Tensor& z_t, int t, int steps, const Tensor& cond) const {
  const Tensor in = assemble_input(z_t, t, steps, cond);
  return convs_[1].forward(nn::activate(config_.activation, convs_[0].forward(in)));
}

Tensor ToyDenoiser::backward(const Tensor& z_t, int t, int steps, const Tensor& cond,
                             const Tensor& grad_out, ToyDenoiser& grad) const {
  const Tensor in = assemble_input(z_t, t, steps, cond);
  const Tensor pre = convs_[0].forward(in);
  const Tensor hidden = nn::activate(config_.activation, pre);
  Tensor g = convs_[1].backward(hidden, grad_out, grad.convs_[1]);
  g = nn::activate_backward(config_.activation, pre, g);
  const Tensor g_in = convs_[0].backward(in, g, grad.convs_[0]);
  Tensor g_cond(cond.shape());
  for (int c = 0; c < cond.channels(); ++c) {
    const auto src = g_in.plane(config_.latent_channels + c);
    std::copy(src.begin(), src.end(), g_cond.plane(c).begin());
  }
  return g_cond;
}

ToyDenoiser ToyDenoiser::zeros_like() const {
  ToyDenoiser z = *this;
  for (Conv2d& c : z.convs_) c.set_zero();
  return z;
}

std::vector<NamedParams> ToyDenoiser::parameters() {
  std::vector<NamedParams> out;
  convs_[0].collect("denoiser.conv1", out);
  convs_[1].collect("denoiser.conv2", out);
  return out;
}

EpsLossResult diffusion_eps_loss(const ToyDenoiser& denoiser, const Tensor& z0, int t,
                                 const Tensor& cond, const Tensor& noise,
                                 const gen::NoiseSchedule& schedule) {
  require(t >= 1 && t <= schedule.steps(), "diffusion step t outside [1, N]");
  require(z0.shape() == noise.shape(), "latent and noise shapes differ");
  const double ab = schedule.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  Tensor z_t(z0.shape());
  for (std::size_t p = 0; p < z_t.size(); ++p)
    z_t.values()[p] = a * z0.values()[p] + b * noise.values()[p];

  const Tensor pred = denoiser.predict(z_t, t, schedule.steps(), cond);
  const double n = static_cast<double>(pred.size());
  EpsLossResult r;
  Tensor grad_out(pred.shape());
  double acc = 0.0;
  for (std::size_t p = 0; p < pred.size(); ++p) {
    const double diff = pred.values()[p] - noise.values()[p];
    acc += diff * diff;
    grad_out.values()[p] = 2.0 * diff / n;
  }
  r.loss = acc / n;
  r.grad = denoiser.zeros_like();
  r.grad_cond = denoiser.backward(z_t, t, schedule.steps(), cond, grad_out, r.grad);
  return r;
}

LossBreakdown total_loss(double control, double siam, double lambda) {
  return {control, siam, lambda, control + lambda * siam};
}

ToyModel ToyModel::zeros_like() const {
  return {hint.zeros_like(), encoder.zeros_like(), denoiser.zeros_like()};
}

std::vector<NamedParams> ToyModel::parameters() {
  std::vector<NamedParams> out = hint.parameters();
  for (auto& p : encoder.parameters()) out.push_back(p);
  for (auto& p : denoiser.parameters()) out.push_back(p);
  return out;
}

Tensor ToyModel::predict_eps(const Tensor& z_t, int t, int steps, const Tensor& embedding) const {
  return denoiser.predict(z_t, t, steps, encoder.features(hint.forward(embedding)));
}

ToyModel make_toy_model(const ToyModelConfig& config, std::uint64_t seed) {
  require(config.hint.out_channels == config.encoder.in_channels,
          "hint block output must feed the control encoder");
  require(config.encoder.out_channels == config.denoiser.cond_channels,
          "control encoder output must match the denoiser condition channels");
  Rng rng(seed);
  ToyModel m;
  m.hint = ddab::HintBlock::initialized(config.hint, rng);
  m.encoder = ControlEncoder::initialized(config.encoder, rng);
  m.denoiser = ToyDenoiser::initialized(config.denoiser, rng);
  return m;
}

Tensor ToyModelDenoiser::predict_eps(const Tensor& z_t, int t, const gen::NoiseSchedule& schedule,
                                     const Tensor* guidance) const {
  if (guidance) return model_.predict_eps(z_t, t, schedule.steps(), *guidance);
  const Tensor empty(model_.hint.config().in_channels, z_t.height(), z_t.width());
  return model_.predict_eps(z_t, t, schedule.steps(), empty);
}

TrainState make_train_state(ToyModel model) {
  TrainState s{std::move(model), {}, 0};
  for (const auto& p : s.model.parameters()) s.velocity.emplace_back(p.values.size(), 0.0);
  return s;
}

void sgd_update(std::span<const NamedParams> params, std::span<const NamedParams> grads,
                std::vector<std::vector<double>>& velocity, double learning_rate, double momentum) {
  require(params.size() == grads.size() && params.size() == velocity.size(),
          "optimizer block count mismatch");
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& v = velocity[b];
    require(v.size() == params[b].values.size() && v.size() == grads[b].values.size(),
            "optimizer block size mismatch in " + params[b].name);
    for (std::size_t k = 0; k < v.size(); ++k) {
      v[k] = momentum * v[k] + grads[b].values[k];
      params[b].values[k] -= learning_rate * v[k];
    }
  }
}

StepResult evaluate_batch(const ToyModel& model, std::span<const TrainSample> batch,
                          const gen::NoiseSchedule& schedule, const TrainConfig& config,
                          std::uint64_t seed) {
  require(!batch.empty(), "training batch is empty");
  StepResult result{{}, model.zeros_like()};
  const auto total_grad = result.grad.parameters();
  const double inv = 1.0 / static_cast<double>(batch.size());
  double control_sum = 0.0;
  double siam_sum = 0.0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const TrainSample& sample = batch[b];
    Rng rng(derive_seed(seed, b));
    const int t = rng.uniform_int(1, schedule.steps());
    Tensor noise(sample.latent.shape());
    for (double& v : noise.values()) v = rng.normal();

    const Tensor control = model.hint.forward(sample.embedding);
    const Tensor cond = model.encoder.features(control);
    EpsLossResult eps = diffusion_eps_loss(model.denoiser, sample.latent, t, cond, noise, schedule);
    control_sum += eps.loss;

    ToyModel sample_grad = model.zeros_like();
    sample_grad.denoiser = std::move(eps.grad);
    const Tensor g_control = model.encoder.features_backward(control, eps.grad_cond, sample_grad.encoder);
    model.hint.backward(sample.embedding, g_control, sample_grad.hint);
    add_scaled(total_grad, sample_grad.parameters(), inv);

    if (config.use_siam) {
      SiamResult siam = simsiam_loss(model.encoder, control, config.contrastive_bounds,
                                     derive_seed(seed, 1000 + b), config.align);
      siam_sum += siam.loss;
      ToyModel siam_grad = model.zeros_like();
      siam_grad.encoder = std::move(siam.grad);
      add_scaled(total_grad, siam_grad.parameters(), config.lambda * inv);
    }
  }
  result.losses = total_loss(control_sum * inv, siam_sum * inv, config.lambda);
  return result;
}

LossBreakdown train_step(TrainState& state, std::span<const TrainSample> batch,
                         const gen::NoiseSchedule& schedule, const TrainConfig& config,
                         std::uint64_t seed) {
  for (const TrainSample& sample : batch)
    if (!sample.latent.all_finite() || !sample.embedding.all_finite())
      throw NumericError("non-finite training input at step " + std::to_string(state.step));
  StepResult r = evaluate_batch(state.model, batch, schedule, config, seed);
  const auto grads = r.grad.parameters();
  if (!std::isfinite(r.losses.total) || !all_finite(grads))
    throw NumericError("non-finite loss or gradient at training step " + std::to_string(state.step));
  sgd_update(state.model.parameters(), grads, state.velocity, config.learning_rate, config.momentum);
  ++state.step;
  return r.losses;
}

}  // namespace sphdiff::train
