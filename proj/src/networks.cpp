#include "slsnet/networks.hpp"

#include <cmath>

#include "slsnet/error.hpp"

namespace slsnet {

std::size_t ModelConfig::scaled(std::size_t width) const {
  return static_cast<std::size_t>(std::llround(static_cast<double>(width) * scale_factor));
}

void ModelConfig::validate() const {
  if (input_size == 0 || input_size % 8 != 0) {
    throw ConfigError("input_size " + std::to_string(input_size) + " must be a positive multiple of 8");
  }
  if (!(scale_factor > 0)) throw ConfigError("scale_factor must be positive");
  const std::pair<const char*, std::size_t> widths[] = {
      {"base_channels", base_channels},       {"down1_channels", down1_channels},
      {"stage1_channels", stage1_channels},   {"stage2_channels", stage2_channels},
      {"decoder1_channels", decoder1_channels}, {"disc_channels", disc_channels}};
  for (const auto& [name, w] : widths) {
    if (scaled(w) == 0) {
      throw ConfigError(std::string(name) + " is zero after applying scale_factor " +
                        std::to_string(scale_factor));
    }
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw ConfigError("dropout_rate outside [0, 1)");
  if (!(loss_lambda >= 0.0)) throw ConfigError("loss_lambda must be >= 0");
  if (!(loss_alpha >= 0.0)) throw ConfigError("loss_alpha must be >= 0");
}

Shape ForwardTrace::at(const std::string& stage) const {
  for (const auto& [name, shape] : stages)
    if (name == stage) return shape;
  throw UsageError("no traced stage named " + stage);
}

namespace {

ConvOptions same3x3() { return ConvOptions{1, 1, 1}; }

std::vector<FcmBlock> make_fcms(const std::string& prefix, std::size_t count, std::size_t channels,
                                Rng& rng) {
  std::vector<FcmBlock> blocks;
  blocks.reserve(count);
  for (std::size_t i = 0; i < count; ++i)
    blocks.emplace_back(prefix + std::to_string(i), channels, channels, true, rng);
  return blocks;
}

Tensor run_fcms(const std::vector<FcmBlock>& blocks, Tensor x) {
  for (const auto& b : blocks) x = b.forward(x);
  return x;
}

void record(ForwardTrace* trace, const char* stage, const Tensor& t) {
  if (trace) trace->stages.emplace_back(stage, t.shape());
}

}  // namespace

Tensor Generator::DownLayer::forward(const Tensor& x, const RunMode& mode) {
  return pam.forward(maxpool2(relu(bn.forward(conv.forward(x), mode))), mode);
}

Tensor Generator::Bottleneck::forward(const Tensor& x, const RunMode& mode) {
  const Tensor f = factorized.forward(x);
  return add(cam.forward(f), pam.forward(f, mode));
}

Generator::Generator(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg.validate();
  const std::size_t base = cfg.scaled(cfg.base_channels);
  const std::size_t d1 = cfg.scaled(cfg.down1_channels);
  const std::size_t s1 = cfg.scaled(cfg.stage1_channels);
  const std::size_t s2 = cfg.scaled(cfg.stage2_channels);
  const std::size_t u1 = cfg.scaled(cfg.decoder1_channels);

  for (std::size_t i = 0; i < multiscale.size(); ++i) {
    const std::string name = "gen.multiscale" + std::to_string(i);
    multiscale[i] = {Conv2d(name + ".conv", 3, base, 3, 3, same3x3(), rng),
                     ChannelAttention(name + ".cam")};
  }
  auto down = [&](const std::string& name, std::size_t in, std::size_t out) {
    return DownLayer{Conv2d(name + ".conv", in, out, 3, 3, same3x3(), rng),
                     BatchNorm2d(name + ".bn", out), PositionAttention(name + ".pam", out, rng)};
  };
  down1 = down("gen.down1", base, d1);
  down2 = down("gen.down2", d1, s1);
  fcm_stage1 = make_fcms("gen.fcm1_", cfg.n_fcm_stage1, s1, rng);
  down3 = down("gen.down3", s1, s2);
  fcm_stage2 = make_fcms("gen.fcm2_", cfg.n_fcm_stage2, s2, rng);
  bottleneck = Bottleneck{FactorizedLayer("gen.bottleneck.factorized", s2, s2, 3, rng),
                          ChannelAttention("gen.bottleneck.cam"),
                          PositionAttention("gen.bottleneck.pam", s2, rng)};
  auto up = [&](const std::string& name, std::size_t in, std::size_t out) {
    return UpLayer{ConvTranspose2d(name + ".deconv", in, out, 3, 2, 1, 1, rng),
                   BatchNorm2d(name + ".bn", out), PositionAttention(name + ".pam", out, rng),
                   make_fcms(name + ".fcm", cfg.n_fcm_decoder, out, rng)};
  };
  up1 = up("gen.up1", s2, u1);
  up2 = up("gen.up2", u1, base);
  head = Conv2d("gen.head", base, 1, 1, 1, {}, rng);
}

Tensor Generator::multiscale_forward(const Tensor& x) const {
  const Shape& s = x.shape();
  if (s.c != 3) throw ConfigError("generator expects 3 input channels, got " + std::to_string(s.c));
  if (s.h != s.w) throw ConfigError("generator expects square inputs, got " + s.str());
  if (s.h == 0 || s.h % 8 != 0) {
    throw ConfigError("generator input size " + std::to_string(s.h) + " is not divisible by 8");
  }
  Tensor fused;
  for (std::size_t i = 0; i < multiscale.size(); ++i) {
    const std::size_t size = s.h >> i;
    const Tensor level = i == 0 ? x : bilinear_resize(x, size, size);
    Tensor feat = multiscale[i].cam.forward(relu(multiscale[i].conv.forward(level)));
    if (i > 0) feat = bilinear_upsample(feat, s.h, s.w);
    fused = i == 0 ? feat : add(fused, feat);
  }
  return scale(fused, real(0.25));
}

Tensor Generator::up_forward(UpLayer& layer, const Tensor& x, const RunMode& mode) {
  Tensor y = layer.pam.forward(relu(layer.bn.forward(layer.deconv.forward(x), mode)), mode);
  if (mode.training && cfg_.dropout_rate > 0) {
    if (!mode.rng) throw UsageError("generator: training with dropout needs a random source");
    y = dropout(y, cfg_.dropout_rate, *mode.rng, true);
  }
  return run_fcms(layer.fcms, y);
}

Tensor Generator::forward(const Tensor& x, const RunMode& mode, ForwardTrace* trace) {
  Tensor t = multiscale_forward(x);
  record(trace, "multiscale", t);
  t = down1.forward(t, mode);
  record(trace, "down1", t);
  t = down2.forward(t, mode);
  record(trace, "down2", t);
  t = run_fcms(fcm_stage1, t);
  record(trace, "fcm_stage1", t);
  t = down3.forward(t, mode);
  record(trace, "down3", t);
  t = run_fcms(fcm_stage2, t);
  record(trace, "fcm_stage2", t);
  t = bottleneck.forward(t, mode);
  record(trace, "bottleneck", t);
  t = up_forward(up1, t, mode);
  record(trace, "up1", t);
  t = up_forward(up2, t, mode);
  record(trace, "up2", t);
  t = sigmoid(head.forward(bilinear_upsample(t, x.shape().h, x.shape().w)));
  record(trace, "output", t);
  return t;
}

void Generator::state(StateRefs& out) {
  for (auto& br : multiscale) {
    br.conv.state(out);
    br.cam.state(out);
  }
  auto down_state = [&](DownLayer& d) {
    d.conv.state(out);
    d.bn.state(out);
    d.pam.state(out);
  };
  down_state(down1);
  down_state(down2);
  for (auto& b : fcm_stage1) b.state(out);
  down_state(down3);
  for (auto& b : fcm_stage2) b.state(out);
  bottleneck.factorized.state(out);
  bottleneck.cam.state(out);
  bottleneck.pam.state(out);
  for (UpLayer* u : {&up1, &up2}) {
    u->deconv.state(out);
    u->bn.state(out);
    u->pam.state(out);
    for (auto& b : u->fcms) b.state(out);
  }
  head.state(out);
}

Discriminator::Discriminator(const ModelConfig& cfg, Rng& rng) {
  cfg.validate();
  const std::size_t d = cfg.scaled(cfg.disc_channels);
  const ConvOptions down{2, 1, 1};
  conv1 = Conv2d("disc.conv1", 4, d, 4, 4, down, rng);
  conv2 = Conv2d("disc.conv2", d, 2 * d, 4, 4, down, rng);
  bn2 = BatchNorm2d("disc.bn2", 2 * d);
  pam = PositionAttention("disc.pam", 2 * d, rng);
  conv3 = Conv2d("disc.conv3", 2 * d, 4 * d, 4, 4, down, rng);
  bn3 = BatchNorm2d("disc.bn3", 4 * d);
  cam = ChannelAttention("disc.cam");
  conv4 = Conv2d("disc.conv4", 4 * d, 1, 4, 4, down, rng);
}

Tensor Discriminator::forward(const Tensor& x, const Tensor& mask, const RunMode& mode) {
  const Shape& xs = x.shape();
  const Shape& ms = mask.shape();
  if (xs.n != ms.n || xs.h != ms.h || xs.w != ms.w) {
    throw DimensionError("discriminator: image " + xs.str() + " and mask " + ms.str() +
                         " disagree in batch or spatial extents");
  }
  if (ms.c != 1) throw DimensionError("discriminator: mask must have one channel");
  Tensor t = relu(conv1.forward(concat_channels(x, mask)));
  t = pam.forward(relu(bn2.forward(conv2.forward(t), mode)), mode);
  t = cam.forward(relu(bn3.forward(conv3.forward(t), mode)));
  return sigmoid(conv4.forward(t));
}

void Discriminator::state(StateRefs& out) {
  conv1.state(out);
  conv2.state(out);
  bn2.state(out);
  pam.state(out);
  conv3.state(out);
  bn3.state(out);
  cam.state(out);
  conv4.state(out);
}

std::size_t count_parameters(const StateRefs& state) {
  std::size_t total = 0;
  for (const Parameter* p : state.params) total += p->size();
  return total;
}

std::size_t count_parameters(Generator& gen) {
  StateRefs s;
  gen.state(s);
  return count_parameters(s);
}

std::size_t count_parameters(Discriminator& disc) {
  StateRefs s;
  disc.state(s);
  return count_parameters(s);
}

std::vector<std::pair<std::string, std::size_t>> parameter_breakdown(const StateRefs& state) {
  std::vector<std::pair<std::string, std::size_t>> groups;
  for (const Parameter* p : state.params) {
    const auto first = p->name.find('.');
    const auto second = first == std::string::npos ? first : p->name.find('.', first + 1);
    std::string key = p->name.substr(0, second);
    // FCM stages group as a whole ("gen.fcm1_3" -> "gen.fcm1").
    if (const auto us = key.rfind('_'); us != std::string::npos && us > first) key.resize(us);
    if (groups.empty() || groups.back().first != key) groups.emplace_back(key, 0);
    groups.back().second += p->size();
  }
  return groups;
}

Tensor binarize(const Tensor& mask, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ConfigError("binarize: threshold " + std::to_string(threshold) + " outside (0, 1)");
  }
  std::vector<real> out(mask.size());
  auto in = mask.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] >= threshold ? real(1) : real(0);
  return Tensor::from(mask.shape(), std::move(out));
}

}  // namespace slsnet
