#include "slsnet/trainer.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <random>

#include "slsnet/checkpoint.hpp"
#include "slsnet/error.hpp"
#include "slsnet/optim.hpp"

namespace slsnet {

std::vector<Parameter*> parameters_of(Generator& gen) {
  StateRefs s;
  gen.state(s);
  return s.params;
}

std::vector<Parameter*> parameters_of(Discriminator& disc) {
  StateRefs s;
  disc.state(s);
  return s.params;
}

StateRefs model_state(Generator& gen, Discriminator& disc) {
  StateRefs s;
  gen.state(s);
  disc.state(s);
  return s;
}

namespace {

class FreezeGuard {
 public:
  explicit FreezeGuard(const std::vector<Parameter*>& params) : params_(params) {
    for (Parameter* p : params_) p->value.set_requires_grad(false);
  }
  ~FreezeGuard() {
    for (Parameter* p : params_) p->value.set_requires_grad(true);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;

 private:
  const std::vector<Parameter*>& params_;
};

}  // namespace

double discriminator_update(Discriminator& disc, const Tensor& x, const Tensor& y,
                            const Tensor& fake, const OptimizerConfig& opt, std::size_t t,
                            Rng& rng) {
  const RunMode mode{true, true, &rng};
  const Tensor d_real = disc.forward(x, y, mode);
  const Tensor d_fake = disc.forward(x, fake.detach(), mode);
  const Tensor loss = discriminator_loss(d_real, d_fake);
  loss.backward();
  adam_step(parameters_of(disc), opt, t);
  return loss.item();
}

double generator_update(Generator& gen, Discriminator& disc, const Tensor& x, const Tensor& y,
                        const Tensor& fake, const LossWeights& weights,
                        const OptimizerConfig& opt, std::size_t t, Rng& rng) {
  const auto disc_params = parameters_of(disc);
  Tensor loss;
  {
    FreezeGuard frozen(disc_params);
    const RunMode fixed{true, false, &rng};
    loss = generator_loss(disc.forward(x, fake, fixed), fake, y, weights);
    loss.backward();
  }
  adam_step(parameters_of(gen), opt, t);
  return loss.item();
}

StepLosses train_step(Generator& gen, Discriminator& disc, const Tensor& x, const Tensor& y,
                      const LossWeights& weights, const OptimizerConfig& opt, TrainState& state) {
  const std::size_t t = state.step + 1;
  StepLosses losses;
  try {
    const Tensor fake = gen.forward(x, RunMode{true, true, &state.rng});
    losses.disc = discriminator_update(disc, x, y, fake, opt, t, state.rng);
    losses.gen = generator_update(gen, disc, x, y, fake, weights, opt, t, state.rng);
  } catch (const NumericError& e) {
    throw NumericError("step " + std::to_string(t) + ": " + e.what());
  }
  state.step = t;
  state.loss_history.push_back({t, losses.gen, losses.disc});
  return losses;
}

Tensor predict(Generator& gen, const Tensor& images) {
  NoGradGuard no_grad;
  return gen.forward(images, RunMode{});
}

MetricsReport evaluate(const Predictor& predictor, const std::vector<Sample>& samples) {
  MetricsReport report;
  for (const Sample& s : samples) {
    if (!s.mask.defined()) throw UsageError("evaluate: sample " + s.id + " has no mask");
    const Tensor pred = binarize(predictor(s.image), 0.5);
    report.add(s.id, confusion(s.mask, pred));
  }
  return report;
}

MetricsReport evaluate(Generator& gen, const std::vector<Sample>& samples) {
  return evaluate([&gen](const Tensor& image) { return predict(gen, image); }, samples);
}

BenchReport bench(Generator& gen, const std::vector<std::size_t>& sizes, std::size_t warmup,
                  std::size_t iters) {
  if (iters == 0) throw ConfigError("bench: iterations must be >= 1");
  BenchReport report;
  report.warmup_iters = warmup;
  report.timed_iters = iters;
  Rng rng(0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t size : sizes) {
    if (size == 0 || size % 8 != 0) throw ConfigError("bench: size " + std::to_string(size) + " is not divisible by 8");
    std::vector<real> values(3 * size * size);
    for (auto& v : values) v = static_cast<real>(unit(rng));
    const Tensor x = Tensor::from(Shape{1, 3, size, size}, std::move(values));
    for (std::size_t i = 0; i < warmup; ++i) predict(gen, x);
    const auto t0 = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < iters; ++i) predict(gen, x);
    const auto t1 = std::chrono::steady_clock::now();
    const double mean_ms = std::chrono::duration<double, std::milli>(t1 - t0).count() / static_cast<double>(iters);
    report.rows.push_back({size, mean_ms, 1000.0 / mean_ms});
  }
  return report;
}

void write_loss_log(std::ostream& out, const std::vector<LossRecord>& history) {
  out << "step,gen_loss,disc_loss\n";
  char buf[96];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g\n", r.step, r.gen_loss, r.disc_loss);
    out << buf;
  }
}

namespace {

void save(const std::filesystem::path& path, const TrainConfig& cfg, const TrainState& state,
          Generator& gen, Discriminator& disc) {
  save_checkpoint(path, CheckpointInfo{state.step, to_config_text(cfg)}, model_state(gen, disc));
}

void write_log_file(const std::filesystem::path& path, const std::vector<LossRecord>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  write_loss_log(out, history);
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace

TrainResult train(Generator& gen, Discriminator& disc, const TrainConfig& cfg,
                  const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  TrainState& state, const TrainOptions& opts) {
  cfg.validate();
  if (train_set.empty()) throw UsageError("train: empty training set");
  const bool write = !opts.out_dir.empty();
  if (write) std::filesystem::create_directories(opts.out_dir);

  const std::vector<Sample> expanded = cfg.augment ? expand_dataset(train_set, state.rng) : std::vector<Sample>{};
  const std::vector<Sample>& data = cfg.augment ? expanded : train_set;
  const LossWeights weights{cfg.model.loss_lambda, cfg.model.loss_alpha};

  TrainResult result;
  std::size_t since_best = 0;
  auto validate = [&] {
    if (val_set.empty()) return;
    const double jsc = evaluate(gen, val_set).mean().m.jsc;
    if (opts.log) *opts.log << "step " << state.step << " val_jsc " << jsc << '\n';
    if (jsc > result.best_val_jsc) {
      result.best_val_jsc = jsc;
      result.best_step = state.step;
      since_best = 0;
      if (write) save(opts.out_dir / "best.slsn", cfg, state, gen, disc);
    } else {
      ++since_best;
    }
  };
  auto done = [&] { return cfg.max_steps > 0 && state.step >= cfg.max_steps; };

  for (std::size_t epoch = 0; (cfg.epochs == 0 || epoch < cfg.epochs) && !done(); ++epoch) {
    for (const auto& idx : make_batches(data.size(), cfg.batch_size, true, state.rng)) {
      const auto [x, y] = collate(data, idx);
      const StepLosses l = train_step(gen, disc, x, y, weights, cfg.optimizer, state);
      if (opts.log && opts.log_every > 0 && state.step % opts.log_every == 0) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "step %zu gen_loss %.5f disc_loss %.5f\n", state.step, l.gen, l.disc);
        *opts.log << buf << std::flush;
      }
      if (write && cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0) {
        char name[48];
        std::snprintf(name, sizeof name, "checkpoint_%06zu.slsn", state.step);
        save(opts.out_dir / name, cfg, state, gen, disc);
      }
      if (cfg.validate_every > 0 && state.step % cfg.validate_every == 0) validate();
      if (cfg.early_stopping > 0 && since_best >= cfg.early_stopping) {
        result.stopped_early = true;
        break;
      }
      if (done()) break;
    }
    if (result.stopped_early) break;
    if (cfg.validate_every == 0) validate();
    if (cfg.early_stopping > 0 && since_best >= cfg.early_stopping) {
      result.stopped_early = true;
      break;
    }
  }

  result.steps = state.step;
  result.loss_history = state.loss_history;
  if (write) {
    save(opts.out_dir / "final.slsn", cfg, state, gen, disc);
    write_log_file(opts.out_dir / "loss_log.csv", state.loss_history);
  }
  return result;
}

}  // namespace slsnet
