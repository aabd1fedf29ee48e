#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "slsnet/config.hpp"
#include "slsnet/data.hpp"
#include "slsnet/losses.hpp"
#include "slsnet/metrics.hpp"
#include "slsnet/networks.hpp"

namespace slsnet {

struct LossRecord {
  std::size_t step = 0;
  double gen_loss = 0;
  double disc_loss = 0;
};

/// Mutable training state. All randomness of a run (dropout masks, shuffles,
/// augmentation draws) comes from `rng`.
struct TrainState {
  explicit TrainState(std::uint64_t seed) : seed(seed), rng(seed) {}

  std::size_t step = 0;
  std::uint64_t seed;
  Rng rng;
  std::vector<LossRecord> loss_history;
};

struct StepLosses {
  double gen = 0;
  double disc = 0;
};

/// Adam step on the discriminator alone: real pairs (x, y) against the
/// detached generator output `fake`. Returns the discriminator loss.
double discriminator_update(Discriminator& disc, const Tensor& x, const Tensor& y,
                            const Tensor& fake, const OptimizerConfig& opt, std::size_t t,
                            Rng& rng);

/// Adam step on the generator alone. `fake` must be the recorded generator
/// output for x; the discriminator is frozen and its batch statistics are
/// left untouched. Returns the generator loss.
double generator_update(Generator& gen, Discriminator& disc, const Tensor& x, const Tensor& y,
                        const Tensor& fake, const LossWeights& weights,
                        const OptimizerConfig& opt, std::size_t t, Rng& rng);

/// One discriminator update with the generator output detached, then one
/// generator update with the discriminator frozen. Increments state.step and
/// appends to loss_history. NumericErrors are rethrown with the step index.
StepLosses train_step(Generator& gen, Discriminator& disc, const Tensor& x, const Tensor& y,
                      const LossWeights& weights, const OptimizerConfig& opt, TrainState& state);

/// Gathers the parameters of one model.
std::vector<Parameter*> parameters_of(Generator& gen);
std::vector<Parameter*> parameters_of(Discriminator& disc);

/// Generator and discriminator state, generator first.
StateRefs model_state(Generator& gen, Discriminator& disc);

/// Maps a (1, 3, s, s) image to a (1, 1, s, s) soft mask.
using Predictor = std::function<Tensor(const Tensor&)>;

/// Binarizes each prediction at 0.5 and scores it against the sample mask.
/// Throws UsageError for samples without masks.
MetricsReport evaluate(const Predictor& predict, const std::vector<Sample>& samples);
/// Inference-mode evaluation of a generator.
MetricsReport evaluate(Generator& gen, const std::vector<Sample>& samples);

/// Inference-mode soft mask for a batch of images.
Tensor predict(Generator& gen, const Tensor& images);

struct BenchRow {
  std::size_t input_size = 0;
  double mean_ms = 0;
  double fps = 0;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  std::size_t warmup_iters = 0;
  std::size_t timed_iters = 0;
};

/// Mean single-image inference latency per input size, in the given order.
BenchReport bench(Generator& gen, const std::vector<std::size_t>& sizes, std::size_t warmup,
                  std::size_t iters);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no files written
  std::ostream* log = nullptr;    // progress lines
  std::size_t log_every = 50;
};

struct TrainResult {
  std::size_t steps = 0;
  std::vector<LossRecord> loss_history;
  double best_val_jsc = -1;       // -1 when no validation ran
  std::size_t best_step = 0;
  bool stopped_early = false;
};

/// Full training loop: batches over `train` for cfg.epochs epochs (or until
/// cfg.max_steps), checkpoints every cfg.checkpoint_every steps and at exit,
/// and keeps the best-by-validation-JSC checkpoint when `val` is non-empty.
/// Writes `loss_log.csv`, `checkpoint_<step>.slsn`, `final.slsn` and
/// `best.slsn` into out_dir.
TrainResult train(Generator& gen, Discriminator& disc, const TrainConfig& cfg,
                  const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  TrainState& state, const TrainOptions& opts);

/// `step,gen_loss,disc_loss` with a header row.
void write_loss_log(std::ostream& out, const std::vector<LossRecord>& history);

}  // namespace slsnet
