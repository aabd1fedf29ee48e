#include "slsnet/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <ostream>

#include "slsnet/checkpoint.hpp"
#include "slsnet/config.hpp"
#include "slsnet/data.hpp"
#include "slsnet/error.hpp"
#include "slsnet/kernels.hpp"
#include "slsnet/trainer.hpp"

namespace slsnet::cli {

namespace fs = std::filesystem;

namespace {

struct Models {
  std::unique_ptr<Generator> gen;
  std::unique_ptr<Discriminator> disc;
};

Models build_models(const ModelConfig& cfg, Rng& rng) {
  Models m;
  m.gen = std::make_unique<Generator>(cfg, rng);
  m.disc = std::make_unique<Discriminator>(cfg, rng);
  return m;
}

void check_precision(const TrainConfig& cfg) {
  if (cfg.precision != precision_name()) {
    throw ConfigError("config asks for " + cfg.precision + " precision but this binary uses " +
                      precision_name() + (cfg.precision == "float" ? "; run slsnet-f32" : "; run slsnet"));
  }
}

// --config plus any --set key=value overrides.
TrainConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  TrainConfig cfg = path.empty() ? TrainConfig{} : load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(' '));
      s.erase(s.find_last_not_of(' ') + 1);
      return s;
    };
    set_config_value(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
  }
  return cfg;
}

struct Loaded {
  TrainConfig cfg;
  Models models;
  std::uint64_t step = 0;
};

Loaded load_models(const fs::path& checkpoint) {
  Loaded l;
  const CheckpointInfo info = read_checkpoint_info(checkpoint);
  l.cfg = parse_config(info.config_text);
  Rng rng(l.cfg.seed);
  l.models = build_models(l.cfg.model, rng);
  StateRefs state = model_state(*l.models.gen, *l.models.disc);
  l.step = load_checkpoint(checkpoint, state).step;
  return l;
}

void apply_threads(std::optional<int> flag, int fallback) {
  int n = fallback;
  if (const char* env = std::getenv("SLSNET_THREADS"); env && *env) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ConfigError(std::string("SLSNET_THREADS must be a positive integer, got '") + env + "'");
    n = static_cast<int>(v);
  }
  if (flag) {
    if (*flag < 1) throw ConfigError("--threads must be >= 1");
    n = *flag;
  }
  if (n > 0) kernels::set_threads(n);
}

std::vector<fs::path> expand_inputs(const std::vector<std::string>& inputs) {
  std::vector<fs::path> out;
  for (const auto& in : inputs) {
    const fs::path p(in);
    if (fs::is_directory(p)) {
      std::vector<fs::path> found;
      for (const auto& e : fs::directory_iterator(p))
        if (e.is_regular_file() && e.path().extension() == ".png") found.push_back(e.path());
      std::sort(found.begin(), found.end());
      out.insert(out.end(), found.begin(), found.end());
    } else {
      out.push_back(p);
    }
  }
  if (out.empty()) throw UsageError("no input images");
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path);
  f << text;
  if (!f) throw IoError("cannot write " + path.string());
}

// --- subcommands ----------------------------------------------------------

struct TrainArgs {
  std::string config, manifest, val_manifest, out;
  std::vector<std::string> set;
  std::size_t synthetic = 0, val_synthetic = 0;
  std::optional<std::uint64_t> synthetic_seed;
  std::optional<int> threads;
  bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out) {
  apply_threads(a.threads, 0);
  const TrainConfig cfg = resolve_config(a.config, a.set);
  cfg.validate();
  check_precision(cfg);
  if (a.manifest.empty() == (a.synthetic == 0)) throw UsageError("train needs exactly one of --manifest or --synthetic");

  const std::size_t size = cfg.model.input_size;
  const std::uint64_t data_seed = a.synthetic_seed.value_or(cfg.seed);
  const std::vector<Sample> train_set =
      a.synthetic > 0 ? synthesize_samples(a.synthetic, size, data_seed) : load_manifest(a.manifest, size);
  std::vector<Sample> val_set;
  if (!a.val_manifest.empty()) val_set = load_manifest(a.val_manifest, size);
  else if (a.val_synthetic > 0) val_set = synthesize_samples(a.val_synthetic, size, data_seed + 1);

  TrainState state(cfg.seed);
  Models m = build_models(cfg.model, state.rng);
  TrainOptions opts;
  opts.out_dir = a.out;
  opts.log = a.quiet ? nullptr : &out;
  const TrainResult r = train(*m.gen, *m.disc, cfg, train_set, val_set, state, opts);
  out << "trained " << r.steps << " steps";
  if (r.best_val_jsc >= 0) out << "; best val JSC " << r.best_val_jsc << " at step " << r.best_step;
  if (r.stopped_early) out << "; stopped early";
  out << "\n";
  return kOk;
}

int cmd_infer(const std::string& checkpoint, const std::vector<std::string>& inputs,
              const std::string& out_dir, std::optional<int> threads, std::ostream& out) {
  apply_threads(threads, 0);
  Loaded l = load_models(checkpoint);
  check_precision(l.cfg);
  fs::create_directories(out_dir);
  const std::size_t size = l.cfg.model.input_size;
  for (const fs::path& p : expand_inputs(inputs)) {
    const Image8 src = read_png(p);
    Tensor soft;
    {
      NoGradGuard no_grad;
      const Tensor x = bilinear_resize(image_to_tensor(src), size, size);
      soft = bilinear_resize(predict(*l.models.gen, x), src.height, src.width);
    }
    const fs::path dst = fs::path(out_dir) / (p.stem().string() + "_mask.png");
    write_png(dst, mask_to_image(binarize(soft, 0.5)));
    out << p.string() << " -> " << dst.string() << "\n";
  }
  return kOk;
}

struct EvalArgs {
  std::string checkpoint, predictions, manifest, out;
  bool pooled = false;
  std::optional<int> threads;
};

Tensor load_binary_mask(const fs::path& path) { return binarize(mask_to_tensor(read_png(path)), 0.5); }

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  apply_threads(a.threads, 0);
  if (a.checkpoint.empty() == a.predictions.empty()) {
    throw UsageError("eval needs exactly one of --checkpoint or --predictions");
  }
  MetricsReport report;
  if (!a.checkpoint.empty()) {
    Loaded l = load_models(a.checkpoint);
    check_precision(l.cfg);
    report = evaluate(*l.models.gen, load_manifest(a.manifest, l.cfg.model.input_size));
  } else {
    for (const auto& e : read_manifest(a.manifest)) {
      const std::string stem = e.image.stem().string();
      if (e.mask.empty()) throw UsageError("eval: " + e.image.string() + " has no mask");
      fs::path pred = fs::path(a.predictions) / (stem + "_mask.png");
      if (!fs::exists(pred)) pred = fs::path(a.predictions) / (stem + ".png");
      if (!fs::exists(pred)) throw IoError("no prediction for " + stem + " in " + a.predictions);
      const Tensor gt = load_binary_mask(e.mask);
      const Tensor pm = load_binary_mask(pred);
      report.add(stem, confusion(gt, pm));
    }
  }
  report.write_table(out, a.pooled);
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    std::ofstream csv(fs::path(a.out) / "metrics.csv");
    report.write_csv(csv, a.pooled);
    if (!csv) throw IoError("cannot write " + (fs::path(a.out) / "metrics.csv").string());
  }
  return kOk;
}

int cmd_count(const std::string& config, const std::vector<std::string>& set, std::ostream& out) {
  const TrainConfig cfg = resolve_config(config, set);
  cfg.model.validate();
  Rng rng(cfg.seed);
  Models m = build_models(cfg.model, rng);
  StateRefs gs, ds;
  m.gen->state(gs);
  m.disc->state(ds);
  for (const StateRefs* s : {&gs, &ds})
    for (const auto& [name, count] : parameter_breakdown(*s)) out << name << ' ' << count << '\n';
  const std::size_t g = count_parameters(gs);
  const std::size_t d = count_parameters(ds);
  out << "generator " << g << '\n' << "discriminator " << d << '\n' << "total " << g + d << '\n';
  return kOk;
}

struct BenchArgs {
  std::string checkpoint, config, csv;
  std::vector<std::string> set;
  std::vector<std::size_t> sizes{64, 128, 256};
  std::size_t warmup = 1, iters = 3;
  std::optional<int> threads;
};

int cmd_bench(const BenchArgs& a, std::ostream& out) {
  apply_threads(a.threads, 1);
  std::unique_ptr<Generator> gen;
  if (!a.checkpoint.empty()) {
    Loaded l = load_models(a.checkpoint);
    check_precision(l.cfg);
    gen = std::move(l.models.gen);
  } else {
    const TrainConfig cfg = resolve_config(a.config, a.set);
    cfg.model.validate();
    Rng rng(cfg.seed);
    gen = std::make_unique<Generator>(cfg.model, rng);
  }
  const BenchReport r = bench(*gen, a.sizes, a.warmup, a.iters);
  char line[96];
  out << "size    mean_ms        fps\n";
  for (const auto& row : r.rows) {
    std::snprintf(line, sizeof line, "%4zu %10.3f %10.3f\n", row.input_size, row.mean_ms, row.fps);
    out << line;
  }
  if (!a.csv.empty()) {
    std::string text = "input_size,mean_ms,fps\n";
    for (const auto& row : r.rows) {
      std::snprintf(line, sizeof line, "%zu,%.6f,%.6f\n", row.input_size, row.mean_ms, row.fps);
      text += line;
    }
    write_text(a.csv, text);
  }
  return kOk;
}

int cmd_synth(std::size_t n, std::size_t size, std::uint64_t seed, const std::string& out_dir,
              bool with_augment, std::ostream& out) {
  const fs::path root(out_dir);
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  std::vector<Sample> samples = synthesize_samples(n, size, seed);
  std::vector<std::string> notes(samples.size());
  if (with_augment) {
    Rng rng(seed);
    std::vector<Sample> expanded;
    notes.clear();
    for (const Sample& s : samples) {
      std::size_t k = 0;
      for (const AugmentOps& ops : expansion_recipes(rng)) {
        Sample a = augment(s, ops);
        a.id = s.id + "_aug" + std::to_string(k++);
        notes.push_back(ops.label());
        expanded.push_back(std::move(a));
      }
    }
    samples = std::move(expanded);
  }
  std::vector<ManifestEntry> entries;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Sample& s = samples[i];
    const fs::path img = root / "images" / (s.id + ".png");
    const fs::path mask = root / "masks" / (s.id + ".png");
    write_png(img, tensor_to_image(s.image));
    write_png(mask, mask_to_image(s.mask));
    entries.push_back({img, mask, notes[i]});
  }
  write_manifest(root / "manifest.tsv", entries);
  out << "wrote " << samples.size() << " samples to " << root.string() << "\n";
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lightweight GAN skin lesion segmentation", "slsnet"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train generator and discriminator");
  train_cmd->add_option("--config", train_args.config, "key = value config file");
  train_cmd->add_option("--set", train_args.set, "Override a config key (key=value), repeatable");
  train_cmd->add_option("--manifest", train_args.manifest, "Training manifest (image<TAB>mask)");
  train_cmd->add_option("--synthetic", train_args.synthetic, "Train on N synthetic images instead");
  train_cmd->add_option("--synthetic-seed", train_args.synthetic_seed, "Seed of the synthetic set (default: config seed)");
  train_cmd->add_option("--val-manifest", train_args.val_manifest, "Validation manifest");
  train_cmd->add_option("--val-synthetic", train_args.val_synthetic, "Validate on N held-out synthetic images");
  train_cmd->add_option("--out", train_args.out, "Output directory")->required();
  train_cmd->add_option("--threads", train_args.threads, "Kernel threads");
  train_cmd->add_flag("--quiet", train_args.quiet, "No progress lines");

  std::string infer_ckpt, infer_out;
  std::vector<std::string> infer_inputs;
  std::optional<int> infer_threads;
  auto* infer_cmd = app.add_subcommand("infer", "Write 0/255 masks for images");
  infer_cmd->add_option("--checkpoint", infer_ckpt, "Checkpoint file")->required();
  infer_cmd->add_option("--input", infer_inputs, "PNG files or directories")->required();
  infer_cmd->add_option("--out", infer_out, "Output directory")->required();
  infer_cmd->add_option("--threads", infer_threads, "Kernel threads");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against a labeled manifest");
  eval_cmd->add_option("--manifest", eval_args.manifest, "Labeled manifest")->required();
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Predict with this checkpoint");
  eval_cmd->add_option("--predictions", eval_args.predictions, "Directory of <stem>_mask.png or <stem>.png masks");
  eval_cmd->add_option("--out", eval_args.out, "Write metrics.csv here");
  eval_cmd->add_flag("--pooled", eval_args.pooled, "Aggregate over pooled pixel counts instead of per-image means");
  eval_cmd->add_option("--threads", eval_args.threads, "Kernel threads");

  std::string count_config;
  std::vector<std::string> count_set;
  auto* count_cmd = app.add_subcommand("count-params", "Parameter totals and per-module breakdown");
  count_cmd->add_option("--config", count_config, "key = value config file");
  count_cmd->add_option("--set", count_set, "Override a config key (key=value), repeatable");

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "Single-image inference latency per input size");
  bench_cmd->add_option("--checkpoint", bench_args.checkpoint, "Checkpoint (default: fresh weights)");
  bench_cmd->add_option("--config", bench_args.config, "Config for fresh weights");
  bench_cmd->add_option("--set", bench_args.set, "Override a config key (key=value), repeatable");
  bench_cmd->add_option("--sizes", bench_args.sizes, "Input sizes")->delimiter(',')->capture_default_str();
  bench_cmd->add_option("--warmup", bench_args.warmup, "Untimed iterations per size")->capture_default_str();
  bench_cmd->add_option("--iters", bench_args.iters, "Timed iterations per size")->capture_default_str();
  bench_cmd->add_option("--threads", bench_args.threads, "Kernel threads (default 1)");
  bench_cmd->add_option("--csv", bench_args.csv, "Also write the report as CSV");

  std::size_t synth_n = 32, synth_size = 64;
  std::uint64_t synth_seed = 1;
  std::string synth_out;
  bool synth_augment = false;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic lesion dataset and manifest");
  synth_cmd->add_option("--n", synth_n, "Number of images")->capture_default_str();
  synth_cmd->add_option("--size", synth_size, "Image side in pixels")->capture_default_str();
  synth_cmd->add_option("--seed", synth_seed, "Generator seed")->capture_default_str();
  synth_cmd->add_option("--out", synth_out, "Output directory")->required();
  synth_cmd->add_flag("--augment", synth_augment, "Also write the 8x augmented copies");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_args, out);
    if (*infer_cmd) return cmd_infer(infer_ckpt, infer_inputs, infer_out, infer_threads, out);
    if (*eval_cmd) return cmd_eval(eval_args, out);
    if (*count_cmd) return cmd_count(count_config, count_set, out);
    if (*bench_cmd) return cmd_bench(bench_args, out);
    if (*synth_cmd) return cmd_synth(synth_n, synth_size, synth_seed, synth_out, synth_augment, out);
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const IoError& e) {
    err << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << "\n";
    return kIo;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}

}  // namespace slsnet::cli
