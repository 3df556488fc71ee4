#include "ccfpse/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "ccfpse/ops.hpp"

namespace ccfpse {

namespace fs = std::filesystem;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

AdamConfig adam_config(const TrainConfig& t, double lr) { return AdamConfig{lr, t.beta1, t.beta2, 1e-8}; }

double grad_norm(const ParamStore<float>& store) {
  double sq = 0;
  for (const auto& p : store.params()) {
    if (!p.tensor.has_grad()) continue;
    for (float g : p.tensor.grad()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

// Re-enables discriminator recording even if the generator update throws.
class FrozenScope {
 public:
  explicit FrozenScope(const ParamStore<float>& store) : store_(store) { store_.set_trainable(false); }
  ~FrozenScope() { store_.set_trainable(true); }
  FrozenScope(const FrozenScope&) = delete;
  FrozenScope& operator=(const FrozenScope&) = delete;

 private:
  const ParamStore<float>& store_;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

[[noreturn]] void abort_non_finite(const TrainState& state, const std::string& phase, const StepLosses& l) {
  std::ostringstream msg;
  msg << "non-finite value during " << phase << " at step " << state.step + 1 << ": loss_d=" << fmt(l.loss_d)
      << " loss_g=" << fmt(l.loss_g) << " adv=" << fmt(l.adv) << " perc=" << fmt(l.perc) << " fm=" << fmt(l.fm)
      << "; grad norms: generator=" << fmt(grad_norm(state.generator.params()))
      << " weight_net=" << fmt(grad_norm(state.weight_net.params()))
      << " discriminator=" << fmt(grad_norm(state.discriminator.params()));
  throw NumericError(msg.str());
}

std::vector<LabelMap> labels_of(std::span<const Sample> samples) {
  std::vector<LabelMap> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

bool running_stats_ready(const ParamStore<float>& store) {
  for (const auto& b : store.buffers()) {
    const auto& n = b.name;
    if (n.size() >= 12 && n.compare(n.size() - 12, 12, ".num_batches") == 0 && b.tensor.data()[0] == 0.0f) {
      return false;
    }
  }
  return true;
}

}  // namespace

TrainState::TrainState(ExperimentConfig cfg)
    : config((cfg.validate(), std::move(cfg))),
      generator(config.resolved_generator(), derive_seed(config.train.seed, 1)),
      weight_net(config.resolved_weight_net(), config.resolved_generator(), config.data.task.num_labels,
                 derive_seed(config.train.seed, 2)),
      discriminator(config.resolved_discriminator(), config.data.task.num_labels, config.generator.out_channels,
                    derive_seed(config.train.seed, 3)),
      extractor(derive_seed(config.train.seed, 4), config.generator.out_channels),
      opt_generator(generator.params(), adam_config(config.train, config.train.lr_g)),
      opt_weight_net(weight_net.params(), adam_config(config.train, config.train.lr_g)),
      opt_discriminator(discriminator.params(), adam_config(config.train, config.train.lr_d)),
      rng(config.train.seed) {}

Tensor<float> stack_images(std::span<const Sample> samples) {
  if (samples.empty()) throw ArgumentError("stack_images: empty batch");
  const auto& first = samples.front().image;
  const std::int64_t per = first.numel();
  Shape shape{static_cast<std::int64_t>(samples.size())};
  shape.insert(shape.end(), first.shape().begin(), first.shape().end());
  std::vector<float> values;
  values.reserve(static_cast<std::size_t>(per) * samples.size());
  for (const auto& s : samples) {
    if (s.image.shape() != first.shape()) throw DimensionError("stack_images: images must share extents");
    values.insert(values.end(), s.image.data().begin(), s.image.data().end());
  }
  return Tensor<float>(std::move(shape), std::move(values));
}

Tensor<float> sample_noise(std::mt19937_64& rng, const GeneratorConfig& config, std::int64_t n) {
  Shape shape{n, config.z_channels, config.base_height, config.base_width};
  std::normal_distribution<float> dist(0.0f, 1.0f);
  std::vector<float> values(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : values) v = dist(rng);
  return Tensor<float>(std::move(shape), std::move(values));
}

std::vector<std::size_t> sample_batch(std::mt19937_64& rng, std::size_t dataset_size, int batch_size) {
  if (dataset_size == 0) throw ArgumentError("sample_batch: empty dataset");
  if (batch_size <= 0) throw ArgumentError("sample_batch: batch size must be positive");
  const auto b = static_cast<std::size_t>(batch_size);
  std::vector<std::size_t> out;
  if (dataset_size < b) {
    for (std::size_t i = 0; i < b; ++i) {
      out.push_back(std::uniform_int_distribution<std::size_t>(0, dataset_size - 1)(rng));
    }
    return out;
  }
  std::vector<std::size_t> pool(dataset_size);
  for (std::size_t i = 0; i < dataset_size; ++i) pool[i] = i;
  for (std::size_t i = 0; i < b; ++i) {
    const auto j = std::uniform_int_distribution<std::size_t>(i, dataset_size - 1)(rng);
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

Tensor<float> synthesize(TrainState& state, const Tensor<float>& z, std::span<const LabelMap> labels, Mode mode) {
  return state.generator.forward(z, state.weight_net.predict_all(labels), mode);
}

StepLosses train_step(TrainState& state, std::span<const Sample> batch) {
  if (batch.empty()) throw ArgumentError("train_step: empty batch");
  const auto& tc = state.config.train;
  const auto labels = labels_of(batch);
  const auto real = stack_images(batch);
  const auto n = static_cast<std::int64_t>(batch.size());
  auto& gen = state.generator;
  auto& wnet = state.weight_net;
  auto& disc = state.discriminator;
  StepLosses out;

  state.opt_discriminator.config = adam_config(tc, tc.lr_d);
  state.opt_generator.config = adam_config(tc, tc.lr_g);
  state.opt_weight_net.config = adam_config(tc, tc.lr_g);

  for (int r = 0; r < tc.d_steps; ++r) {
    Tensor<float> fake;
    {
      NoGradGuard guard;
      fake = synthesize(state, sample_noise(state.rng, gen.config(), n), labels, Mode::kTrain);
    }
    disc.params().zero_grad();
    const auto real_out = disc.forward(real, labels);
    const auto fake_out = disc.forward(fake, labels);
    const auto loss_d = d_hinge_loss(real_out.total, fake_out.total);
    backward(loss_d);
    out.loss_d = loss_d.item();
    if (!std::isfinite(out.loss_d) || !std::isfinite(grad_norm(disc.params()))) {
      abort_non_finite(state, "discriminator update", out);
    }
    adam_step(disc.params(), state.opt_discriminator);
    disc.params().zero_grad();
  }

  {
    FrozenScope frozen(disc.params());
    std::vector<Tensor<float>> real_features;
    if (tc.lambda_fm > 0) {
      NoGradGuard guard;
      real_features = disc.forward(real, labels).features;
    }
    gen.params().zero_grad();
    wnet.params().zero_grad();
    const auto fake = synthesize(state, sample_noise(state.rng, gen.config(), n), labels, Mode::kTrain);
    const auto fake_out = disc.forward(fake, labels);
    const auto adv = g_adv_loss(fake_out.total);
    Tensor<float> perc;
    Tensor<float> fm;
    if (tc.lambda_p > 0) perc = perceptual_loss(fake, real, state.extractor);
    if (tc.lambda_fm > 0) fm = feature_matching_loss(fake_out.features, real_features);
    const auto total = g_total_loss(adv, perc, fm, LossWeights{tc.lambda_p, tc.lambda_fm});
    backward(total);
    out.adv = adv.item();
    out.perc = perc.defined() ? perc.item() : 0.0;
    out.fm = fm.defined() ? fm.item() : 0.0;
    out.loss_g = total.item();
    if (!std::isfinite(out.loss_g) || !std::isfinite(grad_norm(gen.params())) ||
        !std::isfinite(grad_norm(wnet.params()))) {
      abort_non_finite(state, "generator update", out);
    }
  }
  adam_step(gen.params(), state.opt_generator);
  adam_step(wnet.params(), state.opt_weight_net);
  gen.params().zero_grad();
  wnet.params().zero_grad();
  ++state.step;
  return out;
}

std::vector<Tensor<float>> generate_images(TrainState& state, std::span<const LabelMap> labels, std::uint64_t seed) {
  std::vector<Tensor<float>> out;
  if (labels.empty()) return out;
  const auto& gcfg = state.generator.config();
  const bool running = state.config.train.eval_running_stats && running_stats_ready(state.generator.params());
  const Mode mode = running ? Mode::kEval : Mode::kTrain;
  // Batch-statistics generation must not disturb the running averages.
  std::vector<std::vector<float>> saved;
  if (mode == Mode::kTrain) {
    for (const auto& b : state.generator.params().buffers()) {
      saved.emplace_back(b.tensor.data().begin(), b.tensor.data().end());
    }
  }
  std::mt19937_64 rng(seed);
  NoGradGuard guard;
  const std::size_t bs = static_cast<std::size_t>(state.config.train.batch_size);
  for (std::size_t start = 0; start < labels.size(); start += bs) {
    const auto chunk = labels.subspan(start, std::min(bs, labels.size() - start));
    const auto images = synthesize(state, sample_noise(rng, gcfg, static_cast<std::int64_t>(chunk.size())), chunk,
                                   mode);
    const std::int64_t per = images.numel() / images.dim(0);
    const auto px = images.data();
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto begin = px.begin() + static_cast<std::ptrdiff_t>(i) * per;
      out.emplace_back(Shape{images.dim(1), images.dim(2), images.dim(3)}, std::vector<float>(begin, begin + per));
    }
  }
  if (mode == Mode::kTrain) {
    std::size_t i = 0;
    for (const auto& b : state.generator.params().buffers()) {
      std::copy(saved[i].begin(), saved[i].end(), b.tensor.mutable_data().begin());
      ++i;
    }
  }
  return out;
}

SegMetrics evaluate(TrainState& state, std::span<const Sample> eval, std::uint64_t seed) {
  if (eval.empty()) throw ArgumentError("evaluate: empty evaluation set");
  const auto labels = labels_of(eval);
  const auto images = generate_images(state, labels, seed);
  ConfusionMatrix cm(state.config.data.task.num_labels);
  for (std::size_t i = 0; i < images.size(); ++i) cm.add(segment_by_palette(images[i], state.config.data.task), labels[i]);
  return cm.metrics();
}

TrainSummary run_training(TrainState& state, std::span<const Sample> train, std::span<const Sample> eval,
                          const RunOptions& options) {
  if (train.empty()) throw ArgumentError("run_training: training set is empty");
  const auto t0 = std::chrono::steady_clock::now();
  const auto& tc = state.config.train;
  std::error_code ec;
  fs::create_directories(options.out_dir, ec);
  if (ec) throw IoError("cannot create " + options.out_dir.string() + ": " + ec.message());

  TrainSummary summary;
  summary.log = options.out_dir / "log.csv";
  summary.checkpoint = options.out_dir / "checkpoint.ccfp";
  const bool append = state.step > 0 && fs::exists(summary.log);
  std::ofstream log(summary.log, append ? std::ios::app : std::ios::trunc);
  if (!log) throw IoError("cannot write " + summary.log.string());
  if (!append) log << "step,loss_d,loss_g,adv,perc,fm\n";

  const std::size_t preview = std::min<std::size_t>(8, eval.empty() ? train.size() : eval.size());
  const auto preview_labels = labels_of((eval.empty() ? train : eval).first(preview));

  std::vector<Sample> batch;
  while (state.step < tc.steps) {
    batch.clear();
    for (auto i : sample_batch(state.rng, train.size(), tc.batch_size)) batch.push_back(train[i]);
    const auto losses = train_step(state, batch);
    log << state.step << ',' << fmt(losses.loss_d) << ',' << fmt(losses.loss_g) << ',' << fmt(losses.adv) << ','
        << fmt(losses.perc) << ',' << fmt(losses.fm) << '\n';
    log.flush();
    summary.last = losses;
    if (options.on_step) options.on_step(state.step, losses);
    if (tc.checkpoint_every > 0 && state.step % tc.checkpoint_every == 0) save_checkpoint(state, summary.checkpoint);
    if (tc.sample_every > 0 && state.step % tc.sample_every == 0) {
      const auto images = generate_images(state, preview_labels, derive_seed(tc.seed, 99));
      std::ostringstream name;
      name << "step_" << std::setw(6) << std::setfill('0') << state.step << ".ppm";
      write_ppm(options.out_dir / "samples" / name.str(), make_grid(images, 4));
    }
  }
  if (!log) throw IoError("failed writing " + summary.log.string());
  save_checkpoint(state, summary.checkpoint);
  summary.steps = state.step;
  if (options.evaluate && !eval.empty()) summary.metrics = evaluate(state, eval, derive_seed(tc.seed, 7));
  summary.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return summary;
}

std::vector<Sample> training_set(const ExperimentConfig& config) {
  const auto& d = config.data;
  if (!d.train_manifest.empty()) return load_dataset(d.train_manifest, d.task.num_labels);
  return generate_dataset(d.task, d.train_count, d.seed);
}

std::vector<Sample> evaluation_set(const ExperimentConfig& config) {
  const auto& d = config.data;
  if (!d.eval_manifest.empty()) return load_dataset(d.eval_manifest, d.task.num_labels);
  return generate_dataset(d.task, d.eval_count, d.eval_seed);
}

}  // namespace ccfpse
