#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "ccfpse/config.hpp"
#include "ccfpse/data.hpp"
#include "ccfpse/discriminator.hpp"
#include "ccfpse/generator.hpp"
#include "ccfpse/losses.hpp"
#include "ccfpse/metrics.hpp"
#include "ccfpse/weight_net.hpp"

namespace ccfpse {

/// Batch means of one step. `loss_g` = adv + lambda_P*perc + lambda_FM*fm.
struct StepLosses {
  double loss_d = 0.0;
  double loss_g = 0.0;
  double adv = 0.0;
  double perc = 0.0;
  double fm = 0.0;
};

/// Independent stream seed derived from a base seed (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Everything a run needs to continue bit-exactly: models, optimizer moments,
/// step counter and the sampling generator.
struct TrainState {
  explicit TrainState(ExperimentConfig cfg);

  ExperimentConfig config;
  Generator<float> generator;
  WeightNet<float> weight_net;
  Discriminator<float> discriminator;
  FixedFeatureExtractor<float> extractor;
  AdamState<float> opt_generator;
  AdamState<float> opt_weight_net;
  AdamState<float> opt_discriminator;
  std::int64_t step = 0;
  std::mt19937_64 rng;
};

/// [N,3,H,W] from a list of samples.
Tensor<float> stack_images(std::span<const Sample> samples);

/// Standard normal noise [n, z_channels, base_height, base_width].
Tensor<float> sample_noise(std::mt19937_64& rng, const GeneratorConfig& config, std::int64_t n);

/// batch_size indices drawn without replacement (with replacement only when
/// the dataset is smaller than a batch).
std::vector<std::size_t> sample_batch(std::mt19937_64& rng, std::size_t dataset_size, int batch_size);

/// Layout-conditioned generation: weight net, then generator. Records a graph
/// only when grad mode is on.
Tensor<float> synthesize(TrainState& state, const Tensor<float>& z, std::span<const LabelMap> labels, Mode mode);

/// One (or d_steps) discriminator update on detached fakes, then one
/// generator + weight-net update on fresh fakes with the discriminator
/// frozen. NumericError, before any parameter changes, on non-finite losses
/// or gradients.
StepLosses train_step(TrainState& state, std::span<const Sample> batch);

/// Images [3,H,W] for each layout. Noise comes from a generator seeded with
/// `seed`; normalization follows train.eval_running_stats.
std::vector<Tensor<float>> generate_images(TrainState& state, std::span<const LabelMap> labels, std::uint64_t seed);

/// Generates from the evaluation layouts, segments by palette and scores
/// against the layouts.
SegMetrics evaluate(TrainState& state, std::span<const Sample> eval, std::uint64_t seed);

/// Layout described in the README: magic, version, JSON metadata, payloads.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path);
/// FormatError on bad magic/version/metadata, IoError on truncation.
std::unique_ptr<TrainState> load_checkpoint(const std::filesystem::path& path);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct RunOptions {
  std::filesystem::path out_dir;
  bool evaluate = true;
  std::function<void(std::int64_t, const StepLosses&)> on_step;
};

struct TrainSummary {
  std::int64_t steps = 0;
  std::optional<StepLosses> last;
  std::optional<SegMetrics> metrics;
  std::filesystem::path log;
  std::filesystem::path checkpoint;
  double seconds = 0.0;
};

/// Continues `state` up to config.train.steps. Appends to out_dir/log.csv
/// (header `step,loss_d,loss_g,adv,perc,fm`), checkpoints on cadence and at the
/// end to out_dir/checkpoint.ccfp, writes sample grids to out_dir/samples.
/// ArgumentError on an empty training set.
TrainSummary run_training(TrainState& state, std::span<const Sample> train, std::span<const Sample> eval,
                          const RunOptions& options);

/// Training and evaluation sets described by the config: manifests when
/// given, otherwise generated in memory.
std::vector<Sample> training_set(const ExperimentConfig& config);
std::vector<Sample> evaluation_set(const ExperimentConfig& config);

}  // namespace ccfpse
