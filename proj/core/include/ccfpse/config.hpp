#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccfpse/data.hpp"
#include "ccfpse/discriminator.hpp"
#include "ccfpse/generator.hpp"
#include "ccfpse/weight_net.hpp"

namespace ccfpse {

struct DataConfig {
  SyntheticTaskSpec task;
  std::int64_t train_count = 200;
  std::int64_t eval_count = 50;
  /// Samples written by make-data.
  std::int64_t count = 200;
  std::uint64_t seed = 1234;
  std::uint64_t eval_seed = 4321;
  /// Optional manifests replacing the in-memory synthetic sets.
  std::string train_manifest;
  std::string eval_manifest;
};

struct TrainConfig {
  double lr_g = 1e-4;
  double lr_d = 4e-4;
  double beta1 = 0.0;
  double beta2 = 0.999;
  int batch_size = 8;
  std::int64_t steps = 3000;
  std::uint64_t seed = 1;
  double lambda_p = 10.0;
  double lambda_fm = 20.0;
  /// Discriminator updates per generator update.
  int d_steps = 1;
  // Ablation axes.
  GeneratorVariant generator = GeneratorVariant::kConditionalConv;
  PredictorKind predictor = PredictorKind::kFeaturePyramid;
  DiscriminatorVariant discriminator = DiscriminatorVariant::kFeaturePyramid;
  bool embeddings = true;
  // Cadences in steps; 0 disables.
  std::int64_t checkpoint_every = 1000;
  std::int64_t sample_every = 500;
  /// Normalization statistics for generation after training: running
  /// averages (true) or the statistics of each generated batch (false).
  bool eval_running_stats = true;

  void validate() const;
};

struct ExperimentConfig {
  DataConfig data;
  GeneratorConfig generator;
  WeightNetConfig weight_net;
  DiscriminatorConfig discriminator;
  TrainConfig train;

  /// Model configs with the ablation flags of `train` applied.
  GeneratorConfig resolved_generator() const;
  WeightNetConfig resolved_weight_net() const;
  DiscriminatorConfig resolved_discriminator() const;
  void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& config);

/// Missing keys keep their defaults; unknown keys and ill-typed values raise
/// ConfigError naming the dotted path.
ExperimentConfig config_from_json(const nlohmann::json& doc);

/// Applies "section.key=value". The value is parsed as JSON when possible and
/// taken as a string otherwise. ConfigError on malformed assignments.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Defaults, then the optional file, then each override in order.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::vector<std::string>& overrides = {});

std::string to_string(GeneratorVariant v);
std::string to_string(PredictorKind v);
std::string to_string(DiscriminatorVariant v);
std::string to_string(StageOrder v);

}  // namespace ccfpse
