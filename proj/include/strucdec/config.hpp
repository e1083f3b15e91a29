#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "strucdec/model.hpp"

namespace strucdec {

struct DatasetConfig {
  std::uint64_t split_seed = 0;
  double train_ratio = 0.7;
  double val_ratio = 0.1;
  double test_ratio = 0.2;
  bool operator==(const DatasetConfig&) const = default;
};

struct TrainingConfig {
  std::size_t iters = 3000;
  std::size_t batch = 64;
  double lr = 5e-4;
  std::uint64_t seed = 0;
  std::size_t log_every = 50;
  bool operator==(const TrainingConfig&) const = default;
};

struct SamplerConfig {
  std::size_t bank_size = 128;
  std::uint64_t seed = 0;
  std::size_t count = 64;
  bool operator==(const SamplerConfig&) const = default;
};

struct MetricsConfig {
  bool recon = true;
  bool frechet = true;
  bool disentanglement = true;
  std::size_t sample_count = 10000;
  std::size_t frechet_count = 2000;
  std::uint64_t extractor_seed = 0;
  bool operator==(const MetricsConfig&) const = default;
};

struct ExtrapolationConfig {
  /// "shape" (drop the fourth shape) or "orientation" (drop the two extreme offsets).
  std::string holdout = "shape";
  std::size_t phase1_iters = 2400;
  std::size_t phase2_iters = 600;
  bool operator==(const ExtrapolationConfig&) const = default;
};

/// Everything one CLI run needs. Strict JSON: unknown keys are rejected,
/// missing keys take the defaults above.
struct ExperimentConfig {
  std::string name = "run";
  ModelConfig model;
  DatasetConfig dataset;
  TrainingConfig training;
  SamplerConfig sampler;
  MetricsConfig metrics;
  ExtrapolationConfig extrapolation;
  std::string output_dir = "runs/default";

  /// Overrides every seed with one value.
  void reseed(std::uint64_t seed);
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
std::string dump_experiment_config(const ExperimentConfig& cfg);

}  // namespace strucdec
