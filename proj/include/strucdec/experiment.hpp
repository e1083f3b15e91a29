#pragma once

#include <functional>
#include <string>
#include <vector>

#include "strucdec/checkpoint.hpp"
#include "strucdec/config.hpp"
#include "strucdec/metrics.hpp"
#include "strucdec/training.hpp"

namespace strucdec {

// Run-level helpers shared by the command-line tool and the acceptance suite.

/// "SAE-12", "AdaAE-12", "AE", "VAE", "BetaVAE".
std::string model_label(const ModelConfig& cfg);

Splits experiment_splits(const ExperimentConfig& cfg, const FactorSpace& space);
/// "train", "val" or "test".
const std::vector<std::size_t>& split_by_name(const Splits& splits, const std::string& name);

/// Up to `n` members of `split`, a seeded uniform subset in shuffled order.
std::vector<std::size_t> seeded_subset(const std::vector<std::size_t>& split, std::size_t n, std::uint64_t seed);

struct TrainedRun {
  Checkpoint checkpoint;          // includes a latent bank from the training split
  std::vector<StepRecord> trace;  // every step
  double seconds = 0.0;           // training wall time, bank excluded
};

TrainedRun train_experiment(const ExperimentConfig& cfg, const FactorSpace& space, const Splits& splits,
                            const std::function<void(const StepRecord&)>& log = {});

/// Decoded images in [0, 1] (sigmoid of the logits), processed in chunks.
Tensor<float> decode_to_unit(const Model<float>& model, const Tensor<float>& latents);

enum class SampleMode { Hybrid, Prior };
SampleMode parse_sample_mode(const std::string& s);
std::string to_string(SampleMode m);

/// Latents for generation. Prior sampling is rejected for models without a
/// regularized latent space.
Tensor<float> sample_latents(const ModelConfig& cfg, const LatentBank& bank, SampleMode mode, std::size_t count, Rng& rng);

/// Feature statistics of `count` rendered images from a seeded subset of `split`.
FeatureStats reference_stats(const FactorSpace& space, const std::vector<std::size_t>& split, std::size_t count,
                             std::size_t image_size, std::uint64_t seed, std::uint64_t extractor_seed);

/// Frechet feature distance between decoded `latents` and `reference`.
double generation_frechet(const Model<float>& model, const Tensor<float>& latents, const FeatureStats& reference,
                          std::uint64_t extractor_seed);

/// Frechet feature distance between `count` split images and their reconstructions.
double reconstruction_frechet(const Model<float>& model, const FactorSpace& space, const std::vector<std::size_t>& split,
                              std::size_t count, std::uint64_t seed, std::uint64_t extractor_seed);

/// Reconstruction, Frechet and disentanglement metrics enabled by `cfg.metrics`.
std::vector<MetricRecord> evaluate_model(const Model<float>& model, const ExperimentConfig& cfg, const FactorSpace& space,
                                         const std::string& split_name, const std::vector<std::size_t>& split);

}  // namespace strucdec
