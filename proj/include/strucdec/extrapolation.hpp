#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "strucdec/adam.hpp"
#include "strucdec/config.hpp"
#include "strucdec/dataset.hpp"
#include "strucdec/model.hpp"

namespace strucdec {

enum class FreezePart { None, Encoder, Decoder, All };

/// Update filter for adam_step: rejects every parameter of the frozen part.
UpdateFilter freeze_mask(FreezePart part);

enum class FinetuneVariant { Neither, EncoderOnly, DecoderOnly, Both };
inline constexpr std::array<FinetuneVariant, 4> kFinetuneVariants = {FinetuneVariant::Neither, FinetuneVariant::EncoderOnly,
                                                                     FinetuneVariant::DecoderOnly, FinetuneVariant::Both};
std::string to_string(FinetuneVariant v);
/// Part held fixed while the named part is fine-tuned.
FreezePart frozen_part(FinetuneVariant v);

struct ExtrapolationPlan {
  std::size_t factor = factor::shape;
  std::vector<std::size_t> held_out;  // values excluded from phase 1
  std::size_t phase1_iters = 2400;
  std::size_t phase2_iters = 600;

  /// Drop the fourth shape.
  static ExtrapolationPlan shape_holdout(std::size_t phase1 = 2400, std::size_t phase2 = 600);
  /// Drop the two most extreme horizontal offsets.
  static ExtrapolationPlan orientation_holdout(std::size_t phase1 = 2400, std::size_t phase2 = 600);
  static ExtrapolationPlan from_config(const ExtrapolationConfig& cfg);

  FactorPredicate restriction() const { return exclude_values(factor, held_out); }
};

struct ExtrapolationResult {
  std::array<double, 4> mse_x1000{};  // indexed like kFinetuneVariants
  std::size_t eval_count = 0;
  std::size_t phase1_train_count = 0;

  double at(FinetuneVariant v) const { return mse_x1000[static_cast<std::size_t>(v)]; }
  std::string table(const std::string& model_name) const;
};

using ProgressFn = std::function<void(const std::string&)>;

/// Phase 1 trains encoder and decoder on the restricted training split. Each
/// variant then fine-tunes its own copy on the full training split with the
/// other part frozen (fresh optimizer state). Reconstruction MSE is measured
/// on test samples carrying a held-out value, which no training batch contains.
ExtrapolationResult run_extrapolation(const ModelConfig& cfg, const ExtrapolationPlan& plan, const TrainingConfig& training,
                                      const FactorSpace& space, const Splits& splits, const ProgressFn& progress = {});

}  // namespace strucdec
