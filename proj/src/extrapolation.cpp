#include "strucdec/extrapolation.hpp"

#include <iomanip>
#include <set>
#include <sstream>
#include <unordered_set>

#include "strucdec/metrics.hpp"
#include "strucdec/training.hpp"

namespace strucdec {

UpdateFilter freeze_mask(FreezePart part) {
  switch (part) {
    case FreezePart::None: return [](const std::string&) { return true; };
    case FreezePart::All: return [](const std::string&) { return false; };
    case FreezePart::Encoder: return [](const std::string& n) { return n.rfind("enc.", 0) != 0; };
    case FreezePart::Decoder: return [](const std::string& n) { return n.rfind("dec.", 0) != 0; };
  }
  return {};
}

std::string to_string(FinetuneVariant v) {
  switch (v) {
    case FinetuneVariant::Neither: return "neither";
    case FinetuneVariant::EncoderOnly: return "encoder_only";
    case FinetuneVariant::DecoderOnly: return "decoder_only";
    case FinetuneVariant::Both: return "both";
  }
  return "?";
}

FreezePart frozen_part(FinetuneVariant v) {
  switch (v) {
    case FinetuneVariant::Neither: return FreezePart::All;
    case FinetuneVariant::EncoderOnly: return FreezePart::Decoder;
    case FinetuneVariant::DecoderOnly: return FreezePart::Encoder;
    case FinetuneVariant::Both: return FreezePart::None;
  }
  return FreezePart::All;
}

ExtrapolationPlan ExtrapolationPlan::shape_holdout(std::size_t phase1, std::size_t phase2) {
  return {factor::shape, {3}, phase1, phase2};
}

ExtrapolationPlan ExtrapolationPlan::orientation_holdout(std::size_t phase1, std::size_t phase2) {
  return {factor::orientation, {0, 4}, phase1, phase2};
}

ExtrapolationPlan ExtrapolationPlan::from_config(const ExtrapolationConfig& cfg) {
  if (cfg.holdout == "shape") return shape_holdout(cfg.phase1_iters, cfg.phase2_iters);
  if (cfg.holdout == "orientation") return orientation_holdout(cfg.phase1_iters, cfg.phase2_iters);
  throw Error("extrapolation.holdout: unknown value '" + cfg.holdout + "'");
}

std::string ExtrapolationResult::table(const std::string& model_name) const {
  std::ostringstream os;
  os << std::left << std::setw(12) << "model";
  for (auto v : kFinetuneVariants) os << std::right << std::setw(14) << to_string(v);
  os << "\n" << std::left << std::setw(12) << model_name << std::fixed << std::setprecision(3);
  for (auto v : kFinetuneVariants) os << std::right << std::setw(14) << at(v);
  os << "\n(MSE x1000 on " << eval_count << " novel test samples)\n";
  return os.str();
}

ExtrapolationResult run_extrapolation(const ModelConfig& cfg, const ExtrapolationPlan& plan, const TrainingConfig& training,
                                      const FactorSpace& space, const Splits& splits, const ProgressFn& progress) {
  if (plan.factor >= space.size()) throw Error("extrapolation: restricted factor index out of range");
  const std::size_t card = space.factors[plan.factor].cardinality;
  std::set<std::size_t> dropped;
  for (auto v : plan.held_out) {
    if (v >= card) throw Error("extrapolation: held-out value " + std::to_string(v) + " out of range");
    dropped.insert(v);
  }
  if (dropped.empty()) throw Error("extrapolation: no held-out values");
  if (card - dropped.size() < 2) throw Error("extrapolation: restriction must leave at least two values of the factor");

  const auto keep = plan.restriction();
  const auto phase1_split = holdout_filter(space, splits.train, keep);
  const auto eval = holdout_filter(space, splits.test, [&](const FactorTuple& t) { return !keep(t); });
  if (eval.empty()) throw Error("extrapolation: no test samples carry a held-out value");
  if (phase1_split.empty()) throw Error("extrapolation: restricted training split is empty");

  const std::unordered_set<std::size_t> eval_set(eval.begin(), eval.end());
  const BatchObserver hygiene = [&eval_set](const std::vector<std::size_t>& batch) {
    for (auto i : batch) {
      if (eval_set.count(i)) throw Error("extrapolation: evaluation sample " + std::to_string(i) + " reached a training batch");
    }
  };
  auto report = [&](const std::string& s) {
    if (progress) progress(s);
  };

  ExtrapolationResult result;
  result.eval_count = eval.size();
  result.phase1_train_count = phase1_split.size();

  Trainer phase1(Model<float>(cfg), training, space, phase1_split);
  phase1.set_batch_observer(hygiene);
  phase1.run(plan.phase1_iters, [&](const StepRecord& r) {
    report("phase1 step " + std::to_string(r.step) + " loss " + std::to_string(r.loss));
  });
  const Model<float> pretrained = phase1.model();
  result.mse_x1000[0] = recon_scores(pretrained, space, eval).mse_x1000();
  report("neither: " + std::to_string(result.mse_x1000[0]));

  for (std::size_t k = 1; k < kFinetuneVariants.size(); ++k) {
    const auto variant = kFinetuneVariants[k];
    if (plan.phase2_iters == 0) {
      result.mse_x1000[k] = result.mse_x1000[0];
      continue;
    }
    TrainingConfig t2 = training;
    t2.seed = mix_seed(training.seed, 0xF1AE);
    Trainer phase2(pretrained, t2, space, splits.train);
    phase2.set_update_filter(freeze_mask(frozen_part(variant)));
    phase2.set_batch_observer(hygiene);
    phase2.run(plan.phase2_iters);
    result.mse_x1000[k] = recon_scores(phase2.model(), space, eval).mse_x1000();
    report(to_string(variant) + ": " + std::to_string(result.mse_x1000[k]));
  }
  return result;
}

}  // namespace strucdec
