#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "strucdec/adam.hpp"
#include "strucdec/config.hpp"
#include "strucdec/dataset.hpp"
#include "strucdec/model.hpp"

namespace strucdec {

struct StepRecord {
  std::uint64_t step = 0;  // 1-based count of completed steps
  double loss = 0.0;
  double bce = 0.0;
  double kl = 0.0;
  double wall_time = 0.0;  // seconds since the trainer was created

  std::string to_jsonl(bool with_kl) const;
};

/// Called with the grid indices of every batch before it is used.
using BatchObserver = std::function<void(const std::vector<std::size_t>&)>;

/// Single-threaded owner of a model and its optimizer. Step `t` always draws
/// the same batch and the same reparameterization noise for a given seed, so
/// a run resumed from a checkpoint continues bit-identically.
class Trainer {
 public:
  Trainer(Model<float> model, TrainingConfig training, const FactorSpace& space, std::vector<std::size_t> split);
  Trainer(Model<float> model, AdamState<float> adam, std::uint64_t step, TrainingConfig training, const FactorSpace& space,
          std::vector<std::size_t> split);

  StepRecord step();
  /// Runs `iters` steps, invoking `log` every training.log_every steps and on the last one.
  std::vector<StepRecord> run(std::size_t iters, const std::function<void(const StepRecord&)>& log = {});

  void set_update_filter(UpdateFilter f) { filter_ = std::move(f); }
  void set_batch_observer(BatchObserver o) { observer_ = std::move(o); }

  Model<float>& model() { return model_; }
  const Model<float>& model() const { return model_; }
  const AdamState<float>& adam() const { return adam_; }
  std::uint64_t steps_done() const { return step_; }
  const TrainingConfig& training() const { return training_; }

 private:
  Model<float> model_;
  AdamState<float> adam_;
  std::uint64_t step_ = 0;
  TrainingConfig training_;
  const FactorSpace* space_;
  std::vector<std::size_t> split_;
  UpdateFilter filter_;
  BatchObserver observer_;
  double start_time_;
};

}  // namespace strucdec
