#include "strucdec/training.hpp"

#include <chrono>
#include <json.hpp>

namespace strucdec {

namespace {

double now_seconds() {
  using namespace std::chrono;
  return duration<double>(steady_clock::now().time_since_epoch()).count();
}

}  // namespace

std::string StepRecord::to_jsonl(bool with_kl) const {
  nlohmann::json j;
  j["step"] = step;
  j["loss"] = loss;
  j["bce"] = bce;
  if (with_kl) j["kl"] = kl;
  j["wall_time"] = wall_time;
  return j.dump();
}

Trainer::Trainer(Model<float> model, TrainingConfig training, const FactorSpace& space, std::vector<std::size_t> split)
    : Trainer(std::move(model), AdamState<float>{}, 0, std::move(training), space, std::move(split)) {
  adam_ = make_adam_state(model_.params(), AdamHyper{training_.lr});
}

Trainer::Trainer(Model<float> model, AdamState<float> adam, std::uint64_t step, TrainingConfig training,
                 const FactorSpace& space, std::vector<std::size_t> split)
    : model_(std::move(model)),
      adam_(std::move(adam)),
      step_(step),
      training_(std::move(training)),
      space_(&space),
      split_(std::move(split)),
      start_time_(now_seconds()) {
  if (split_.empty()) throw Error("trainer: empty training split");
}

StepRecord Trainer::step() {
  const auto indices = batch_for_step(split_, training_.batch, training_.seed, step_);
  if (observer_) observer_(indices);
  const auto batch = render_batch(*space_, indices, model_.config().image_size);
  Rng rng(mix_seed(training_.seed ^ 0x7E9A11, step_));
  model_.zero_grad();
  Tape<float> tape;
  const auto parts = model_.loss(tape, batch.images, rng);
  tape.backward(parts.total);
  adam_step(model_.params(), adam_, filter_);
  ++step_;
  return {step_, static_cast<double>(parts.total.value()[0]), parts.bce, parts.kl, now_seconds() - start_time_};
}

std::vector<StepRecord> Trainer::run(std::size_t iters, const std::function<void(const StepRecord&)>& log) {
  std::vector<StepRecord> out;
  out.reserve(iters);
  for (std::size_t i = 0; i < iters; ++i) {
    out.push_back(step());
    if (log && (out.back().step % training_.log_every == 0 || i + 1 == iters)) log(out.back());
  }
  return out;
}

}  // namespace strucdec
