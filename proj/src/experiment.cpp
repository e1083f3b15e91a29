#include "strucdec/experiment.hpp"

#include <chrono>

namespace strucdec {

namespace {

constexpr std::size_t kChunk = 128;

Tensor<float> rows(const Tensor<float>& t, std::size_t start, std::size_t len) {
  const std::size_t per = t.size() / t.dim(0);
  Shape shape = t.shape();
  shape[0] = len;
  return Tensor<float>(shape, std::vector<float>(t.vec().begin() + static_cast<std::ptrdiff_t>(start * per),
                                                 t.vec().begin() + static_cast<std::ptrdiff_t>((start + len) * per)));
}

void put_rows(Tensor<float>& dst, std::size_t start, const Tensor<float>& src) {
  std::copy(src.vec().begin(), src.vec().end(), dst.vec().begin() + static_cast<std::ptrdiff_t>(start * (dst.size() / dst.dim(0))));
}

}  // namespace

std::string model_label(const ModelConfig& cfg) {
  if (cfg.is_structured()) return to_string(cfg.variant) + "-" + std::to_string(cfg.segments);
  return to_string(cfg.variant);
}

Splits experiment_splits(const ExperimentConfig& cfg, const FactorSpace& space) {
  return make_splits(space, cfg.dataset.split_seed, cfg.dataset.train_ratio, cfg.dataset.val_ratio, cfg.dataset.test_ratio);
}

const std::vector<std::size_t>& split_by_name(const Splits& splits, const std::string& name) {
  if (name == "train") return splits.train;
  if (name == "val") return splits.val;
  if (name == "test") return splits.test;
  throw Error("unknown split '" + name + "' (expected train, val or test)");
}

std::vector<std::size_t> seeded_subset(const std::vector<std::size_t>& split, std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> pick(split);
  Rng rng(mix_seed(seed, 0x5B5E7));
  rng.shuffle(pick.begin(), pick.end());
  if (pick.size() > n) pick.resize(n);
  return pick;
}

TrainedRun train_experiment(const ExperimentConfig& cfg, const FactorSpace& space, const Splits& splits,
                            const std::function<void(const StepRecord&)>& log) {
  cfg.validate();
  Trainer trainer(Model<float>(cfg.model), cfg.training, space, splits.train);
  const auto t0 = std::chrono::steady_clock::now();
  auto trace = trainer.run(cfg.training.iters, log);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  auto bank = collect_bank(trainer.model(), space, splits.train, cfg.sampler.bank_size, cfg.sampler.seed);
  return {Checkpoint{trainer.model(), trainer.adam(), trainer.steps_done(), std::move(bank)}, std::move(trace), seconds};
}

Tensor<float> decode_to_unit(const Model<float>& model, const Tensor<float>& latents) {
  const std::size_t N = latents.dim(0), S = model.config().image_size;
  Tensor<float> out({N, 3, S, S});
  for (std::size_t s = 0; s < N; s += kChunk) {
    const std::size_t len = std::min(kChunk, N - s);
    put_rows(out, s, sigmoid(model.decode(rows(latents, s, len))));
  }
  return out;
}

SampleMode parse_sample_mode(const std::string& s) {
  if (s == "hybrid") return SampleMode::Hybrid;
  if (s == "prior") return SampleMode::Prior;
  throw Error("unknown sampling mode '" + s + "' (expected hybrid or prior)");
}

std::string to_string(SampleMode m) { return m == SampleMode::Hybrid ? "hybrid" : "prior"; }

Tensor<float> sample_latents(const ModelConfig& cfg, const LatentBank& bank, SampleMode mode, std::size_t count, Rng& rng) {
  if (mode == SampleMode::Hybrid) return hybrid_sample(bank, count, rng);
  if (!cfg.is_vae()) {
    throw Error("prior sampling needs a VAE or BetaVAE checkpoint; " + to_string(cfg.variant) +
                " has no regularized latent space (use --mode hybrid)");
  }
  return prior_sample(cfg.latent_dim, count, rng);
}

FeatureStats reference_stats(const FactorSpace& space, const std::vector<std::size_t>& split, std::size_t count,
                             std::size_t image_size, std::uint64_t seed, std::uint64_t extractor_seed) {
  const auto pick = seeded_subset(split, count, seed);
  return extract_features(render_batch(space, pick, image_size).images, extractor_seed);
}

double generation_frechet(const Model<float>& model, const Tensor<float>& latents, const FeatureStats& reference,
                          std::uint64_t extractor_seed) {
  return frechet_distance(extract_features(decode_to_unit(model, latents), extractor_seed), reference);
}

double reconstruction_frechet(const Model<float>& model, const FactorSpace& space, const std::vector<std::size_t>& split,
                              std::size_t count, std::uint64_t seed, std::uint64_t extractor_seed) {
  const auto pick = seeded_subset(split, count, seed);
  const auto images = render_batch(space, pick, model.config().image_size).images;
  Tensor<float> latents({pick.size(), model.config().latent_dim});
  for (std::size_t s = 0; s < pick.size(); s += kChunk) {
    const std::size_t len = std::min(kChunk, pick.size() - s);
    put_rows(latents, s, model.encode(rows(images, s, len)));
  }
  return frechet_distance(extract_features(decode_to_unit(model, latents), extractor_seed),
                          extract_features(images, extractor_seed));
}

std::vector<MetricRecord> evaluate_model(const Model<float>& model, const ExperimentConfig& cfg, const FactorSpace& space,
                                         const std::string& split_name, const std::vector<std::size_t>& split) {
  const auto& m = cfg.metrics;
  const std::string label = model_label(model.config());
  const std::uint64_t seed = cfg.training.seed;
  std::vector<MetricRecord> out;
  auto add = [&](const std::string& metric, double value, std::size_t n) {
    out.push_back(MetricRecord{label, seed, split_name, metric, value, n, m.extractor_seed, ""});
  };
  if (m.recon) {
    const auto r = recon_scores(model, space, split);
    add("recon_bce", r.bce, split.size());
    add("recon_mse_x1000", r.mse_x1000(), split.size());
  }
  if (m.frechet) {
    const std::size_t n = std::min(m.frechet_count, split.size());
    add("recon_frechet", reconstruction_frechet(model, space, split, n, seed, m.extractor_seed), n);
  }
  if (m.disentanglement) {
    const auto d = evaluate_disentanglement(model, space, split, m.sample_count, seed);
    add("dci_d", d.dci_d, d.sample_count);
    add("dci_c", d.dci_c, d.sample_count);
    add("mig", d.mig, d.sample_count);
    add("sap", d.sap, d.sample_count);
    add("modularity", d.modularity, d.sample_count);
  }
  return out;
}

}  // namespace strucdec
