#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "strucdec/experiment.hpp"
#include "strucdec/extrapolation.hpp"
#include "strucdec/image_grid.hpp"

namespace strucdec::cli {

namespace fs = std::filesystem;

namespace {

ExperimentConfig resolve_config(const CommandOptions& o) {
  ExperimentConfig cfg = o.config.empty() ? ExperimentConfig{} : load_experiment_config(o.config);
  if (o.seed) cfg.reseed(*o.seed);
  return cfg;
}

fs::path output_dir(const CommandOptions& o, const ExperimentConfig& cfg) {
  fs::path dir = o.out.empty() ? fs::path(cfg.output_dir) : fs::path(o.out);
  fs::create_directories(dir);
  return dir;
}

Checkpoint require_checkpoint(const CommandOptions& o, ExperimentConfig& cfg) {
  if (o.checkpoint.empty()) throw Error("--checkpoint is required for this command");
  auto ckpt = load_checkpoint(o.checkpoint);
  cfg.model = ckpt.model.config();
  return ckpt;
}

void append_metrics(const fs::path& dir, const std::vector<MetricRecord>& records) {
  std::ofstream log(dir / "metrics.jsonl", std::ios::app);
  for (const auto& r : records) {
    log << r.to_jsonl() << '\n';
    std::cout << r.to_jsonl() << '\n';
  }
}

LatentBank bank_for(const Checkpoint& ckpt, const ExperimentConfig& cfg, const FactorSpace& space, const Splits& splits) {
  if (ckpt.bank) return *ckpt.bank;
  std::cerr << "checkpoint has no latent bank; encoding " << cfg.sampler.bank_size << " training images\n";
  return collect_bank(ckpt.model, space, splits.train, cfg.sampler.bank_size, cfg.sampler.seed);
}

std::pair<std::size_t, std::size_t> grid_shape(std::size_t n) {
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n))));
  return {(n + cols - 1) / cols, cols};
}

Tensor<float> encode_one(const Model<float>& model, const FactorSpace& space, std::size_t index) {
  return model.encode(render_batch(space, std::span<const std::size_t>(&index, 1), model.config().image_size).images);
}

}  // namespace

int cmd_train(const CommandOptions& o) {
  const auto cfg = resolve_config(o);
  const auto dir = output_dir(o, cfg);
  const auto space = FactorSpace::desk_shapes();
  const auto splits = experiment_splits(cfg, space);
  std::ofstream(dir / "config.json") << dump_experiment_config(cfg) << '\n';

  std::ofstream log(dir / "train_log.jsonl");
  const bool with_kl = cfg.model.is_vae();
  std::cerr << "training " << model_label(cfg.model) << " for " << cfg.training.iters << " steps\n";
  const auto run = train_experiment(cfg, space, splits, [&](const StepRecord& r) {
    log << r.to_jsonl(with_kl) << '\n';
    log.flush();
    std::cerr << "step " << r.step << " loss " << r.loss << " bce " << r.bce << '\n';
  });
  save_checkpoint(dir / "checkpoint.sdae", run.checkpoint);
  std::cout << "trained " << model_label(cfg.model) << " in " << run.seconds << " s; checkpoint "
            << (dir / "checkpoint.sdae").string() << '\n';
  return 0;
}

int cmd_eval(const CommandOptions& o) {
  auto cfg = resolve_config(o);
  const auto ckpt = require_checkpoint(o, cfg);
  const auto dir = output_dir(o, cfg);
  const auto space = FactorSpace::desk_shapes();
  const auto splits = experiment_splits(cfg, space);
  append_metrics(dir, evaluate_model(ckpt.model, cfg, space, o.split, split_by_name(splits, o.split)));
  return 0;
}

int cmd_sample(const CommandOptions& o) {
  auto cfg = resolve_config(o);
  const auto ckpt = require_checkpoint(o, cfg);
  const auto mode = parse_sample_mode(o.mode);
  const auto dir = output_dir(o, cfg);
  const auto space = FactorSpace::desk_shapes();
  const auto splits = experiment_splits(cfg, space);
  const auto bank = bank_for(ckpt, cfg, space, splits);

  const std::size_t count = o.count ? o.count : cfg.sampler.count;
  Rng rng(mix_seed(cfg.sampler.seed, 0x5A3B));
  const auto latents = sample_latents(cfg.model, bank, mode, count, rng);
  const auto [rows, cols] = grid_shape(count);
  const auto path = dir / ("samples_" + to_string(mode) + ".ppm");
  write_image_grid(decode_to_unit(ckpt.model, latents), rows, cols, path, PixelScale::Unit);
  std::cerr << "wrote " << path.string() << '\n';

  if (cfg.metrics.frechet) {
    const std::size_t n = cfg.metrics.frechet_count;
    const auto& ref_split = split_by_name(splits, o.split);
    const auto reference = reference_stats(space, ref_split, n, cfg.model.image_size, cfg.sampler.seed, cfg.metrics.extractor_seed);
    const auto gen = sample_latents(cfg.model, bank, mode, n, rng);
    const double fd = generation_frechet(ckpt.model, gen, reference, cfg.metrics.extractor_seed);
    append_metrics(dir, {MetricRecord{model_label(cfg.model), cfg.sampler.seed, o.split, "gen_frechet_" + to_string(mode), fd, n,
                                      cfg.metrics.extractor_seed, ""}});
  }
  return 0;
}

int cmd_traverse(const CommandOptions& o) {
  auto cfg = resolve_config(o);
  const auto ckpt = require_checkpoint(o, cfg);
  if (o.steps < 2) throw Error("--steps must be at least 2");
  const auto dir = output_dir(o, cfg);
  const auto space = FactorSpace::desk_shapes();
  const auto splits = experiment_splits(cfg, space);
  const auto bank = bank_for(ckpt, cfg, space, splits);
  const std::size_t D = cfg.model.latent_dim, steps = o.steps;

  const auto anchor_index = seeded_subset(split_by_name(splits, o.split), 1, cfg.sampler.seed).at(0);
  const auto anchor = encode_one(ckpt.model, space, anchor_index);

  // Rows follow the segment layout, so each segment's dimensions stay adjacent.
  Tensor<float> latents({D * steps, D});
  std::size_t row = 0;
  for (const auto& [start, width] : bank.layout.blocks) {
    for (std::size_t d = start; d < start + width; ++d, ++row) {
      float lo = bank.latents[d], hi = bank.latents[d];
      for (std::size_t n = 1; n < bank.size(); ++n) {
        lo = std::min(lo, bank.latents[n * D + d]);
        hi = std::max(hi, bank.latents[n * D + d]);
      }
      for (std::size_t s = 0; s < steps; ++s) {
        float* z = latents.vec().data() + (row * steps + s) * D;
        std::copy(anchor.vec().begin(), anchor.vec().end(), z);
        z[d] = lo + (hi - lo) * static_cast<float>(s) / static_cast<float>(steps - 1);
      }
    }
  }
  const auto path = dir / "traverse.ppm";
  write_image_grid(decode_to_unit(ckpt.model, latents), D, steps, path, PixelScale::Unit);
  std::cout << "wrote " << path.string() << " (anchor " << anchor_index << ", " << D << " rows x " << steps << " steps)\n";
  return 0;
}

int cmd_partial(const CommandOptions& o) {
  auto cfg = resolve_config(o);
  const auto ckpt = require_checkpoint(o, cfg);
  if (o.segments.empty()) throw Error("--segments is required for partial sampling");
  const auto dir = output_dir(o, cfg);
  const auto space = FactorSpace::desk_shapes();
  const auto splits = experiment_splits(cfg, space);
  const auto bank = bank_for(ckpt, cfg, space, splits);
  const std::size_t D = cfg.model.latent_dim, rows = o.count ? o.count : 6, cols = o.steps;

  // Column 0 is the anchor reconstruction; the rest resample only the chosen segments.
  const auto anchors = seeded_subset(split_by_name(splits, o.split), rows, cfg.sampler.seed);
  Rng rng(mix_seed(cfg.sampler.seed, 0x9A27));
  Tensor<float> latents({anchors.size() * cols, D});
  for (std::size_t r = 0; r < anchors.size(); ++r) {
    const auto z = encode_one(ckpt.model, space, anchors[r]);
    const std::vector<float> base(z.vec().begin(), z.vec().end());
    for (std::size_t c = 0; c < cols; ++c) {
      const auto v = c == 0 ? base : partial_hybridize(bank, base, o.segments, rng);
      std::copy(v.begin(), v.end(), latents.vec().data() + (r * cols + c) * D);
    }
  }
  const auto path = dir / "partial.ppm";
  write_image_grid(decode_to_unit(ckpt.model, latents), anchors.size(), cols, path, PixelScale::Unit);
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

int cmd_extrapolate(const CommandOptions& o) {
  const auto cfg = resolve_config(o);
  const auto dir = output_dir(o, cfg);
  const auto space = FactorSpace::desk_shapes();
  const auto splits = experiment_splits(cfg, space);
  const auto plan = ExtrapolationPlan::from_config(cfg.extrapolation);
  const auto result = run_extrapolation(cfg.model, plan, cfg.training, space, splits,
                                        [](const std::string& s) { std::cerr << s << '\n'; });
  const auto label = model_label(cfg.model);
  const auto table = result.table(label);
  std::ofstream(dir / "extrapolation.txt") << table;
  std::cout << table;
  std::vector<MetricRecord> records;
  for (auto v : kFinetuneVariants) {
    records.push_back(MetricRecord{label, cfg.training.seed, "test", "extrap_mse_x1000", result.at(v), result.eval_count,
                                   cfg.metrics.extractor_seed, to_string(v)});
  }
  append_metrics(dir, records);
  return 0;
}

}  // namespace strucdec::cli
