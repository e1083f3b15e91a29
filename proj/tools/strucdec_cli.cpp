#include <CLI11.hpp>
#include <exception>
#include <functional>
#include <iostream>

#include "commands.hpp"

using namespace strucdec::cli;

int main(int argc, char** argv) {
  CLI::App app{"Structural autoencoder experiments on the desk-shapes dataset"};
  app.require_subcommand(1);
  CommandOptions o;
  std::function<int(const CommandOptions&)> run;

  auto common = [&](CLI::App* sub, bool needs_checkpoint) {
    sub->add_option("--config", o.config, "Experiment config (strict JSON); defaults apply when omitted")->check(CLI::ExistingFile);
    auto* ck = sub->add_option("--checkpoint", o.checkpoint, "Checkpoint written by 'train'");
    if (needs_checkpoint) ck->required()->check(CLI::ExistingFile);
    sub->add_option("--out", o.out, "Output directory (default: output_dir from the config)");
    sub->add_option("--seed", o.seed, "Override every seed in the config");
  };
  auto split_opt = [&](CLI::App* sub) {
    sub->add_option("--split", o.split, "Dataset split")->check(CLI::IsMember({"train", "val", "test"}));
  };

  auto* train = app.add_subcommand("train", "Train a model; writes checkpoint.sdae and train_log.jsonl");
  common(train, false);
  train->callback([&] { run = cmd_train; });

  auto* eval = app.add_subcommand("eval", "Reconstruction, Frechet and disentanglement metrics");
  common(eval, true);
  split_opt(eval);
  eval->callback([&] { run = cmd_eval; });

  auto* sample = app.add_subcommand("sample", "Hybrid or prior samples as an image grid, plus Frechet distance");
  common(sample, true);
  split_opt(sample);
  sample->add_option("--mode", o.mode, "Latent source")->check(CLI::IsMember({"hybrid", "prior"}));
  sample->add_option("--count", o.count, "Number of grid images (default: sampler.count)");
  sample->callback([&] { run = cmd_sample; });

  auto* traverse = app.add_subcommand("traverse", "One grid row per latent dimension, swept over the bank range");
  common(traverse, true);
  split_opt(traverse);
  traverse->add_option("--steps", o.steps, "Values per dimension");
  traverse->callback([&] { run = cmd_traverse; });

  auto* partial = app.add_subcommand("partial", "Resample chosen segments of encoded anchors");
  common(partial, true);
  split_opt(partial);
  partial->add_option("--segments", o.segments, "Segment indices to resample")->required()->delimiter(',');
  partial->add_option("--count", o.count, "Number of anchors (default 6)");
  partial->add_option("--steps", o.steps, "Columns per anchor, the first being the reconstruction");
  partial->callback([&] { run = cmd_partial; });

  auto* extrapolate = app.add_subcommand("extrapolate", "Restricted pre-training, then frozen-part fine-tuning");
  common(extrapolate, false);
  extrapolate->callback([&] { run = cmd_extrapolate; });

  CLI11_PARSE(app, argc, argv);
  try {
    return run(o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
