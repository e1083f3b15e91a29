#include "strucdec/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace strucdec {

using nlohmann::json;

namespace {

// Reads keys out of one JSON object and remembers which ones were consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error("config: '" + path_ + "' must be a JSON object");
  }

  template <typename V>
  void read(const char* key, V& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<V>();
    } catch (const json::exception& e) {
      throw Error("config: field '" + field(key) + "' has the wrong type (" + e.what() + ")");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string field(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void reject_unknown() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw Error("config: unknown key '" + (path_.empty() ? it.key() : path_ + "." + it.key()) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

json to_json(const ModelConfig& c) {
  return json{{"variant", to_string(c.variant)}, {"latent_dim", c.latent_dim}, {"segments", c.segments},
              {"conv_blocks", c.conv_blocks},   {"channels", c.channels},     {"image_size", c.image_size},
              {"beta", c.beta},                 {"seed", c.seed}};
}

ModelConfig model_config_from_json(const json& j) {
  ObjectReader r(j, "model");
  ModelConfig c;
  std::string variant = to_string(c.variant);
  r.read("variant", variant);
  c = make_config(parse_variant(variant));
  r.read("latent_dim", c.latent_dim);
  r.read("segments", c.segments);
  r.read("conv_blocks", c.conv_blocks);
  r.read("channels", c.channels);
  r.read("image_size", c.image_size);
  r.read("beta", c.beta);
  r.read("seed", c.seed);
  r.reject_unknown();
  return c;
}

json to_json(const ExperimentConfig& c) {
  return json{
      {"name", c.name},
      {"model", to_json(c.model)},
      {"dataset",
       {{"split_seed", c.dataset.split_seed},
        {"train_ratio", c.dataset.train_ratio},
        {"val_ratio", c.dataset.val_ratio},
        {"test_ratio", c.dataset.test_ratio}}},
      {"training",
       {{"iters", c.training.iters},
        {"batch", c.training.batch},
        {"lr", c.training.lr},
        {"seed", c.training.seed},
        {"log_every", c.training.log_every}}},
      {"sampler", {{"bank_size", c.sampler.bank_size}, {"seed", c.sampler.seed}, {"count", c.sampler.count}}},
      {"metrics",
       {{"recon", c.metrics.recon},
        {"frechet", c.metrics.frechet},
        {"disentanglement", c.metrics.disentanglement},
        {"sample_count", c.metrics.sample_count},
        {"frechet_count", c.metrics.frechet_count},
        {"extractor_seed", c.metrics.extractor_seed}}},
      {"extrapolation",
       {{"holdout", c.extrapolation.holdout},
        {"phase1_iters", c.extrapolation.phase1_iters},
        {"phase2_iters", c.extrapolation.phase2_iters}}},
      {"output_dir", c.output_dir},
  };
}

ExperimentConfig experiment_config_from_json(const json& j) {
  ObjectReader r(j, "");
  ExperimentConfig c;
  r.read("name", c.name);
  if (const auto* m = r.child("model")) c.model = model_config_from_json(*m);
  if (const auto* d = r.child("dataset")) {
    ObjectReader s(*d, "dataset");
    s.read("split_seed", c.dataset.split_seed);
    s.read("train_ratio", c.dataset.train_ratio);
    s.read("val_ratio", c.dataset.val_ratio);
    s.read("test_ratio", c.dataset.test_ratio);
    s.reject_unknown();
  }
  if (const auto* t = r.child("training")) {
    ObjectReader s(*t, "training");
    s.read("iters", c.training.iters);
    s.read("batch", c.training.batch);
    s.read("lr", c.training.lr);
    s.read("seed", c.training.seed);
    s.read("log_every", c.training.log_every);
    s.reject_unknown();
  }
  if (const auto* t = r.child("sampler")) {
    ObjectReader s(*t, "sampler");
    s.read("bank_size", c.sampler.bank_size);
    s.read("seed", c.sampler.seed);
    s.read("count", c.sampler.count);
    s.reject_unknown();
  }
  if (const auto* t = r.child("metrics")) {
    ObjectReader s(*t, "metrics");
    s.read("recon", c.metrics.recon);
    s.read("frechet", c.metrics.frechet);
    s.read("disentanglement", c.metrics.disentanglement);
    s.read("sample_count", c.metrics.sample_count);
    s.read("frechet_count", c.metrics.frechet_count);
    s.read("extractor_seed", c.metrics.extractor_seed);
    s.reject_unknown();
  }
  if (const auto* t = r.child("extrapolation")) {
    ObjectReader s(*t, "extrapolation");
    s.read("holdout", c.extrapolation.holdout);
    s.read("phase1_iters", c.extrapolation.phase1_iters);
    s.read("phase2_iters", c.extrapolation.phase2_iters);
    s.reject_unknown();
  }
  r.read("output_dir", c.output_dir);
  r.reject_unknown();
  c.validate();
  return c;
}

void ExperimentConfig::reseed(std::uint64_t seed) {
  model.seed = seed;
  training.seed = seed;
  sampler.seed = seed;
}

void ExperimentConfig::validate() const {
  std::vector<std::string> problems;
  for (const auto& v : model.violations()) problems.push_back("model: " + v);
  if (training.iters == 0) problems.push_back("training.iters must be positive");
  if (training.batch == 0) problems.push_back("training.batch must be positive");
  if (!(training.lr > 0.0)) problems.push_back("training.lr must be positive");
  if (training.log_every == 0) problems.push_back("training.log_every must be positive");
  if (sampler.bank_size == 0) problems.push_back("sampler.bank_size must be positive");
  if (sampler.count == 0) problems.push_back("sampler.count must be positive");
  if (metrics.sample_count < 2) problems.push_back("metrics.sample_count must be at least 2");
  if (metrics.frechet_count < 2) problems.push_back("metrics.frechet_count must be at least 2");
  if (extrapolation.holdout != "shape" && extrapolation.holdout != "orientation") {
    problems.push_back("extrapolation.holdout must be 'shape' or 'orientation'");
  }
  const double sum = dataset.train_ratio + dataset.val_ratio + dataset.test_ratio;
  if (dataset.train_ratio < 0 || dataset.val_ratio < 0 || dataset.test_ratio < 0 || std::abs(sum - 1.0) > 1e-9) {
    problems.push_back("dataset ratios must be non-negative and sum to 1");
  }
  if (problems.empty()) return;
  std::ostringstream os;
  os << "invalid experiment config:";
  for (const auto& p : problems) os << "\n  - " << p;
  throw Error(os.str());
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return experiment_config_from_json(j);
}

std::string dump_experiment_config(const ExperimentConfig& cfg) { return to_json(cfg).dump(2); }

}  // namespace strucdec
