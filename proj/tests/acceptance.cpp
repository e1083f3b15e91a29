// Acceptance run: prints one PASS/FAIL line per criterion and exits non-zero
// if any fails. Trained models, loss traces and extrapolation tables are
// cached under --cache so repeated runs only evaluate.

#include <CLI11.hpp>
#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <map>
#include <set>
#include <sstream>

#include "grad_suite.hpp"
#include "metric_oracles.hpp"
#include "strucdec/experiment.hpp"
#include "strucdec/extrapolation.hpp"

using namespace strucdec;
using namespace strucdec::testing;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kSeeds[3] = {0, 1, 2};
constexpr double kBceTarget = 0.25;
constexpr double kMinutesPerModel = 15.0;
constexpr std::size_t kWindow = 500;

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string fmt(double x, int prec = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << x;
  return os.str();
}

std::string join(const std::vector<double>& v, int prec = 4) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i], prec);
  return s + "]";
}

ExperimentConfig desk_config(const std::string& label, std::uint64_t seed) {
  static const std::map<std::string, std::pair<Variant, std::size_t>> kinds = {
      {"AE", {Variant::AE, 1}},           {"SAE-12", {Variant::SAE, 12}}, {"SAE-3", {Variant::SAE, 3}},
      {"AdaAE-12", {Variant::AdaAE, 12}}, {"VAE", {Variant::VAE, 1}},     {"BetaVAE", {Variant::BetaVAE, 1}}};
  const auto& [variant, k] = kinds.at(label);
  ExperimentConfig cfg;
  cfg.name = label;
  cfg.model = make_config(variant, k);
  cfg.reseed(seed);
  cfg.validate();
  return cfg;
}

struct Run {
  Checkpoint checkpoint;
  std::vector<double> losses;
  double seconds = 0.0;
};

class Suite {
 public:
  explicit Suite(fs::path cache) : cache_(std::move(cache)), space_(FactorSpace::desk_shapes()) {
    fs::create_directories(cache_);
  }

  const FactorSpace& space() const { return space_; }
  const Splits& splits(const ExperimentConfig& cfg) {
    auto it = splits_.find(cfg.dataset.split_seed);
    if (it == splits_.end()) it = splits_.emplace(cfg.dataset.split_seed, experiment_splits(cfg, space_)).first;
    return it->second;
  }
  json& report() { return report_; }
  const fs::path& cache() const { return cache_; }

  // Trains on first use; later calls (and later processes) reuse the cache.
  const Run& run(const std::string& label, std::uint64_t seed) {
    const std::string key = label + "_s" + std::to_string(seed);
    if (auto it = runs_.find(key); it != runs_.end()) return it->second;
    const auto cfg = desk_config(label, seed);
    const fs::path dir = cache_ / key;
    const std::string cfg_text = dump_experiment_config(cfg);
    if (auto cached = load(dir, cfg_text)) return runs_.emplace(key, std::move(*cached)).first->second;

    std::cerr << "[train] " << key << ": " << cfg.training.iters << " steps\n";
    const auto trained = train_experiment(cfg, space_, splits(cfg), [&](const StepRecord& r) {
      if (r.step % 500 == 0) std::cerr << "[train] " << key << " step " << r.step << " loss " << fmt(r.loss) << '\n';
    });
    Run run{trained.checkpoint, {}, trained.seconds};
    for (const auto& r : trained.trace) run.losses.push_back(r.loss);

    fs::create_directories(dir);
    save_checkpoint(dir / "checkpoint.sdae", run.checkpoint);
    std::ofstream trace(dir / "trace.jsonl");
    for (const auto& r : trained.trace) trace << r.to_jsonl(cfg.model.is_vae()) << '\n';
    trace.close();
    std::ofstream(dir / "meta.json") << json{{"config", cfg_text}, {"seconds", run.seconds}}.dump(2);
    std::cerr << "[train] " << key << " done in " << fmt(run.seconds, 1) << " s\n";
    return runs_.emplace(key, std::move(run)).first->second;
  }

  ExtrapolationResult extrapolation(const std::string& label, std::uint64_t seed) {
    const auto cfg = desk_config(label, seed);
    const auto plan = ExtrapolationPlan::shape_holdout();
    const fs::path path = cache_ / ("extrapolation_" + label + "_s" + std::to_string(seed) + ".json");
    const json key = {{"config", dump_experiment_config(cfg)}, {"phase1", plan.phase1_iters}, {"phase2", plan.phase2_iters}};
    if (fs::exists(path)) {
      const auto j = json::parse(std::ifstream(path));
      if (j.at("key") == key) {
        ExtrapolationResult r;
        r.mse_x1000 = j.at("mse_x1000").get<std::array<double, 4>>();
        r.eval_count = j.at("eval_count");
        r.phase1_train_count = j.at("phase1_train_count");
        return r;
      }
    }
    std::cerr << "[extrapolate] " << label << " seed " << seed << '\n';
    const auto r = run_extrapolation(cfg.model, plan, cfg.training, space_, splits(cfg), [](const std::string& s) {
      if (s.find("step") == std::string::npos || s.find("00 loss") != std::string::npos) std::cerr << "[extrapolate] " << s << '\n';
    });
    std::ofstream(path) << json{{"key", key},
                                {"mse_x1000", r.mse_x1000},
                                {"eval_count", r.eval_count},
                                {"phase1_train_count", r.phase1_train_count}}
                               .dump(2);
    return r;
  }

 private:
  std::optional<Run> load(const fs::path& dir, const std::string& cfg_text) {
    try {
      if (!fs::exists(dir / "meta.json")) return std::nullopt;
      const auto meta = json::parse(std::ifstream(dir / "meta.json"));
      if (meta.at("config") != cfg_text) return std::nullopt;
      Run run{load_checkpoint(dir / "checkpoint.sdae"), {}, meta.at("seconds")};
      std::ifstream trace(dir / "trace.jsonl");
      for (std::string line; std::getline(trace, line);) run.losses.push_back(json::parse(line).at("loss"));
      return run;
    } catch (const std::exception& e) {
      std::cerr << "[cache] ignoring " << dir.string() << ": " << e.what() << '\n';
      return std::nullopt;
    }
  }

  fs::path cache_;
  FactorSpace space_;
  std::map<std::uint64_t, Splits> splits_;
  std::map<std::string, Run> runs_;
  json report_ = json::object();
};

struct Verdict {
  bool pass = false;
  std::string summary;
};

// ---------------------------------------------------------------------------

Verdict gradient_integrity(Suite& s) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr int kTrials = 20;
  bool ok = true;
  json r;
  for (const auto& c : op_grad_cases()) {
    double worst = 0;
    for (int t = 0; t < kTrials; ++t) worst = std::max(worst, c.max_rel_err(t));
    std::cout << "  op " << std::left << std::setw(40) << c.name << " max rel err " << worst << '\n';
    r["ops"][c.name] = worst;
    ok = ok && worst < 1e-4;
  }
  for (auto v : {Variant::SAE, Variant::AdaAE, Variant::AE, Variant::VAE, Variant::BetaVAE}) {
    double worst = 0;
    for (int t = 0; t < kTrials; ++t) worst = std::max(worst, model_grad_err(v, t));
    std::cout << "  model " << std::left << std::setw(37) << to_string(v) << " max rel err " << worst << '\n';
    r["models"][to_string(v)] = worst;
    ok = ok && worst < 1e-3;
  }
  const double secs = seconds_since(t0);
  r["seconds"] = secs;
  s.report()["1"] = r;
  return {ok && secs < 120.0, "ops < 1e-4, tiny models < 1e-3 over 20 trials each, runtime " + fmt(secs, 1) + " s (limit 120)"};
}

Verdict training_convergence(Suite& s) {
  bool ok = true;
  json r;
  for (const std::string label : {"AE", "SAE-12", "SAE-3", "AdaAE-12", "VAE", "BetaVAE"}) {
    const auto& run = s.run(label, 0);
    const auto cfg = desk_config(label, 0);
    const double bce = recon_scores(run.checkpoint.model, s.space(), s.splits(cfg).test).bce;
    std::vector<double> medians;
    for (std::size_t start = 0; start + kWindow <= run.losses.size(); start += kWindow) {
      medians.emplace_back(median(std::vector<double>(run.losses.begin() + static_cast<std::ptrdiff_t>(start),
                                                      run.losses.begin() + static_cast<std::ptrdiff_t>(start + kWindow))));
    }
    bool decreasing = medians.size() >= 2;
    for (std::size_t i = 1; i < medians.size(); ++i) decreasing = decreasing && medians[i] < medians[i - 1];
    const double minutes = run.seconds / 60.0;
    const bool pass = bce < kBceTarget && minutes <= kMinutesPerModel && decreasing;
    std::cout << "  " << std::left << std::setw(9) << label << " test BCE " << fmt(bce) << "  train " << fmt(minutes, 2)
              << " min  window medians " << join(medians) << (pass ? "" : "  <-- fails") << '\n';
    r[label] = {{"test_bce", bce}, {"minutes", minutes}, {"window_medians", medians}, {"pass", pass}};
    ok = ok && pass;
  }
  s.report()["2"] = r;
  return {ok, "test BCE < 0.25, <= 15 min per model, 500-step window medians strictly decreasing, six variants"};
}

Verdict hybrid_sampler(Suite& s) {
  const auto& bank = *s.run("SAE-12", 0).checkpoint.bank;
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t N = bank.size(), D = bank.dim(), draws = 100000;
  Rng rng(2024);
  const auto h = hybrid_sample(bank, draws, rng);

  // Containment: every segment of every draw is a verbatim copy of one bank row's segment.
  bool contained = true;
  for (std::size_t r = 0; r < draws && contained; ++r) {
    for (const auto& [start, width] : bank.layout.blocks) {
      bool found = false;
      for (std::size_t n = 0; n < N && !found; ++n) {
        found = std::equal(h.vec().begin() + static_cast<std::ptrdiff_t>(r * D + start),
                           h.vec().begin() + static_cast<std::ptrdiff_t>(r * D + start + width),
                           bank.latents.vec().begin() + static_cast<std::ptrdiff_t>(n * D + start));
      }
      contained = contained && found;
    }
  }

  // Marginals: per coordinate, counts per distinct bank value against N-uniform row choice.
  double min_p = 1.0;
  for (std::size_t d = 0; d < D; ++d) {
    std::map<float, std::size_t> mult, counts;
    for (std::size_t n = 0; n < N; ++n) ++mult[bank.latents[n * D + d]];
    for (std::size_t r = 0; r < draws; ++r) ++counts[h[r * D + d]];
    double stat = 0;
    for (const auto& [v, m] : mult) {
      const double expected = static_cast<double>(draws) * static_cast<double>(m) / static_cast<double>(N);
      const double c = static_cast<double>(counts[v]);
      stat += (c - expected) * (c - expected) / expected;
    }
    if (mult.size() < 2) continue;
    boost::math::chi_squared dist(static_cast<double>(mult.size() - 1));
    min_p = std::min(min_p, boost::math::cdf(boost::math::complement(dist, stat)));
  }

  // Support: 3 bank rows, 3 coordinates, singleton segments -> 27 distinct vectors.
  LatentBank small{Tensor<float>({3, 3}), SegmentLayout::singletons(3), {0, 1, 2}};
  for (std::size_t n = 0; n < 3; ++n)
    for (std::size_t d = 0; d < 3; ++d) small.latents[n * 3 + d] = bank.latents[n * D + d];
  const auto hs = hybrid_sample(small, 20000, rng);
  std::set<std::vector<float>> support;
  for (std::size_t r = 0; r < 20000; ++r) support.insert({hs[r * 3], hs[r * 3 + 1], hs[r * 3 + 2]});

  const double secs = seconds_since(t0);
  std::cout << "  bank N=" << N << " D=" << D << " segments=" << bank.layout.blocks.size() << "; containment "
            << (contained ? "exact" : "VIOLATED") << "; min marginal chi-square p " << min_p << "; support " << support.size()
            << " (expected 27); " << fmt(secs, 1) << " s\n";
  s.report()["3"] = {{"contained", contained}, {"min_p", min_p}, {"support", support.size()}, {"seconds", secs}};
  const bool ok = contained && min_p > 1e-3 && support.size() == 27 && secs < 60.0;
  return {ok, "containment exact, chi-square p > 0.001 at 1e5 draws, support N^D = 27, runtime < 60 s"};
}

Verdict disentanglement(Suite& s) {
  std::map<std::string, std::vector<double>> dci;
  for (const std::string label : {"SAE-12", "AE", "AdaAE-12", "SAE-3"}) {
    for (auto seed : kSeeds) {
      const auto cfg = desk_config(label, seed);
      const auto& run = s.run(label, seed);
      dci[label].push_back(evaluate_disentanglement(run.checkpoint.model, s.space(), s.splits(cfg).test,
                                                    cfg.metrics.sample_count, seed)
                               .dci_d);
    }
    std::cout << "  " << std::left << std::setw(9) << label << " DCI-d per seed " << join(dci[label]) << "  median "
              << fmt(median(dci[label])) << '\n';
  }
  const double sae = median(dci["SAE-12"]), ae = median(dci["AE"]), ada = median(dci["AdaAE-12"]), sae3 = median(dci["SAE-3"]);
  s.report()["4"] = {{"dci_d", dci}};
  const bool ok = sae - ae >= 0.10 && sae - ada >= 0.10 && sae >= sae3;
  return {ok, "median DCI-d SAE-12 " + fmt(sae) + " vs AE " + fmt(ae) + " / AdaAE " + fmt(ada) + " (need +0.10), vs SAE-3 " +
                  fmt(sae3) + " (need >=)"};
}

Verdict sampling_quality(Suite& s) {
  constexpr std::size_t kImages = 2000;
  std::vector<double> hybrid, prior;
  for (auto seed : kSeeds) {
    const auto cfg = desk_config("VAE", seed);
    const auto& run = s.run("VAE", seed);
    const auto reference =
        reference_stats(s.space(), s.splits(cfg).test, kImages, cfg.model.image_size, seed, cfg.metrics.extractor_seed);
    Rng rng(mix_seed(seed, 0xFD));
    const auto& model = run.checkpoint.model;
    hybrid.push_back(generation_frechet(model, sample_latents(cfg.model, *run.checkpoint.bank, SampleMode::Hybrid, kImages, rng),
                                        reference, cfg.metrics.extractor_seed));
    prior.push_back(generation_frechet(model, sample_latents(cfg.model, *run.checkpoint.bank, SampleMode::Prior, kImages, rng),
                                       reference, cfg.metrics.extractor_seed));
  }
  std::cout << "  VAE Frechet hybrid " << join(hybrid) << "  prior " << join(prior) << '\n';
  const double mh = median(hybrid), mp = median(prior);
  s.report()["5"] = {{"hybrid", hybrid}, {"prior", prior}};
  return {mh <= 1.1 * mp, "median hybrid " + fmt(mh) + " <= 1.1 x median prior " + fmt(mp)};
}

Verdict extrapolation_ordering(Suite& s) {
  bool ok = true;
  std::string summary;
  json r;
  for (const std::string label : {"SAE-12", "AE"}) {
    std::array<std::vector<double>, 4> per;
    for (auto seed : kSeeds) {
      const auto res = s.extrapolation(label, seed);
      for (std::size_t k = 0; k < 4; ++k) per[k].push_back(res.mse_x1000[k]);
    }
    std::array<double, 4> med{};
    for (std::size_t k = 0; k < 4; ++k) med[k] = median(per[k]);
    const bool pass = med[0] > med[1] && med[1] > med[2] && med[3] <= 1.5 * med[2];
    std::cout << "  " << std::left << std::setw(7) << label << " median MSE x1000 neither " << fmt(med[0], 3) << "  encoder "
              << fmt(med[1], 3) << "  decoder " << fmt(med[2], 3) << "  both " << fmt(med[3], 3) << (pass ? "" : "  <-- fails")
              << '\n';
    for (std::size_t k = 0; k < 4; ++k) {
      std::cout << "          " << std::setw(13) << to_string(kFinetuneVariants[k]) << " per seed " << join(per[k], 3) << '\n';
      r[label][to_string(kFinetuneVariants[k])] = per[k];
    }
    ok = ok && pass;
    summary += (summary.empty() ? "" : ", ") + label + (pass ? " ordered" : " not ordered");
  }
  s.report()["6"] = r;
  return {ok, "neither > encoder_only > decoder_only, both <= 1.5 x decoder_only (medians over 3 seeds): " + summary};
}

Eigen::MatrixXi random_factor_matrix(int n, Rng& rng) {
  const int cards[3] = {5, 4, 3};
  Eigen::MatrixXi v(n, 3);
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < 3; ++j) v(r, j) = static_cast<int>(rng.index(static_cast<std::uint64_t>(cards[j])));
  return v;
}

Verdict metric_oracles(Suite& s) {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(77);
  double dci_err = 0, mig_err = 0, sap_err = 0, mod_err = 0, mi_err = 0, fd_err = 0;
  for (int trial = 0; trial < 50; ++trial) {
    // Random 3x3 importance matrices.
    Eigen::MatrixXd R(3, 3);
    std::vector<std::vector<double>> ref(3, std::vector<double>(3));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) ref[i][j] = R(i, j) = rng.uniform();
    const auto got = dci_scores({R});
    const auto [rd, rc] = ref_dci(ref);
    dci_err = std::max({dci_err, std::abs(got.disentanglement - rd), std::abs(got.completeness - rc)});

    // Random 4-latent x 3-factor instances with a partial code.
    const auto v = random_factor_matrix(80, rng);
    Eigen::MatrixXd z(80, 4);
    const double noise = rng.uniform(0.1, 3.0);
    for (int r = 0; r < 80; ++r) {
      for (int j = 0; j < 3; ++j) z(r, j) = v(r, j) + noise * rng.normal();
      z(r, 3) = rng.normal();
    }
    const auto data = to_data(z, v);
    const auto mi = mi_matrix(z, v);
    const auto ref_m = ref_mi_table(data);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) mi_err = std::max(mi_err, std::abs(mi(i, j) - ref_m[i][j]));
    mig_err = std::max(mig_err, std::abs(mig(z, v) - ref_mig(data)));
    sap_err = std::max(sap_err, std::abs(sap(z, v) - ref_sap(data)));
    mod_err = std::max(mod_err, std::abs(modularity(z, v) - ref_modularity(data)));

    // Random Frechet instances.
    const int d = 2 + static_cast<int>(rng.index(5));
    auto random_stats = [&] {
      Eigen::MatrixXd a(d + 2, d);
      for (int i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
      FeatureStats st;
      st.mean = Eigen::VectorXd(d);
      for (int i = 0; i < d; ++i) st.mean(i) = rng.normal();
      st.cov = a.transpose() * a / d;
      st.count = 100;
      return st;
    };
    const auto a = random_stats(), b = random_stats();
    const double fd = frechet_distance(a, b), rf = ref_frechet(a.mean, a.cov, b.mean, b.cov);
    fd_err = std::max(fd_err, std::abs(fd - rf) / std::max(1.0, std::abs(rf)));
  }
  const double secs = seconds_since(t0);
  std::cout << "  max abs err: DCI " << dci_err << "  MI " << mi_err << "  MIG " << mig_err << "  SAP " << sap_err
            << "  Modularity " << mod_err << "  Frechet (rel) " << fd_err << "; " << fmt(secs, 2) << " s\n";
  s.report()["7"] = {{"dci", dci_err}, {"mi", mi_err}, {"mig", mig_err}, {"sap", sap_err}, {"modularity", mod_err},
                     {"frechet", fd_err}, {"seconds", secs}};
  const bool ok = dci_err < 1e-10 && mi_err < 1e-9 && mig_err < 1e-9 && sap_err < 1e-9 && mod_err < 1e-9 && fd_err < 1e-8 &&
                  secs < 60.0;
  return {ok, "DCI < 1e-10; MI, MIG, SAP, Modularity < 1e-9; Frechet < 1e-8 relative; 50 random instances; runtime < 60 s"};
}

Verdict determinism(Suite& s) {
  bool bytes_equal = true, next_step_equal = true;
  for (const std::string label : {"SAE-12", "AE", "VAE", "BetaVAE"}) {
    auto cfg = desk_config(label, 3);
    cfg.training.iters = 12;
    const auto& split = s.splits(cfg).train;
    const auto a = train_experiment(cfg, s.space(), s.splits(cfg));
    const auto b = train_experiment(cfg, s.space(), s.splits(cfg));
    const auto bytes = serialize_checkpoint(a.checkpoint);
    const bool same = bytes == serialize_checkpoint(b.checkpoint);

    // Resume from the serialized state and compare the next step with an uninterrupted run.
    Trainer straight(Model<float>(cfg.model), cfg.training, s.space(), split);
    straight.run(cfg.training.iters);
    const auto restored = deserialize_checkpoint(bytes);
    Trainer resumed(restored.model, restored.adam, restored.step, cfg.training, s.space(), split);
    const auto r1 = straight.step(), r2 = resumed.step();
    bool params_equal = true;
    for (std::size_t i = 0; i < straight.model().params().size(); ++i)
      params_equal = params_equal && straight.model().params()[i].value == resumed.model().params()[i].value;
    const bool step_ok = r1.loss == r2.loss && r1.bce == r2.bce && r1.kl == r2.kl && params_equal &&
                         serialize_checkpoint(restored) == bytes;
    std::cout << "  " << std::left << std::setw(8) << label << " identical checkpoint bytes " << (same ? "yes" : "NO")
              << " (" << bytes.size() << " bytes); resumed next-step loss " << std::setprecision(9) << r2.loss << " vs "
              << r1.loss << (step_ok ? " (bit-identical)" : " (DIFFERS)") << std::setprecision(6) << '\n';
    bytes_equal = bytes_equal && same;
    next_step_equal = next_step_equal && step_ok;
  }
  s.report()["8"] = {{"bytes_equal", bytes_equal}, {"next_step_equal", next_step_equal}};
  return {bytes_equal && next_step_equal, "same config + seed gives identical checkpoint bytes; save/load/step equals uninterrupted step"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria 1-8"};
  std::string cache = "acceptance_cache";
  std::vector<int> only;
  app.add_option("--cache", cache, "Directory for trained models and results");
  app.add_option("--criteria", only, "Subset of criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 8));
  CLI11_PARSE(app, argc, argv);
  if (only.empty()) only = {1, 2, 3, 4, 5, 6, 7, 8};

  const std::map<int, std::pair<std::string, std::function<Verdict(Suite&)>>> criteria = {
      {1, {"gradient integrity", gradient_integrity}},
      {2, {"training convergence", training_convergence}},
      {3, {"hybrid sampler correctness", hybrid_sampler}},
      {4, {"disentanglement direction", disentanglement}},
      {5, {"sampling quality direction", sampling_quality}},
      {6, {"extrapolation ordering", extrapolation_ordering}},
      {7, {"metric oracles", metric_oracles}},
      {8, {"determinism and persistence", determinism}},
  };

  Suite suite(cache);
  std::vector<std::string> lines;
  bool all = true;
  for (int id : std::set<int>(only.begin(), only.end())) {
    const auto& [title, fn] = criteria.at(id);
    std::cout << "criterion " << id << ": " << title << '\n';
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = fn(suite);
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    const std::string line =
        std::string(v.pass ? "PASS" : "FAIL") + " criterion " + std::to_string(id) + " (" + title + "): " + v.summary;
    std::cout << line << "  [" << fmt(seconds_since(t0), 1) << " s]\n" << std::flush;
    suite.report()["verdicts"][std::to_string(id)] = {{"pass", v.pass}, {"summary", v.summary}};
    lines.push_back(line);
    all = all && v.pass;
  }
  std::ofstream(suite.cache() / "acceptance_report.json") << suite.report().dump(2) << '\n';

  std::cout << "\nsummary\n";
  for (const auto& l : lines) std::cout << l << '\n';
  return all ? 0 : 1;
}
