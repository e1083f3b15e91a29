#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <map>
#include <numeric>

#include "metric_oracles.hpp"
#include "strucdec/metrics.hpp"

using namespace strucdec;
using namespace strucdec::testing;

namespace {

// ---- synthetic data --------------------------------------------------------

const int kCards[3] = {8, 6, 4};

Eigen::MatrixXi random_factors(int n, Rng& rng) {
  Eigen::MatrixXi v(n, 3);
  for (int r = 0; r < n; ++r)
    for (int j = 0; j < 3; ++j) v(r, j) = static_cast<int>(rng.index(static_cast<std::uint64_t>(kCards[j])));
  return v;
}

Eigen::MatrixXd noisy_code(const Eigen::MatrixXi& v, double noise, Rng& rng) {
  Eigen::MatrixXd z(v.rows(), 4);
  for (int r = 0; r < v.rows(); ++r) {
    for (int j = 0; j < 3; ++j) z(r, j) = v(r, j) + noise * rng.normal();
    z(r, 3) = rng.normal();
  }
  return z;
}

Eigen::MatrixXd gaussian(int n, int d, Rng& rng) {
  Eigen::MatrixXd z(n, d);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) z(r, c) = rng.normal();
  return z;
}

struct AllScores {
  double d, c, mig, sap, mod;
};

AllScores all_scores(const Eigen::MatrixXd& z, const Eigen::MatrixXi& v) {
  const auto dci = dci_scores(importance_matrix(z, v));
  return {dci.disentanglement, dci.completeness, mig(z, v), sap(z, v), modularity(z, v)};
}

FeatureStats stats1d(double mean, double var) {
  FeatureStats s;
  s.mean = Eigen::VectorXd::Constant(1, mean);
  s.cov = Eigen::MatrixXd::Constant(1, 1, var);
  s.count = 100;
  return s;
}

FeatureStats random_stats(int d, Rng& rng) {
  const Eigen::MatrixXd a = gaussian(d + 3, d, rng);
  FeatureStats s;
  s.mean = gaussian(1, d, rng).row(0).transpose();
  s.cov = a.transpose() * a / d;
  s.count = 100;
  return s;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("recon: identity predictor has zero MSE") {
  const auto space = FactorSpace::desk_shapes();
  const std::vector<std::size_t> split = {0, 17, 4000, 33333};
  const auto s = recon_scores(
      [](const Tensor<float>& x) {
        Tensor<float> l(x.shape());
        for (std::size_t i = 0; i < x.size(); ++i) {
          const double t = x[i];
          l[i] = t <= 0 ? -200.f : t >= 1 ? 200.f : static_cast<float>(std::log(t / (1 - t)));
        }
        return l;
      },
      space, split, 16);
  CHECK(s.mse < 1e-12);
  CHECK(s.mse_x1000() == doctest::Approx(1000 * s.mse));
}

TEST_CASE("recon: all-0.5 predictor gives BCE = log 2") {
  const auto space = FactorSpace::desk_shapes();
  const std::vector<std::size_t> split = {1, 2, 3};
  const auto s = recon_scores([](const Tensor<float>& x) { return Tensor<float>(x.shape(), 0.f); }, space, split, 16);
  CHECK(s.bce == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("recon: matches a per-image loop over the split") {
  const auto space = FactorSpace::desk_shapes();
  std::vector<std::size_t> split;
  for (std::size_t i = 0; i < 300; ++i) split.push_back(i * 197 % space.grid_size());
  const auto logits_of = [](const Tensor<float>& x) {
    Tensor<float> l(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) l[i] = static_cast<float>(3.0 * (2.0 * x[i] - 1.0) + std::sin(0.37 * static_cast<double>(i % 768)));
    return l;
  };
  const auto s = recon_scores(logits_of, space, split, 16, 128);

  double bce = 0, mse = 0;
  for (auto idx : split) {
    const auto img = render(tuple_at(space, idx), 16);
    const auto l = logits_of(img.reshaped({1, 3, 16, 16}));
    double b = 0, m = 0;
    for (std::size_t i = 0; i < img.size(); ++i) {
      const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(l[i]))), t = img[i];
      b += -(t * std::log(p) + (1 - t) * std::log(1 - p));
      m += (p - t) * (p - t);
    }
    bce += b / img.size();
    mse += m / img.size();
  }
  CHECK(std::abs(s.bce - bce / split.size()) < 1e-6);
  CHECK(std::abs(s.mse - mse / split.size()) < 1e-6);
  CHECK_THROWS_AS(recon_scores(logits_of, space, {}, 16), Error);
}

TEST_CASE("frechet: closed forms and symmetry") {
  CHECK(frechet_distance(stats1d(0, 1), stats1d(1, 1)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(frechet_distance(stats1d(0, 4), stats1d(0, 1)) == doctest::Approx(1.0).epsilon(1e-12));
  Rng rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_stats(6, rng), b = random_stats(6, rng);
    CHECK(std::abs(frechet_distance(a, a)) < 1e-8);
    CHECK(std::abs(frechet_distance(a, b) - frechet_distance(b, a)) < 1e-8);
  }
}

TEST_CASE("frechet: matches a general-eigensolver oracle") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const auto a = random_stats(5, rng), b = random_stats(5, rng);
    const double ref = ref_frechet(a.mean, a.cov, b.mean, b.cov);
    CHECK(frechet_distance(a, b) == doctest::Approx(ref).epsilon(1e-8));
  }
}

TEST_CASE("frechet: errors") {
  auto bad = stats1d(0, 1);
  bad.mean(0) = std::nan("");
  CHECK_THROWS_AS(frechet_distance(bad, stats1d(0, 1)), Error);
  CHECK_THROWS_AS(frechet_distance(stats1d(0, -1), stats1d(0, 1)), Error);
  Rng rng(3);
  CHECK_THROWS_AS(frechet_distance(random_stats(2, rng), random_stats(3, rng)), ShapeError);
  CHECK_THROWS_AS(feature_stats(Eigen::MatrixXd::Zero(1, 4)), Error);
}

TEST_CASE("feature stats: mean and unbiased covariance") {
  Eigen::MatrixXd f(3, 2);
  f << 1, 2, 3, 6, 5, 10;
  const auto s = feature_stats(f);
  CHECK(s.mean(0) == doctest::Approx(3));
  CHECK(s.mean(1) == doctest::Approx(6));
  CHECK(s.cov(0, 0) == doctest::Approx(4));
  CHECK(s.cov(0, 1) == doctest::Approx(8));
  CHECK(s.cov(1, 1) == doctest::Approx(16));
}

TEST_CASE("feature extractor is frozen by seed") {
  const auto space = FactorSpace::desk_shapes();
  std::vector<std::size_t> idx(24);
  std::iota(idx.begin(), idx.end(), 500);
  const auto imgs = render_batch(space, idx, 16).images;
  const FeatureExtractor a(0), b(0), c(1);
  const auto fa = a.features(imgs);
  CHECK(fa.rows() == 24);
  CHECK(fa.cols() == 64);
  CHECK(fa == b.features(imgs));
  CHECK(fa != c.features(imgs));
  CHECK(std::abs(frechet_distance(extract_features(imgs), extract_features(imgs))) < 1e-8);
  CHECK_THROWS_AS(a.features(Tensor<float>({2, 3, 12, 12})), ShapeError);
}

TEST_CASE("discretize and entropy") {
  const std::vector<double> c = {2.5, 2.5, 2.5};
  CHECK(discretize(c) == std::vector<int>{0, 0, 0});
  const std::vector<double> x = {0.0, 0.5, 1.0, 0.26};
  CHECK(discretize(x, 4) == std::vector<int>{0, 2, 3, 1});
  const std::vector<int> u = {0, 1, 2, 3};
  CHECK(entropy(u) == doctest::Approx(std::log(4.0)));
  const std::vector<int> neg = {0, -1};
  CHECK_THROWS_AS(entropy(neg), Error);
}

TEST_CASE("mutual information: sampling oracle and identities") {
  Rng rng(4);
  std::vector<int> a(100000), b(100000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = static_cast<int>(rng.index(10));
    b[i] = static_cast<int>(rng.index(10));
  }
  CHECK(mutual_information(a, b) < 0.01);
  CHECK(mutual_information(a, a) == doctest::Approx(entropy(a)).epsilon(1e-12));
  CHECK(mutual_information(a, b) == doctest::Approx(mutual_information(b, a)).epsilon(1e-12));
  std::vector<int> small_a(a.begin(), a.begin() + 200), small_b(b.begin(), b.begin() + 200);
  CHECK(mutual_information(small_a, small_b) == doctest::Approx(ref_mi(small_a, small_b)).epsilon(1e-12));
}

TEST_CASE("dci: ideal, uniform and oracle cases") {
  auto s = dci_scores({Eigen::MatrixXd::Identity(3, 3)});
  CHECK(s.disentanglement == doctest::Approx(1.0));
  CHECK(s.completeness == doctest::Approx(1.0));
  s = dci_scores({Eigen::MatrixXd::Constant(4, 3, 0.2)});
  CHECK(std::abs(s.disentanglement) < 1e-12);

  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd r(3, 3);
    std::vector<std::vector<double>> ref(3, std::vector<double>(3));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) ref[i][j] = r(i, j) = rng.uniform();
    if (trial % 4 == 0) {
      r.row(1).setZero();
      ref[1] = {0, 0, 0};
    }
    const auto got = dci_scores({r});
    const auto [d, c] = ref_dci(ref);
    CHECK(std::abs(got.disentanglement - d) < 1e-10);
    CHECK(std::abs(got.completeness - c) < 1e-10);
  }
  CHECK_THROWS_AS(dci_scores({Eigen::MatrixXd::Constant(2, 2, -1.0)}), Error);
}

TEST_CASE("disentanglement scores match brute-force oracles on random 4x3 instances") {
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const auto v = random_factors(60, rng);
    const auto z = noisy_code(v, 0.5 + trial * 0.2, rng);
    const auto d = to_data(z, v);

    const auto mi = mi_matrix(z, v);
    const auto ref_m = ref_mi_table(d);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 3; ++j) CHECK(std::abs(mi(i, j) - ref_m[i][j]) < 1e-9);

    std::vector<std::vector<double>> R = ref_m;
    for (std::size_t j = 0; j < 3; ++j) {
      const double h = ref_entropy(d.v[j]);
      for (auto& row : R) row[j] /= h;
    }
    const auto [rd, rc] = ref_dci(R);
    const auto got = all_scores(z, v);
    CHECK(std::abs(got.d - rd) < 1e-9);
    CHECK(std::abs(got.c - rc) < 1e-9);
    CHECK(std::abs(got.mig - ref_mig(d)) < 1e-9);
    CHECK(std::abs(got.sap - ref_sap(d)) < 1e-9);
    CHECK(std::abs(got.mod - ref_modularity(d)) < 1e-9);
  }
}

TEST_CASE("perfect code scores near 1, independent code near 0") {
  Rng rng(7);
  const auto v = random_factors(10000, rng);
  Eigen::MatrixXd perfect = v.cast<double>();
  CHECK(mig(perfect, v) > 0.95);
  CHECK(mig(perfect, v) <= 1.0);
  CHECK(modularity(perfect, v) > 0.95);
  const auto dci = dci_scores(importance_matrix(perfect, v));
  CHECK(dci.disentanglement > 0.95);
  CHECK(dci.completeness > 0.95);

  Eigen::MatrixXd linear = 2.0 * perfect.array() + 1.0;
  CHECK(sap(linear, v) > 0.95);

  const auto indep = gaussian(10000, 3, rng);
  CHECK(mig(indep, v) < 0.05);
  CHECK(sap(indep, v) < 0.05);
}

TEST_CASE("sap: duplicated latent gives zero gap") {
  Rng rng(8);
  Eigen::MatrixXi v(500, 1);
  Eigen::MatrixXd z(500, 2);
  for (int r = 0; r < 500; ++r) {
    v(r, 0) = static_cast<int>(rng.index(5));
    z(r, 0) = z(r, 1) = v(r, 0) + 0.3 * rng.normal();
  }
  CHECK(std::abs(sap(z, v)) < 1e-12);
}

TEST_CASE("scores lie in [0, 1] and are invariant to permutations and affine maps") {
  Rng rng(9);
  const auto v = random_factors(5000, rng);
  const auto z = noisy_code(v, 1.0, rng);
  const auto base = all_scores(z, v);
  for (double s : {base.d, base.c, base.mig, base.sap, base.mod}) {
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }

  Eigen::MatrixXd zp(z.rows(), 4);
  zp << z.col(2), z.col(0), z.col(3), z.col(1);
  Eigen::MatrixXi vp(v.rows(), 3);
  vp << v.col(1), v.col(2), v.col(0);
  const auto perm = all_scores(zp, vp);
  CHECK(perm.d == doctest::Approx(base.d).epsilon(1e-10));
  CHECK(perm.c == doctest::Approx(base.c).epsilon(1e-10));
  CHECK(perm.mig == doctest::Approx(base.mig).epsilon(1e-10));
  CHECK(perm.sap == doctest::Approx(base.sap).epsilon(1e-10));
  CHECK(perm.mod == doctest::Approx(base.mod).epsilon(1e-10));

  const Eigen::MatrixXd za = 2.0 * z.array() + 1.0;
  const auto aff = all_scores(za, v);
  CHECK(std::abs(aff.d - base.d) < 0.02);
  CHECK(std::abs(aff.c - base.c) < 0.02);
  CHECK(std::abs(aff.mig - base.mig) < 0.02);
  CHECK(std::abs(aff.mod - base.mod) < 0.02);
}

TEST_CASE("modularity: one-hot MI rows give 1; constant latent contributes 1") {
  Rng rng(10);
  const auto v = random_factors(2000, rng);
  Eigen::MatrixXd z(2000, 2);
  z.col(0) = v.col(0).cast<double>();
  z.col(1).setConstant(3.0);
  CHECK(modularity(z, v) > 0.97);
  CHECK_THROWS_AS(modularity(z, v.leftCols(1)), ShapeError);
}

TEST_CASE("evaluate_disentanglement on a small model is seeded and bounded") {
  ModelConfig cfg;
  cfg.image_size = 16;
  cfg.conv_blocks = 3;
  cfg.channels = 8;
  cfg.latent_dim = 6;
  cfg.segments = 3;
  Model<float> model(cfg);
  const auto space = FactorSpace::desk_shapes();
  std::vector<std::size_t> split(400);
  std::iota(split.begin(), split.end(), 1000);
  const auto a = evaluate_disentanglement(model, space, split, 300, 1);
  const auto b = evaluate_disentanglement(model, space, split, 300, 1);
  CHECK(a.sample_count == 300);
  CHECK(a.mig == b.mig);
  CHECK(a.dci_d == b.dci_d);
  for (double s : {a.dci_d, a.dci_c, a.mig, a.sap, a.modularity}) {
    CHECK(s >= 0.0);
    CHECK(s <= 1.0);
  }
}

}  // TEST_SUITE
