#include "strucdec/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "strucdec/rng.hpp"

namespace strucdec {

ReconScores recon_scores(const Reconstructor& predict, const FactorSpace& space, const std::vector<std::size_t>& split,
                         std::size_t image_size, std::size_t batch_size) {
  if (split.empty()) throw Error("recon_scores: empty split");
  double bce = 0.0, se = 0.0;
  std::size_t elems = 0;
  for (std::size_t start = 0; start < split.size(); start += batch_size) {
    const std::size_t len = std::min(batch_size, split.size() - start);
    const auto batch = render_batch(space, std::span<const std::size_t>(split).subspan(start, len), image_size);
    const auto logits = predict(batch.images);
    if (logits.shape() != batch.images.shape()) throw ShapeError("recon_scores: predictor returned " + shape_str(logits.shape()));
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double l = logits[i], t = batch.images[i];
      bce += std::max(l, 0.0) - l * t + std::log1p(std::exp(-std::abs(l)));
      const double p = l >= 0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l));
      se += (p - t) * (p - t);
    }
    elems += logits.size();
  }
  return {bce / static_cast<double>(elems), se / static_cast<double>(elems)};
}

ReconScores recon_scores(const Model<float>& model, const FactorSpace& space, const std::vector<std::size_t>& split) {
  return recon_scores([&](const Tensor<float>& x) { return model.decode(model.encode(x)); }, space, split,
                      model.config().image_size);
}

FeatureStats feature_stats(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) throw Error("feature_stats: need at least two samples");
  FeatureStats s;
  s.count = static_cast<std::size_t>(features.rows());
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.cov = centered.transpose() * centered / static_cast<double>(features.rows() - 1);
  return s;
}

namespace {

// Eigenvalues of a symmetrized PSD matrix, rejecting materially negative ones.
Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> psd_eigen(const Eigen::MatrixXd& m, const char* what) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw Error(std::string("frechet_distance: eigendecomposition failed for ") + what);
  if (es.eigenvalues().size() > 0 && es.eigenvalues().minCoeff() < -1e-6) {
    throw Error(std::string("frechet_distance: ") + what + " has a negative eigenvalue " +
                std::to_string(es.eigenvalues().minCoeff()));
  }
  return es;
}

}  // namespace

double frechet_distance(const FeatureStats& a, const FeatureStats& b) {
  if (a.mean.size() != b.mean.size() || a.cov.rows() != a.mean.size() || b.cov.rows() != b.mean.size() ||
      a.cov.cols() != a.cov.rows() || b.cov.cols() != b.cov.rows()) {
    throw ShapeError("frechet_distance: feature dimensions differ");
  }
  if (!a.mean.allFinite() || !b.mean.allFinite() || !a.cov.allFinite() || !b.cov.allFinite()) {
    throw Error("frechet_distance: non-finite statistics");
  }
  const auto ea = psd_eigen(a.cov, "first covariance");
  const Eigen::VectorXd root = ea.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  const Eigen::MatrixXd sqrt_a = ea.eigenvectors() * root.asDiagonal() * ea.eigenvectors().transpose();
  const auto em = psd_eigen(sqrt_a * b.cov * sqrt_a, "covariance product");
  const double tr_sqrt = em.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  const double d = (a.mean - b.mean).squaredNorm() + a.cov.trace() + b.cov.trace() - 2.0 * tr_sqrt;
  return std::max(d, 0.0);
}

FeatureExtractor::FeatureExtractor(std::uint64_t seed) : seed_(seed) {
  const std::size_t widths[5] = {3, 16, 32, 64, kDim};
  Rng rng(mix_seed(seed, 0xFEA7));
  for (std::size_t l = 0; l < 4; ++l) {
    Tensor<float> w({widths[l + 1], widths[l], 3, 3});
    const double bound = std::sqrt(6.0 / static_cast<double>(widths[l] * 9));
    for (auto& v : w.vec()) v = static_cast<float>(rng.uniform(-bound, bound));
    weights_.push_back(std::move(w));
    biases_.emplace_back(Shape{widths[l + 1]});
  }
}

Eigen::MatrixXd FeatureExtractor::features(const Tensor<float>& images) const {
  require_rank(images.shape(), 4, "feature extractor images");
  if (images.dim(2) % 8 != 0 || images.dim(3) % 8 != 0) throw ShapeError("feature extractor: image size must be divisible by 8");
  Tape<float> tape;
  Var<float> h = tape.constant(images);
  for (std::size_t l = 0; l < 4; ++l) {
    h = mish(conv2d(h, tape.constant(weights_[l]), tape.constant(biases_[l])));
    if (l < 3) h = maxpool2x2(h);
  }
  const auto pooled = global_avg_pool(h.value());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.dim(0)), static_cast<Eigen::Index>(kDim));
  for (std::size_t n = 0; n < images.dim(0); ++n) {
    for (std::size_t c = 0; c < kDim; ++c) out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(c)) = pooled[n * kDim + c];
  }
  return out;
}

FeatureStats extract_features(const Tensor<float>& images, std::uint64_t extractor_seed) {
  const FeatureExtractor fx(extractor_seed);
  const std::size_t N = images.dim(0), per = images.size() / N;
  Eigen::MatrixXd all(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(FeatureExtractor::kDim));
  constexpr std::size_t chunk = 256;
  for (std::size_t s = 0; s < N; s += chunk) {
    const std::size_t len = std::min(chunk, N - s);
    Shape shape = images.shape();
    shape[0] = len;
    std::vector<float> part(images.vec().begin() + static_cast<std::ptrdiff_t>(s * per),
                            images.vec().begin() + static_cast<std::ptrdiff_t>((s + len) * per));
    all.middleRows(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(len)) = fx.features(Tensor<float>(shape, std::move(part)));
  }
  return feature_stats(all);
}

std::vector<int> discretize(std::span<const double> values, int bins) {
  if (bins < 1) throw Error("discretize: bins must be positive");
  std::vector<int> out(values.size(), 0);
  if (values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, hi = *hi_it;
  if (!(hi > lo)) return out;
  const double width = (hi - lo) / bins;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const int b = static_cast<int>((values[i] - lo) / width);
    out[i] = std::clamp(b, 0, bins - 1);
  }
  return out;
}

double entropy(std::span<const int> labels) {
  if (labels.empty()) return 0.0;
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<double> counts(static_cast<std::size_t>(k), 0.0);
  for (auto l : labels) {
    if (l < 0) throw Error("entropy: labels must be non-negative");
    counts[static_cast<std::size_t>(l)] += 1.0;
  }
  const double n = static_cast<double>(labels.size());
  double h = 0.0;
  for (auto c : counts) {
    if (c > 0) h -= c / n * std::log(c / n);
  }
  return h;
}

double mutual_information(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ShapeError("mutual_information: label vectors differ in length");
  if (a.empty()) return 0.0;
  const int ka = *std::max_element(a.begin(), a.end()) + 1;
  const int kb = *std::max_element(b.begin(), b.end()) + 1;
  std::vector<double> joint(static_cast<std::size_t>(ka * kb), 0.0), pa(static_cast<std::size_t>(ka), 0.0),
      pb(static_cast<std::size_t>(kb), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] < 0 || b[i] < 0) throw Error("mutual_information: labels must be non-negative");
    joint[static_cast<std::size_t>(a[i] * kb + b[i])] += 1.0;
    pa[static_cast<std::size_t>(a[i])] += 1.0;
    pb[static_cast<std::size_t>(b[i])] += 1.0;
  }
  const double n = static_cast<double>(a.size());
  double mi = 0.0;
  for (int i = 0; i < ka; ++i) {
    for (int j = 0; j < kb; ++j) {
      const double c = joint[static_cast<std::size_t>(i * kb + j)];
      if (c > 0) mi += c / n * std::log(c * n / (pa[static_cast<std::size_t>(i)] * pb[static_cast<std::size_t>(j)]));
    }
  }
  return std::max(mi, 0.0);
}

namespace {

void check_pair(const Eigen::MatrixXd& latents, const Eigen::MatrixXi& factors, const char* what) {
  if (latents.rows() != factors.rows()) throw ShapeError(std::string(what) + ": latents and factors differ in sample count");
  if (latents.rows() < 2) throw Error(std::string(what) + ": need at least two samples");
  if (latents.cols() < 1 || factors.cols() < 1) throw ShapeError(std::string(what) + ": empty latent or factor dimension");
}

std::vector<int> column_labels(const Eigen::MatrixXi& m, Eigen::Index j) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<std::size_t>(i)] = m(i, j);
  return out;
}

std::vector<int> discretized_column(const Eigen::MatrixXd& m, Eigen::Index j, int bins) {
  std::vector<double> col(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) col[static_cast<std::size_t>(i)] = m(i, j);
  return discretize(col, bins);
}

// 1 - H(p)/log(n) of a non-negative weight vector, plus its total.
std::pair<double, double> concentration(const Eigen::VectorXd& w) {
  const double total = w.sum();
  const auto n = static_cast<double>(w.size());
  if (total <= 0.0) return {0.0, 0.0};
  if (w.size() == 1) return {1.0, total};
  double h = 0.0;
  for (Eigen::Index k = 0; k < w.size(); ++k) {
    const double p = w(k) / total;
    if (p > 0) h -= p * std::log(p);
  }
  return {1.0 - h / std::log(n), total};
}

}  // namespace

Eigen::MatrixXd mi_matrix(const Eigen::MatrixXd& latents, const Eigen::MatrixXi& factors, int bins) {
  check_pair(latents, factors, "mi_matrix");
  Eigen::MatrixXd mi(latents.cols(), factors.cols());
  std::vector<std::vector<int>> fac;
  for (Eigen::Index j = 0; j < factors.cols(); ++j) fac.push_back(column_labels(factors, j));
  for (Eigen::Index i = 0; i < latents.cols(); ++i) {
    const auto z = discretized_column(latents, i, bins);
    for (Eigen::Index j = 0; j < factors.cols(); ++j) mi(i, j) = mutual_information(z, fac[static_cast<std::size_t>(j)]);
  }
  return mi;
}

ImportanceMatrix importance_matrix(const Eigen::MatrixXd& latents, const Eigen::MatrixXi& factors, int bins) {
  ImportanceMatrix imp{mi_matrix(latents, factors, bins)};
  for (Eigen::Index j = 0; j < factors.cols(); ++j) {
    const double h = entropy(column_labels(factors, j));
    if (h > 0) {
      imp.r.col(j) /= h;
    } else {
      imp.r.col(j).setZero();
    }
  }
  return imp;
}

DciScores dci_scores(const ImportanceMatrix& imp) {
  const auto& r = imp.r;
  if (r.size() == 0) throw ShapeError("dci_scores: empty importance matrix");
  if ((r.array() < 0.0).any() || !r.allFinite()) throw Error("dci_scores: importance entries must be finite and >= 0");
  const double total = r.sum();
  DciScores s;
  if (total <= 0.0) return s;
  for (Eigen::Index i = 0; i < r.rows(); ++i) {
    const auto [d, w] = concentration(r.row(i).transpose());
    s.disentanglement += d * w / total;
  }
  for (Eigen::Index j = 0; j < r.cols(); ++j) {
    const auto [c, w] = concentration(r.col(j));
    s.completeness += c * w / total;
  }
  s.disentanglement = std::clamp(s.disentanglement, 0.0, 1.0);
  s.completeness = std::clamp(s.completeness, 0.0, 1.0);
  return s;
}

double mig(const Eigen::MatrixXd& latents, const Eigen::MatrixXi& factors, int bins) {
  check_pair(latents, factors, "mig");
  if (latents.cols() < 2) throw ShapeError("mig: need at least two latent dimensions");
  const Eigen::MatrixXd mi = mi_matrix(latents, factors, bins);
  double acc = 0.0;
  int used = 0;
  for (Eigen::Index j = 0; j < factors.cols(); ++j) {
    const double h = entropy(column_labels(factors, j));
    if (h <= 0) continue;
    std::vector<double> col(mi.col(j).data(), mi.col(j).data() + mi.rows());
    std::partial_sort(col.begin(), col.begin() + 2, col.end(), std::greater<>());
    acc += std::clamp((col[0] - col[1]) / h, 0.0, 1.0);
    ++used;
  }
  return used ? acc / used : 0.0;
}

double sap(const Eigen::MatrixXd& latents, const Eigen::MatrixXi& factors) {
  check_pair(latents, factors, "sap");
  const Eigen::Index D = latents.cols(), F = factors.cols();
  Eigen::MatrixXd score(D, F);
  const Eigen::MatrixXd fd = factors.cast<double>();
  for (Eigen::Index i = 0; i < D; ++i) {
    const Eigen::VectorXd z = latents.col(i).array() - latents.col(i).mean();
    const double szz = z.squaredNorm();
    for (Eigen::Index j = 0; j < F; ++j) {
      const Eigen::VectorXd v = fd.col(j).array() - fd.col(j).mean();
      const double svv = v.squaredNorm();
      if (szz <= 0 || svv <= 0) {
        score(i, j) = 0.0;
        continue;
      }
      const double szv = z.dot(v);
      score(i, j) = std::clamp(szv * szv / (szz * svv), 0.0, 1.0);
    }
  }
  double acc = 0.0;
  for (Eigen::Index j = 0; j < F; ++j) {
    std::vector<double> col(score.col(j).data(), score.col(j).data() + D);
    std::sort(col.begin(), col.end(), std::greater<>());
    acc += D > 1 ? col[0] - col[1] : col[0];
  }
  return acc / static_cast<double>(F);
}

double modularity(const Eigen::MatrixXd& latents, const Eigen::MatrixXi& factors, int bins) {
  check_pair(latents, factors, "modularity");
  const Eigen::MatrixXd mi = mi_matrix(latents, factors, bins);
  const Eigen::Index F = mi.cols();
  if (F < 2) throw ShapeError("modularity: need at least two factors");
  double acc = 0.0;
  for (Eigen::Index i = 0; i < mi.rows(); ++i) {
    Eigen::Index arg = 0;
    const double top = mi.row(i).maxCoeff(&arg);
    if (top <= 0.0) {
      acc += 1.0;
      continue;
    }
    double dev = 0.0;
    for (Eigen::Index j = 0; j < F; ++j) {
      const double t = j == arg ? top : 0.0;
      dev += (mi(i, j) - t) * (mi(i, j) - t);
    }
    dev /= top * top * static_cast<double>(F - 1);
    acc += 1.0 - dev;
  }
  return std::clamp(acc / static_cast<double>(mi.rows()), 0.0, 1.0);
}

DisentanglementScores evaluate_disentanglement(const Model<float>& model, const FactorSpace& space,
                                               const std::vector<std::size_t>& split, std::size_t sample_count,
                                               std::uint64_t seed) {
  std::vector<std::size_t> pick(split);
  Rng rng(mix_seed(seed, 0xD15E));
  rng.shuffle(pick.begin(), pick.end());
  if (pick.size() > sample_count) pick.resize(sample_count);
  const std::size_t N = pick.size(), D = model.config().latent_dim, F = space.size();
  Eigen::MatrixXd z(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(D));
  Eigen::MatrixXi v(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(F));
  constexpr std::size_t chunk = 256;
  for (std::size_t s = 0; s < N; s += chunk) {
    const std::size_t len = std::min(chunk, N - s);
    const auto batch = render_batch(space, std::span<const std::size_t>(pick).subspan(s, len), model.config().image_size);
    const auto lat = model.encode(batch.images);
    for (std::size_t k = 0; k < len; ++k) {
      const auto row = static_cast<Eigen::Index>(s + k);
      for (std::size_t d = 0; d < D; ++d) z(row, static_cast<Eigen::Index>(d)) = lat[k * D + d];
      for (std::size_t f = 0; f < F; ++f) v(row, static_cast<Eigen::Index>(f)) = static_cast<int>(batch.factors[k][f]);
    }
  }
  DisentanglementScores out;
  out.sample_count = N;
  const auto dci = dci_scores(importance_matrix(z, v));
  out.dci_d = dci.disentanglement;
  out.dci_c = dci.completeness;
  out.mig = mig(z, v);
  out.sap = sap(z, v);
  out.modularity = modularity(z, v);
  return out;
}

std::string MetricRecord::to_jsonl() const {
  nlohmann::json j;
  j["model"] = model;
  j["seed"] = seed;
  j["split"] = split;
  j["metric"] = metric;
  j["value"] = value;
  j["sample_count"] = sample_count;
  j["extractor_seed"] = extractor_seed;
  if (!variant.empty()) j["variant"] = variant;
  return j.dump();
}

}  // namespace strucdec
