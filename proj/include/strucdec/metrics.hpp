#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "strucdec/dataset.hpp"
#include "strucdec/model.hpp"

namespace strucdec {

// ---------------------------------------------------------------------------
// Reconstruction

struct ReconScores {
  double bce = 0.0;  // nats per element
  double mse = 0.0;
  double mse_x1000() const { return 1000.0 * mse; }
};

/// Maps a batch of images to reconstruction logits.
using Reconstructor = std::function<Tensor<float>(const Tensor<float>& images)>;

/// Element-averaged BCE on logits and MSE of sigmoid(logits) over the split.
ReconScores recon_scores(const Reconstructor& predict, const FactorSpace& space, const std::vector<std::size_t>& split,
                         std::size_t image_size, std::size_t batch_size = 128);
ReconScores recon_scores(const Model<float>& model, const FactorSpace& space, const std::vector<std::size_t>& split);

// ---------------------------------------------------------------------------
// Frechet feature distance

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t count = 0;
};

/// Mean and unbiased covariance of the rows of `features`.
FeatureStats feature_stats(const Eigen::MatrixXd& features);

/// ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^{1/2}). The square-root trace is
/// taken from the eigenvalues of S_a^{1/2} S_b S_a^{1/2}.
double frechet_distance(const FeatureStats& a, const FeatureStats& b);

/// Frozen, randomly initialized conv net: four conv blocks and global average
/// pooling to a 64-dim embedding. Never trained.
class FeatureExtractor {
 public:
  static constexpr std::size_t kDim = 64;
  explicit FeatureExtractor(std::uint64_t seed = 0);

  /// images: N x 3 x S x S with S divisible by 8. Returns N x 64.
  Eigen::MatrixXd features(const Tensor<float>& images) const;
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::vector<Tensor<float>> weights_, biases_;
};

FeatureStats extract_features(const Tensor<float>& images, std::uint64_t extractor_seed = 0);

// ---------------------------------------------------------------------------
// Disentanglement

/// D x F latent-to-factor relevance, all entries >= 0.
struct ImportanceMatrix {
  Eigen::MatrixXd r;
};

/// Equal-width bins over [min, max]; constant input maps to bin 0.
std::vector<int> discretize(std::span<const double> values, int bins = 20);

/// Plug-in entropy in nats of non-negative integer labels.
double entropy(std::span<const int> labels);
/// Plug-in mutual information in nats from the joint histogram.
double mutual_information(std::span<const int> a, std::span<const int> b);

/// D x F plug-in MI between discretized latents and factors.
Eigen::MatrixXd mi_matrix(const Eigen::MatrixXd& latents, const Eigen::MatrixXi& factors, int bins = 20);

/// R[i,j] = MI(latent_i, factor_j) / H(factor_j).
ImportanceMatrix importance_matrix(const Eigen::MatrixXd& latents, const Eigen::MatrixXi& factors, int bins = 20);

struct DciScores {
  double disentanglement = 0.0;
  double completeness = 0.0;
};
DciScores dci_scores(const ImportanceMatrix& imp);

double mig(const Eigen::MatrixXd& latents, const Eigen::MatrixXi& factors, int bins = 20);
double sap(const Eigen::MatrixXd& latents, const Eigen::MatrixXi& factors);
double modularity(const Eigen::MatrixXd& latents, const Eigen::MatrixXi& factors, int bins = 20);

struct DisentanglementScores {
  double dci_d = 0.0, dci_c = 0.0, mig = 0.0, sap = 0.0, modularity = 0.0;
  std::size_t sample_count = 0;
};

/// Encodes a seeded subset of `split` (at most `sample_count` items) and scores it.
DisentanglementScores evaluate_disentanglement(const Model<float>& model, const FactorSpace& space,
                                               const std::vector<std::size_t>& split, std::size_t sample_count,
                                               std::uint64_t seed);

// ---------------------------------------------------------------------------
// Reporting

struct MetricRecord {
  std::string model;
  std::uint64_t seed = 0;
  std::string split;
  std::string metric;
  double value = 0.0;
  std::size_t sample_count = 0;
  std::uint64_t extractor_seed = 0;
  /// Optional label, e.g. the extrapolation variant. Omitted when empty.
  std::string variant;

  /// One JSON object, no trailing newline.
  std::string to_jsonl() const;
};

}  // namespace strucdec
