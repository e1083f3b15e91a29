#pragma once

#include <cstdint>
#include <vector>

#include "strucdec/dataset.hpp"
#include "strucdec/model.hpp"
#include "strucdec/rng.hpp"

namespace strucdec {

/// Encoded training latents backing hybrid sampling. Immutable once collected.
struct LatentBank {
  Tensor<float> latents;  // N x D
  SegmentLayout layout;
  std::vector<std::size_t> provenance;

  std::size_t size() const { return latents.dim(0); }
  std::size_t dim() const { return latents.dim(1); }
  /// Throws unless N >= 1, the layout tiles [0, D) and provenance has N entries.
  void validate() const;
};

inline constexpr std::size_t kDefaultBankSize = 128;

/// Encodes N distinct split members drawn uniformly without replacement.
LatentBank collect_bank(const Model<float>& model, const FactorSpace& space, const std::vector<std::size_t>& split,
                        std::size_t n, std::uint64_t seed);

/// Each segment of each output row is copied jointly from an independently
/// chosen bank row.
Tensor<float> hybrid_sample(const LatentBank& bank, std::size_t count, Rng& rng);

/// Resamples the listed segments of `base` (length D) from the bank; all other
/// coordinates are copied from `base`.
std::vector<float> partial_hybridize(const LatentBank& bank, const std::vector<float>& base,
                                     const std::vector<std::size_t>& segments, Rng& rng);

/// i.i.d. standard normal latents.
Tensor<float> prior_sample(std::size_t dim, std::size_t count, Rng& rng);

}  // namespace strucdec
