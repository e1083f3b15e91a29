#include "strucdec/hybrid_sampler.hpp"

#include <algorithm>

namespace strucdec {

void LatentBank::validate() const {
  if (latents.rank() != 2) throw Error("latent bank: latents must be an N x D matrix");
  if (size() < 1) throw Error("latent bank: empty");
  if (!layout.tiles(dim())) throw Error("latent bank: segment layout does not tile [0, D)");
  if (provenance.size() != size()) throw Error("latent bank: provenance length differs from bank size");
}

LatentBank collect_bank(const Model<float>& model, const FactorSpace& space, const std::vector<std::size_t>& split,
                        std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error("collect_bank: bank size must be positive");
  if (n > split.size()) {
    throw Error("collect_bank: requested " + std::to_string(n) + " latents from a split of " + std::to_string(split.size()));
  }
  // Partial Fisher-Yates: the first n positions become a uniform draw without replacement.
  std::vector<std::size_t> pool(split);
  Rng rng(mix_seed(seed, 0xBA4C));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.index(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(n);

  const auto& cfg = model.config();
  const std::size_t D = cfg.latent_dim;
  LatentBank bank{Tensor<float>({n, D}), sampling_layout(cfg), pool};
  constexpr std::size_t chunk = 128;
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t len = std::min(chunk, n - start);
    const auto batch = render_batch(space, std::span<const std::size_t>(pool).subspan(start, len), cfg.image_size);
    const auto z = model.encode(batch.images);
    std::copy(z.vec().begin(), z.vec().end(), bank.latents.vec().begin() + static_cast<std::ptrdiff_t>(start * D));
  }
  return bank;
}

Tensor<float> hybrid_sample(const LatentBank& bank, std::size_t count, Rng& rng) {
  bank.validate();
  const std::size_t N = bank.size(), D = bank.dim();
  if (count == 0) throw Error("hybrid_sample: count must be positive");
  Tensor<float> out({count, D});
  const auto& src = bank.latents.vec();
  for (std::size_t r = 0; r < count; ++r) {
    for (const auto& [start, width] : bank.layout.blocks) {
      const std::size_t row = static_cast<std::size_t>(rng.index(N));
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(row * D + start), width,
                  out.vec().begin() + static_cast<std::ptrdiff_t>(r * D + start));
    }
  }
  return out;
}

std::vector<float> partial_hybridize(const LatentBank& bank, const std::vector<float>& base,
                                     const std::vector<std::size_t>& segments, Rng& rng) {
  bank.validate();
  const std::size_t D = bank.dim();
  if (base.size() != D) throw ShapeError("partial_hybridize: base has " + std::to_string(base.size()) + " dims, bank has " + std::to_string(D));
  std::vector<float> out(base);
  const auto& src = bank.latents.vec();
  for (auto s : segments) {
    if (s >= bank.layout.blocks.size()) throw Error("partial_hybridize: segment " + std::to_string(s) + " out of range");
    const auto [start, width] = bank.layout.blocks[s];
    const std::size_t row = static_cast<std::size_t>(rng.index(bank.size()));
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(row * D + start), width, out.begin() + static_cast<std::ptrdiff_t>(start));
  }
  return out;
}

Tensor<float> prior_sample(std::size_t dim, std::size_t count, Rng& rng) {
  Tensor<float> out({count, dim});
  for (auto& v : out.vec()) v = static_cast<float>(rng.normal());
  return out;
}

}  // namespace strucdec
