#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "strucdec/tensor.hpp"

namespace strucdec {

struct Factor {
  std::string name;
  std::size_t cardinality;
};

/// Ordered factors of the procedural "desk-shapes" grid.
struct FactorSpace {
  std::vector<Factor> factors;

  /// floor_hue(8), wall_hue(8), object_hue(8), scale(6), shape(4), orientation(5).
  static FactorSpace desk_shapes();

  std::size_t size() const { return factors.size(); }
  std::size_t grid_size() const;
  std::size_t index_of(const std::string& name) const;
};

using FactorTuple = std::vector<std::size_t>;

namespace factor {
inline constexpr std::size_t floor_hue = 0;
inline constexpr std::size_t wall_hue = 1;
inline constexpr std::size_t object_hue = 2;
inline constexpr std::size_t scale = 3;
inline constexpr std::size_t shape = 4;
inline constexpr std::size_t orientation = 5;
}  // namespace factor

/// Mixed-radix decoding of a grid index, last factor fastest.
FactorTuple tuple_at(const FactorSpace& space, std::size_t index);
std::size_t index_of(const FactorSpace& space, const FactorTuple& t);

/// Renders a 3 x S x S image in [0,1]. Pure: equal tuples give equal bits.
/// Floor is the bottom third, wall the rest; a filled shape sits on top.
Tensor<float> render(const FactorTuple& t, std::size_t image_size);

/// Fixed 8-entry hue table (HSV with full saturation and value).
std::array<float, 3> hue_rgb(std::size_t hue);

struct Splits {
  std::vector<std::size_t> train, val, test;
};

/// Seeded shuffle of the whole grid cut at the given ratios.
Splits make_splits(const FactorSpace& space, std::uint64_t seed, double train = 0.7, double val = 0.1, double test = 0.2);

using FactorPredicate = std::function<bool(const FactorTuple&)>;

std::vector<std::size_t> holdout_filter(const FactorSpace& space, const std::vector<std::size_t>& split,
                                        const FactorPredicate& keep);

/// Predicate keeping tuples whose `factor` value is not in `values`.
FactorPredicate exclude_values(std::size_t factor, std::vector<std::size_t> values);

struct Batch {
  std::vector<std::size_t> indices;
  Tensor<float> images;
  std::vector<FactorTuple> factors;
};

/// Renders the listed grid indices into one N x 3 x S x S batch.
Batch render_batch(const FactorSpace& space, std::span<const std::size_t> indices, std::size_t image_size);

/// Deterministic per-(seed, epoch) batching of a split; the last short batch is kept.
class BatchIterator {
 public:
  BatchIterator(const std::vector<std::size_t>& split, std::size_t batch_size, std::uint64_t seed, std::uint64_t epoch);

  std::size_t batch_count() const;
  /// Indices of batch `b` in this epoch.
  std::span<const std::size_t> batch(std::size_t b) const;

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
};

/// Batch indices for global training step `step`, walking epochs as needed.
std::vector<std::size_t> batch_for_step(const std::vector<std::size_t>& split, std::size_t batch_size, std::uint64_t seed,
                                        std::uint64_t step);

/// Writes one P6 PPM per index plus factors.csv (columns: index, then factor names).
void dump_dataset(const FactorSpace& space, const std::vector<std::size_t>& indices, std::size_t image_size,
                  const std::filesystem::path& dir);

struct LoadedDataset {
  std::vector<std::size_t> indices;
  std::vector<FactorTuple> factors;
  std::vector<Tensor<float>> images;
};

LoadedDataset load_dataset(const FactorSpace& space, const std::filesystem::path& dir);

}  // namespace strucdec
