#include "strucdec/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "strucdec/image_io.hpp"
#include "strucdec/rng.hpp"

namespace strucdec {

FactorSpace FactorSpace::desk_shapes() {
  return {{{"floor_hue", 8}, {"wall_hue", 8}, {"object_hue", 8}, {"scale", 6}, {"shape", 4}, {"orientation", 5}}};
}

std::size_t FactorSpace::grid_size() const {
  std::size_t n = 1;
  for (const auto& f : factors) n *= f.cardinality;
  return n;
}

std::size_t FactorSpace::index_of(const std::string& name) const {
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (factors[i].name == name) return i;
  }
  throw Error("unknown factor '" + name + "'");
}

FactorTuple tuple_at(const FactorSpace& space, std::size_t index) {
  if (index >= space.grid_size()) throw Error("grid index " + std::to_string(index) + " out of range");
  FactorTuple t(space.size());
  for (std::size_t i = space.size(); i-- > 0;) {
    t[i] = index % space.factors[i].cardinality;
    index /= space.factors[i].cardinality;
  }
  return t;
}

std::size_t index_of(const FactorSpace& space, const FactorTuple& t) {
  if (t.size() != space.size()) throw Error("factor tuple has wrong length");
  std::size_t index = 0;
  for (std::size_t i = 0; i < space.size(); ++i) {
    if (t[i] >= space.factors[i].cardinality) {
      throw Error("factor " + space.factors[i].name + " value " + std::to_string(t[i]) + " out of range");
    }
    index = index * space.factors[i].cardinality + t[i];
  }
  return index;
}

std::array<float, 3> hue_rgb(std::size_t hue) {
  const double h = static_cast<double>(hue % 8) * 45.0 / 60.0;
  const double x = 1.0 - std::abs(std::fmod(h, 2.0) - 1.0);
  const auto xf = static_cast<float>(x);
  switch (static_cast<int>(h)) {
    case 0: return {1.f, xf, 0.f};
    case 1: return {xf, 1.f, 0.f};
    case 2: return {0.f, 1.f, xf};
    case 3: return {0.f, xf, 1.f};
    case 4: return {xf, 0.f, 1.f};
    default: return {1.f, 0.f, xf};
  }
}

namespace {

bool inside_shape(std::size_t shape, double dx, double dy, double r) {
  switch (shape) {
    case 0: return std::abs(dx) <= 0.85 * r && std::abs(dy) <= 0.85 * r;
    case 1: return dx * dx + dy * dy <= r * r;
    case 2:
      // Upward triangle: apex at -r, base at +0.8r.
      return dy >= -r && dy <= 0.8 * r && std::abs(dx) <= (dy + r) / 1.8;
    default: return std::abs(dx) + std::abs(dy) <= r;
  }
}

}  // namespace

Tensor<float> render(const FactorTuple& t, std::size_t S) {
  if (t.size() != 6) throw Error("render: expected a 6-factor tuple");
  const auto floor = hue_rgb(t[factor::floor_hue]);
  const auto wall = hue_rgb(t[factor::wall_hue]);
  const auto object = hue_rgb(t[factor::object_hue]);
  const double radius = 0.10 + 0.03 * static_cast<double>(t[factor::scale]);
  const double cx = 0.3 + 0.1 * static_cast<double>(t[factor::orientation]);
  const double cy = 0.62;
  const std::size_t floor_row = S - S / 3;
  const double inv = 1.0 / static_cast<double>(S);

  Tensor<float> img({3, S, S});
  for (std::size_t y = 0; y < S; ++y) {
    const auto& bg = y >= floor_row ? floor : wall;
    for (std::size_t x = 0; x < S; ++x) {
      std::array<float, 3> acc{0.f, 0.f, 0.f};
      // 2x2 supersampling.
      for (int sy = 0; sy < 2; ++sy) {
        for (int sx = 0; sx < 2; ++sx) {
          const double px = (static_cast<double>(x) + 0.25 + 0.5 * sx) * inv;
          const double py = (static_cast<double>(y) + 0.25 + 0.5 * sy) * inv;
          const auto& col = inside_shape(t[factor::shape], px - cx, py - cy, radius) ? object : bg;
          for (int c = 0; c < 3; ++c) acc[c] += col[c];
        }
      }
      for (std::size_t c = 0; c < 3; ++c) img[(c * S + y) * S + x] = acc[c] * 0.25f;
    }
  }
  return img;
}

Splits make_splits(const FactorSpace& space, std::uint64_t seed, double train, double val, double test) {
  if (train < 0 || val < 0 || test < 0 || std::abs(train + val + test - 1.0) > 1e-9) {
    throw Error("make_splits: ratios must be non-negative and sum to 1");
  }
  const std::size_t n = space.grid_size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, 0x5B117));
  rng.shuffle(order.begin(), order.end());
  const auto n_train = static_cast<std::size_t>(std::llround(train * static_cast<double>(n)));
  const auto n_val = std::min(n - n_train, static_cast<std::size_t>(std::llround(val * static_cast<double>(n))));
  Splits s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

std::vector<std::size_t> holdout_filter(const FactorSpace& space, const std::vector<std::size_t>& split,
                                        const FactorPredicate& keep) {
  std::vector<std::size_t> out;
  for (auto i : split) {
    if (keep(tuple_at(space, i))) out.push_back(i);
  }
  return out;
}

FactorPredicate exclude_values(std::size_t f, std::vector<std::size_t> values) {
  return [f, values = std::move(values)](const FactorTuple& t) {
    return std::find(values.begin(), values.end(), t.at(f)) == values.end();
  };
}

Batch render_batch(const FactorSpace& space, std::span<const std::size_t> indices, std::size_t S) {
  Batch b;
  b.indices.assign(indices.begin(), indices.end());
  b.images = Tensor<float>({indices.size(), 3, S, S});
  const std::size_t per = 3 * S * S;
  for (std::size_t k = 0; k < indices.size(); ++k) {
    auto t = tuple_at(space, indices[k]);
    const auto img = render(t, S);
    std::copy(img.vec().begin(), img.vec().end(), b.images.vec().begin() + static_cast<std::ptrdiff_t>(k * per));
    b.factors.push_back(std::move(t));
  }
  return b;
}

BatchIterator::BatchIterator(const std::vector<std::size_t>& split, std::size_t batch_size, std::uint64_t seed,
                             std::uint64_t epoch)
    : order_(split), batch_size_(batch_size) {
  if (batch_size == 0) throw Error("batch size must be positive");
  if (split.empty()) throw Error("cannot batch an empty split");
  Rng rng(mix_seed(seed, epoch));
  rng.shuffle(order_.begin(), order_.end());
}

std::size_t BatchIterator::batch_count() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

std::span<const std::size_t> BatchIterator::batch(std::size_t b) const {
  if (b >= batch_count()) throw Error("batch index out of range");
  const std::size_t start = b * batch_size_;
  const std::size_t len = std::min(batch_size_, order_.size() - start);
  return std::span<const std::size_t>(order_).subspan(start, len);
}

std::vector<std::size_t> batch_for_step(const std::vector<std::size_t>& split, std::size_t batch_size, std::uint64_t seed,
                                        std::uint64_t step) {
  if (split.empty() || batch_size == 0) throw Error("batch_for_step: empty split or zero batch size");
  const std::uint64_t per_epoch = (split.size() + batch_size - 1) / batch_size;
  BatchIterator it(split, batch_size, seed, step / per_epoch);
  const auto b = it.batch(static_cast<std::size_t>(step % per_epoch));
  return {b.begin(), b.end()};
}

void dump_dataset(const FactorSpace& space, const std::vector<std::size_t>& indices, std::size_t S,
                  const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream csv(dir / "factors.csv");
  if (!csv) throw Error("dump_dataset: cannot write factors.csv in " + dir.string());
  csv << "index";
  for (const auto& f : space.factors) csv << ',' << f.name;
  csv << '\n';
  for (auto idx : indices) {
    const auto t = tuple_at(space, idx);
    const auto img = render(t, S);
    RgbImage out{S, S, std::vector<std::uint8_t>(S * S * 3)};
    for (std::size_t p = 0; p < S * S; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        out.pixels[p * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(img[c * S * S + p], 0.f, 1.f) * 255.f));
      }
    }
    write_ppm(dir / (std::to_string(idx) + ".ppm"), out);
    csv << idx;
    for (auto v : t) csv << ',' << v;
    csv << '\n';
  }
}

LoadedDataset load_dataset(const FactorSpace& space, const std::filesystem::path& dir) {
  std::ifstream csv(dir / "factors.csv");
  if (!csv) throw Error("load_dataset: missing factors.csv in " + dir.string());
  std::string line;
  std::getline(csv, line);
  std::string expected = "index";
  for (const auto& f : space.factors) expected += "," + f.name;
  if (line != expected) throw Error("load_dataset: unexpected CSV header '" + line + "'");
  LoadedDataset ds;
  while (std::getline(csv, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    const std::size_t idx = std::stoul(cell);
    FactorTuple t;
    while (std::getline(ss, cell, ',')) t.push_back(std::stoul(cell));
    if (t.size() != space.size()) throw Error("load_dataset: row for index " + std::to_string(idx) + " has wrong width");
    const auto img = read_ppm(dir / (std::to_string(idx) + ".ppm"));
    const std::size_t plane = img.width * img.height;
    Tensor<float> out({3, img.height, img.width});
    for (std::size_t p = 0; p < plane; ++p) {
      for (std::size_t c = 0; c < 3; ++c) out[c * plane + p] = static_cast<float>(img.pixels[p * 3 + c]) / 255.f;
    }
    ds.indices.push_back(idx);
    ds.factors.push_back(std::move(t));
    ds.images.push_back(std::move(out));
  }
  return ds;
}

}  // namespace strucdec
