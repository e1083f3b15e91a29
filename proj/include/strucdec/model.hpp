#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "strucdec/autodiff.hpp"

namespace strucdec {

enum class Variant { SAE, AdaAE, AE, VAE, BetaVAE };

std::string to_string(Variant v);
Variant parse_variant(const std::string& s);

/// Architecture description shared by every variant.
struct ModelConfig {
  Variant variant = Variant::SAE;
  std::size_t latent_dim = 12;
  /// Str-Tfm injection count (SAE, AdaAE). Ignored by the hourglass variants.
  std::size_t segments = 12;
  std::size_t conv_blocks = 12;
  std::size_t channels = 16;
  std::size_t image_size = 32;
  double beta = 1.0;
  std::uint64_t seed = 0;

  bool is_vae() const { return variant == Variant::VAE || variant == Variant::BetaVAE; }
  bool is_structured() const { return variant == Variant::SAE || variant == Variant::AdaAE; }
  std::size_t pool_count() const { return conv_blocks / 3; }
  std::size_t bottleneck_size() const { return image_size >> pool_count(); }
  std::size_t groups() const { return channels < 8 ? channels : 8; }
  std::size_t segment_width() const { return latent_dim / segments; }

  /// Violated invariants, one message per problem, each naming the field.
  std::vector<std::string> violations() const;
  /// Throws Error listing every violation.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Config for a named variant with desk-scale defaults. BetaVAE gets beta = 2.
ModelConfig make_config(Variant v, std::size_t segments = 12, std::uint64_t seed = 0);

/// Contiguous (start, width) blocks of latent coordinates.
struct SegmentLayout {
  std::vector<std::pair<std::size_t, std::size_t>> blocks;

  static SegmentLayout even(std::size_t dim, std::size_t k);
  static SegmentLayout singletons(std::size_t dim) { return even(dim, dim); }
  std::size_t dim() const;
  /// True when the blocks tile [0, dim) in order without gaps or overlap.
  bool tiles(std::size_t dim) const;
  bool operator==(const SegmentLayout&) const = default;
};

/// Layout the sampler should use: K segments for SAE, singletons otherwise.
SegmentLayout sampling_layout(const ModelConfig& cfg);

/// Conv block position (0-based) receiving segment i, i = 0..K-1.
std::vector<std::size_t> injection_blocks(std::size_t blocks, std::size_t k);

template <typename T>
std::vector<Var<T>> segment_split(Var<T> latent, std::size_t k);

template <typename T>
struct LossParts {
  Var<T> total;
  double bce = 0.0;
  double kl = 0.0;
};

/// Encoder plus one of the decoder variants, with a flat named parameter registry.
/// Parameter names start with "enc." or "dec.".
template <typename T>
class Model {
 public:
  struct Encoded {
    Var<T> mu;
    std::optional<Var<T>> logvar;
  };

  explicit Model(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter<T>>& params() { return params_; }
  const std::vector<Parameter<T>>& params() const { return params_; }
  const Parameter<T>& param(const std::string& name) const;
  std::size_t parameter_count() const;
  std::size_t decoder_parameter_count() const;

  /// Tracked forward passes: parameters enter the tape as gradient leaves.
  Encoded encode(Tape<T>& tape, const Tensor<T>& images);
  Var<T> decode(Tape<T>& tape, Var<T> latents);
  /// Reconstruction BCE, plus beta * KL for the VAE family.
  LossParts<T> loss(Tape<T>& tape, const Tensor<T>& images, Rng& rng);

  /// Untracked inference. Returns the mean for the VAE family.
  Tensor<T> encode(const Tensor<T>& images) const;
  std::pair<Tensor<T>, Tensor<T>> encode_gaussian(const Tensor<T>& images) const;
  Tensor<T> decode(const Tensor<T>& latents) const;

  /// Str-Tfm scale and shift of injection `i` for a given latent batch.
  std::pair<Tensor<T>, Tensor<T>> injection_affine(std::size_t i, const Tensor<T>& latents) const;

  void zero_grad();

 private:
  struct Block {
    std::size_t weight, bias, gamma, beta;
  };
  struct Mlp {
    std::vector<std::pair<std::size_t, std::size_t>> layers;
  };
  struct Injection {
    std::size_t block;
    std::size_t start, width;
    Mlp mlp;
  };

  template <typename Bind>
  Encoded encode_impl(Tape<T>& tape, const Tensor<T>& images, Bind bind) const;
  template <typename Bind>
  Var<T> decode_impl(Tape<T>& tape, Var<T> latents, Bind bind) const;
  template <typename Bind>
  std::pair<Var<T>, Var<T>> injection_impl(Tape<T>& tape, const Injection& inj, Var<T> latents, Bind bind) const;

  std::size_t add_param(const std::string& name, Shape shape);

  ModelConfig cfg_;
  std::vector<Parameter<T>> params_;
  std::vector<Block> enc_blocks_;
  std::size_t enc_head_w_ = 0, enc_head_b_ = 0;
  std::optional<std::size_t> dec_const_;
  std::size_t dec_in_w_ = 0, dec_in_b_ = 0;
  std::vector<Injection> injections_;
  std::vector<Block> dec_blocks_;
  std::size_t dec_out_w_ = 0, dec_out_b_ = 0;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace strucdec
