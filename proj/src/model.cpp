#include "strucdec/model.hpp"

#include <cmath>
#include <sstream>

namespace strucdec {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::SAE: return "SAE";
    case Variant::AdaAE: return "AdaAE";
    case Variant::AE: return "AE";
    case Variant::VAE: return "VAE";
    case Variant::BetaVAE: return "BetaVAE";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  for (auto v : {Variant::SAE, Variant::AdaAE, Variant::AE, Variant::VAE, Variant::BetaVAE}) {
    if (to_string(v) == s) return v;
  }
  throw Error("variant: unknown value '" + s + "' (expected SAE, AdaAE, AE, VAE or BetaVAE)");
}

std::vector<std::string> ModelConfig::violations() const {
  std::vector<std::string> out;
  if (latent_dim == 0) out.push_back("latent_dim must be positive");
  if (channels == 0) out.push_back("channels must be positive");
  if (image_size == 0) out.push_back("image_size must be positive");
  if (conv_blocks == 0 || conv_blocks % 3 != 0) out.push_back("conv_blocks must be a positive multiple of 3");
  if (channels >= 8 && channels % 8 != 0) out.push_back("channels must be divisible by the group-norm group count 8");
  if (conv_blocks % 3 == 0 && conv_blocks > 0 && image_size > 0) {
    const std::size_t pools = conv_blocks / 3;
    if (pools >= 31 || image_size % (std::size_t{1} << pools) != 0) {
      out.push_back("image_size must equal 2^(conv_blocks/3) times an integer bottleneck size");
    }
  }
  if (!(beta >= 0.0) || !std::isfinite(beta)) out.push_back("beta must be a finite value >= 0");
  if (is_structured()) {
    if (segments == 0) {
      out.push_back("segments must be positive");
    } else {
      if (variant == Variant::SAE && latent_dim % segments != 0) out.push_back("segments must divide latent_dim");
      if (segments > conv_blocks) out.push_back("segments must not exceed conv_blocks");
    }
  }
  return out;
}

void ModelConfig::validate() const {
  const auto v = violations();
  if (v.empty()) return;
  std::ostringstream os;
  os << "invalid model config:";
  for (const auto& s : v) os << "\n  - " << s;
  throw Error(os.str());
}

ModelConfig make_config(Variant v, std::size_t segments, std::uint64_t seed) {
  ModelConfig cfg;
  cfg.variant = v;
  cfg.seed = seed;
  cfg.segments = v == Variant::SAE || v == Variant::AdaAE ? segments : 1;
  cfg.beta = v == Variant::BetaVAE ? 2.0 : 1.0;
  return cfg;
}

SegmentLayout SegmentLayout::even(std::size_t dim, std::size_t k) {
  if (k == 0 || dim % k != 0) throw Error("segment layout: " + std::to_string(k) + " segments do not divide " + std::to_string(dim));
  SegmentLayout l;
  const std::size_t w = dim / k;
  for (std::size_t i = 0; i < k; ++i) l.blocks.emplace_back(i * w, w);
  return l;
}

std::size_t SegmentLayout::dim() const {
  std::size_t d = 0;
  for (const auto& b : blocks) d += b.second;
  return d;
}

bool SegmentLayout::tiles(std::size_t d) const {
  std::size_t next = 0;
  for (const auto& [start, width] : blocks) {
    if (start != next || width == 0) return false;
    next += width;
  }
  return next == d && d > 0;
}

SegmentLayout sampling_layout(const ModelConfig& cfg) {
  if (cfg.variant == Variant::SAE) return SegmentLayout::even(cfg.latent_dim, cfg.segments);
  return SegmentLayout::singletons(cfg.latent_dim);
}

std::vector<std::size_t> injection_blocks(std::size_t blocks, std::size_t k) {
  if (k == 0 || k > blocks) {
    throw Error("injection placement: " + std::to_string(k) + " segments cannot be placed over " + std::to_string(blocks) +
                " conv blocks");
  }
  std::vector<std::size_t> pos(k);
  for (std::size_t i = 0; i < k; ++i) {
    pos[i] = static_cast<std::size_t>(std::lround(static_cast<double>(i * blocks) / static_cast<double>(k)));
  }
  return pos;
}

template <typename T>
std::vector<Var<T>> segment_split(Var<T> latent, std::size_t k) {
  require_rank(latent.shape(), 2, "segment_split");
  const auto layout = SegmentLayout::even(latent.shape()[1], k);
  std::vector<Var<T>> out;
  for (const auto& [start, width] : layout.blocks) out.push_back(slice_cols(latent, start, width));
  return out;
}

template <typename T>
std::size_t Model<T>::add_param(const std::string& name, Shape shape) {
  params_.emplace_back(name, Tensor<T>(std::move(shape)));
  return params_.size() - 1;
}

template <typename T>
Model<T>::Model(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  const std::size_t C = cfg_.channels, B = cfg_.conv_blocks, D = cfg_.latent_dim, Sb = cfg_.bottleneck_size();

  auto block = [&](const std::string& prefix, std::size_t in, std::size_t k) {
    Block b{};
    b.weight = add_param(prefix + ".conv.weight", {C, in, k, k});
    b.bias = add_param(prefix + ".conv.bias", {C});
    b.gamma = add_param(prefix + ".gn.gamma", {C});
    b.beta = add_param(prefix + ".gn.beta", {C});
    return b;
  };

  for (std::size_t b = 0; b < B; ++b) {
    enc_blocks_.push_back(block("enc.block" + std::to_string(b + 1), b == 0 ? 3 : C, b == 0 ? 5 : 3));
  }
  const std::size_t head_out = cfg_.is_vae() ? 2 * D : D;
  enc_head_w_ = add_param("enc.head.weight", {head_out, C * Sb * Sb});
  enc_head_b_ = add_param("enc.head.bias", {head_out});

  if (cfg_.is_structured()) {
    dec_const_ = add_param("dec.const", {C, Sb, Sb});
    const auto pos = injection_blocks(B, cfg_.segments);
    const std::size_t seg_w = cfg_.variant == Variant::SAE ? D / cfg_.segments : D;
    const std::size_t hidden = std::max<std::size_t>(2 * (D / std::max<std::size_t>(cfg_.segments, 1)), 16);
    for (std::size_t i = 0; i < cfg_.segments; ++i) {
      Injection inj;
      inj.block = pos[i];
      inj.start = cfg_.variant == Variant::SAE ? i * seg_w : 0;
      inj.width = seg_w;
      const std::string prefix = "dec.inject" + std::to_string(i + 1);
      const std::size_t widths[5] = {seg_w, hidden, hidden, hidden, 2 * C};
      for (std::size_t l = 0; l < 4; ++l) {
        const std::string fc = prefix + ".fc" + std::to_string(l + 1);
        inj.mlp.layers.emplace_back(add_param(fc + ".weight", {widths[l + 1], widths[l]}), add_param(fc + ".bias", {widths[l + 1]}));
      }
      injections_.push_back(std::move(inj));
    }
  } else {
    dec_in_w_ = add_param("dec.input.weight", {C * Sb * Sb, D});
    dec_in_b_ = add_param("dec.input.bias", {C * Sb * Sb});
  }
  for (std::size_t b = 0; b < B; ++b) dec_blocks_.push_back(block("dec.block" + std::to_string(b + 1), C, 3));
  dec_out_w_ = add_param("dec.out.weight", {3, C, 3, 3});
  dec_out_b_ = add_param("dec.out.bias", {3});

  // Initialization, drawn in registry order so float and double models agree.
  Rng rng(cfg_.seed);
  auto ends_with = [](const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  };
  for (auto& p : params_) {
    auto& v = p.value.vec();
    if (ends_with(p.name, ".gamma")) {
      p.value.fill(T(1));
    } else if (ends_with(p.name, ".weight")) {
      const std::size_t fan_in = p.value.size() / p.value.dim(0);
      double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
      // Str-Tfm output layer starts near the identity transform.
      if (ends_with(p.name, ".fc4.weight")) bound *= 0.1;
      for (auto& x : v) x = static_cast<T>(rng.uniform(-bound, bound));
    } else if (p.name == "dec.const") {
      for (auto& x : v) x = static_cast<T>(rng.uniform(-std::sqrt(3.0), std::sqrt(3.0)));
    }
  }
}

template <typename T>
const Parameter<T>& Model<T>::param(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw Error("no parameter named " + name);
}

template <typename T>
std::size_t Model<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
std::size_t Model<T>::decoder_parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (p.name.rfind("dec.", 0) == 0) n += p.value.size();
  }
  return n;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

template <typename T>
template <typename Bind>
typename Model<T>::Encoded Model<T>::encode_impl(Tape<T>& tape, const Tensor<T>& images, Bind bind) const {
  const auto& s = images.shape();
  require_rank(s, 4, "encode images");
  const std::size_t S = cfg_.image_size;
  if (s[1] != 3 || s[2] != S || s[3] != S) {
    throw ShapeError("encode: expected N x 3 x " + std::to_string(S) + " x " + std::to_string(S) + " images, got " + shape_str(s));
  }
  Var<T> h = tape.constant(images);
  for (std::size_t b = 0; b < enc_blocks_.size(); ++b) {
    const auto& blk = enc_blocks_[b];
    h = conv2d(h, bind(blk.weight), bind(blk.bias));
    if (b % 3 == 0) h = maxpool2x2(h);
    h = mish(group_norm(h, cfg_.groups(), bind(blk.gamma), bind(blk.beta)));
  }
  const std::size_t N = s[0];
  h = reshape(h, {N, h.value().size() / N});
  Var<T> out = linear(h, bind(enc_head_w_), bind(enc_head_b_));
  if (!cfg_.is_vae()) return {out, std::nullopt};
  const std::size_t D = cfg_.latent_dim;
  return {slice_cols(out, 0, D), slice_cols(out, D, D)};
}

template <typename T>
template <typename Bind>
std::pair<Var<T>, Var<T>> Model<T>::injection_impl(Tape<T>& tape, const Injection& inj, Var<T> latents, Bind bind) const {
  (void)tape;
  Var<T> h = inj.width == cfg_.latent_dim ? latents : slice_cols(latents, inj.start, inj.width);
  for (std::size_t l = 0; l < inj.mlp.layers.size(); ++l) {
    h = linear(h, bind(inj.mlp.layers[l].first), bind(inj.mlp.layers[l].second));
    if (l + 1 < inj.mlp.layers.size()) h = mish(h);
  }
  const std::size_t C = cfg_.channels;
  return {add_scalar(slice_cols(h, 0, C), T(1)), slice_cols(h, C, C)};
}

template <typename T>
template <typename Bind>
Var<T> Model<T>::decode_impl(Tape<T>& tape, Var<T> latents, Bind bind) const {
  const auto& s = latents.shape();
  require_rank(s, 2, "decode latents");
  if (s[1] != cfg_.latent_dim) {
    throw ShapeError("decode: latent dim 1 is " + std::to_string(s[1]) + ", expected " + std::to_string(cfg_.latent_dim));
  }
  const std::size_t N = s[0], C = cfg_.channels, Sb = cfg_.bottleneck_size(), B = cfg_.conv_blocks;
  Var<T> h = dec_const_ ? broadcast_batch(bind(*dec_const_), N)
                        : reshape(linear(latents, bind(dec_in_w_), bind(dec_in_b_)), {N, C, Sb, Sb});
  std::size_t next = 0;
  for (std::size_t b = 0; b < B; ++b) {
    if ((B - 1 - b) % 3 == 0) h = upsample_bilinear2x(h);
    while (next < injections_.size() && injections_[next].block == b) {
      auto [scale, shift] = injection_impl(tape, injections_[next], latents, bind);
      h = channel_affine(h, scale, shift);
      ++next;
    }
    const auto& blk = dec_blocks_[b];
    h = mish(group_norm(conv2d(h, bind(blk.weight), bind(blk.bias)), cfg_.groups(), bind(blk.gamma), bind(blk.beta)));
  }
  return conv2d(h, bind(dec_out_w_), bind(dec_out_b_));
}

template <typename T>
typename Model<T>::Encoded Model<T>::encode(Tape<T>& tape, const Tensor<T>& images) {
  return encode_impl(tape, images, [&](std::size_t i) { return tape.param(params_[i]); });
}

template <typename T>
Var<T> Model<T>::decode(Tape<T>& tape, Var<T> latents) {
  return decode_impl(tape, latents, [&](std::size_t i) { return tape.param(params_[i]); });
}

template <typename T>
Tensor<T> Model<T>::encode(const Tensor<T>& images) const {
  Tape<T> tape;
  return encode_impl(tape, images, [&](std::size_t i) { return tape.constant(params_[i].value); }).mu.value();
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> Model<T>::encode_gaussian(const Tensor<T>& images) const {
  if (!cfg_.is_vae()) throw Error("encode_gaussian: " + to_string(cfg_.variant) + " has no posterior variance");
  Tape<T> tape;
  auto e = encode_impl(tape, images, [&](std::size_t i) { return tape.constant(params_[i].value); });
  return {e.mu.value(), e.logvar->value()};
}

template <typename T>
Tensor<T> Model<T>::decode(const Tensor<T>& latents) const {
  Tape<T> tape;
  return decode_impl(tape, tape.constant(latents), [&](std::size_t i) { return tape.constant(params_[i].value); }).value();
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> Model<T>::injection_affine(std::size_t i, const Tensor<T>& latents) const {
  if (i >= injections_.size()) throw Error("injection_affine: model has " + std::to_string(injections_.size()) + " injections");
  Tape<T> tape;
  auto [scale, shift] =
      injection_impl(tape, injections_[i], tape.constant(latents), [&](std::size_t k) { return tape.constant(params_[k].value); });
  return {scale.value(), shift.value()};
}

template <typename T>
LossParts<T> Model<T>::loss(Tape<T>& tape, const Tensor<T>& images, Rng& rng) {
  auto enc = encode(tape, images);
  if (!cfg_.is_vae()) {
    auto bce = bce_with_logits(decode(tape, enc.mu), images);
    return {bce, static_cast<double>(bce.value()[0]), 0.0};
  }
  auto z = reparameterize(enc.mu, *enc.logvar, rng);
  auto bce = bce_with_logits(decode(tape, z), images);
  auto kl = kl_diag_gaussian(enc.mu, *enc.logvar);
  // Reconstruction is a per-element mean, so the per-sample KL is spread over
  // the same number of elements; this is the usual summed ELBO, rescaled.
  const double elems = static_cast<double>(images.size() / images.dim(0));
  const T weight = static_cast<T>(cfg_.beta / elems);
  Tape<T>& t = tape;
  auto total = add(bce, mul(kl, t.constant(Tensor<T>::scalar(weight))));
  return {total, static_cast<double>(bce.value()[0]), static_cast<double>(kl.value()[0])};
}

template std::vector<Var<float>> segment_split(Var<float>, std::size_t);
template std::vector<Var<double>> segment_split(Var<double>, std::size_t);
template class Model<float>;
template class Model<double>;

}  // namespace strucdec
