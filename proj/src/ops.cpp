#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>

#include "strucdec/autodiff.hpp"
#include "strucdec/parallel.hpp"

namespace strucdec {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;

void require_same(const Shape& a, const Shape& b, const char* op) {
  if (a != b) throw ShapeError(std::string(op) + ": shape " + shape_str(a) + " vs " + shape_str(b));
}

template <typename T>
T softplus(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= 0) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

constexpr std::size_t kConvChunkFloats = std::size_t(1) << 18;

// Per-thread reusable buffers; contents are fully overwritten by each user.
template <typename T>
std::vector<T>& scratch(int slot, std::size_t size) {
  thread_local std::vector<T> buffers[2];
  auto& b = buffers[slot];
  if (b.size() < size) b.resize(size);
  return b;
}

// Unfolds a batch (N x C x H x W) into a (C*k*k) x (N*H*W) matrix with zero padding.
template <typename T>
void im2col(const T* x, std::size_t N, std::size_t C, std::size_t H, std::size_t W, std::size_t k, T* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t HW = H * W, NHW = N * HW;
  const auto Hs = static_cast<std::ptrdiff_t>(H), Ws = static_cast<std::ptrdiff_t>(W);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        T* row = cols + ((c * k + ky) * k + kx) * NHW;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(Ws, Ws - dx);
        for (std::size_t n = 0; n < N; ++n) {
          const T* plane = x + (n * C + c) * HW;
          T* dst = row + n * HW;
          for (std::ptrdiff_t y = 0; y < Hs; ++y) {
            T* out = dst + y * Ws;
            const std::ptrdiff_t sy = y + dy;
            if (sy < 0 || sy >= Hs || x1 <= x0) {
              std::fill(out, out + Ws, T(0));
              continue;
            }
            std::fill(out, out + x0, T(0));
            std::copy(plane + sy * Ws + x0 + dx, plane + sy * Ws + x1 + dx, out + x0);
            std::fill(out + x1, out + Ws, T(0));
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, std::size_t N, std::size_t C, std::size_t H, std::size_t W, std::size_t k, T* x) {
  const auto pad = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t HW = H * W, NHW = N * HW;
  const auto Hs = static_cast<std::ptrdiff_t>(H), Ws = static_cast<std::ptrdiff_t>(W);
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const T* row = cols + ((c * k + ky) * k + kx) * NHW;
        const std::ptrdiff_t dy = static_cast<std::ptrdiff_t>(ky) - pad;
        const std::ptrdiff_t dx = static_cast<std::ptrdiff_t>(kx) - pad;
        const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -dx);
        const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(Ws, Ws - dx);
        for (std::size_t n = 0; n < N; ++n) {
          T* plane = x + (n * C + c) * HW;
          const T* src = row + n * HW;
          for (std::ptrdiff_t y = 0; y < Hs; ++y) {
            const std::ptrdiff_t sy = y + dy;
            if (sy < 0 || sy >= Hs) continue;
            T* dst = plane + sy * Ws + dx;
            const T* in = src + y * Ws;
            for (std::ptrdiff_t xx = x0; xx < x1; ++xx) dst[xx] += in[xx];
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> conv2d(Var<T> x, Var<T> weight, Var<T> bias) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  require_rank(xs, 4, "conv2d input");
  require_rank(ws, 4, "conv2d weight");
  if (xs[1] != ws[1]) {
    throw ShapeError("conv2d: input channel dim (dim 1) is " + std::to_string(xs[1]) + " but weight expects " +
                     std::to_string(ws[1]));
  }
  if (ws[2] != ws[3] || ws[2] % 2 == 0) {
    throw ShapeError("conv2d: kernel must be square with odd size, got " + shape_str(ws));
  }
  if (bias.shape() != Shape{ws[0]}) {
    throw ShapeError("conv2d: bias dim 0 must equal output channels " + std::to_string(ws[0]) + ", got " +
                     shape_str(bias.shape()));
  }
  const std::size_t N = xs[0], I = xs[1], H = xs[2], W = xs[3], O = ws[0], k = ws[2];
  const std::size_t HW = H * W, IKK = I * k * k;

  // Images are processed in chunks whose unfolded matrix stays cache sized;
  // each chunk is one GEMM [O x IKK] * [IKK x n*HW].
  const std::size_t chunk = std::clamp<std::size_t>(kConvChunkFloats / (IKK * HW), 1, N);
  Tensor<T> out({N, O, H, W});
  {
    auto& cols = scratch<T>(0, IKK * chunk * HW);
    auto& prod = scratch<T>(1, O * chunk * HW);
    CMapMat<T> wm(weight.value().data().data(), O, IKK);
    const T* xd = x.value().data().data();
    const T* bd = bias.value().data().data();
    T* od = out.data().data();
    for (std::size_t n0 = 0; n0 < N; n0 += chunk) {
      const std::size_t nc = std::min(chunk, N - n0), cw = nc * HW;
      im2col(xd + n0 * I * HW, nc, I, H, W, k, cols.data());
      MapMat<T>(prod.data(), O, cw).noalias() = wm * CMapMat<T>(cols.data(), IKK, cw);
      for (std::size_t n = 0; n < nc; ++n) {
        for (std::size_t o = 0; o < O; ++o) {
          const T* src = prod.data() + o * cw + n * HW;
          T* dst = od + ((n0 + n) * O + o) * HW;
          for (std::size_t i = 0; i < HW; ++i) dst[i] = src[i] + bd[o];
        }
      }
    }
  }

  return x.tape->record(
      std::move(out), {x, weight, bias},
      [=](Tape<T>& tape, std::size_t self) {
        const T* g = tape.grad(self).data().data();
        const bool need_w = tape.requires_grad(weight.id), need_b = tape.requires_grad(bias.id);
        const bool need_x = tape.requires_grad(x.id);
        auto& cols = scratch<T>(0, IKK * chunk * HW);
        auto& gm = scratch<T>(1, O * chunk * HW);
        const T* xd = tape.value(x.id).data().data();
        CMapMat<T> wm(tape.value(weight.id).data().data(), O, IKK);
        T* dx = need_x ? tape.grad(x.id).data().data() : nullptr;
        RowMat<T> dw = RowMat<T>::Zero(O, IKK);
        for (std::size_t n0 = 0; n0 < N; n0 += chunk) {
          const std::size_t nc = std::min(chunk, N - n0), cw = nc * HW;
          // Output gradient of the chunk as [O x n*HW].
          for (std::size_t n = 0; n < nc; ++n) {
            for (std::size_t o = 0; o < O; ++o) std::copy_n(g + ((n0 + n) * O + o) * HW, HW, gm.data() + o * cw + n * HW);
          }
          CMapMat<T> gmat(gm.data(), O, cw);
          if (need_w) {
            im2col(xd + n0 * I * HW, nc, I, H, W, k, cols.data());
            dw.noalias() += gmat * CMapMat<T>(cols.data(), IKK, cw).transpose();
          }
          if (need_x) {
            MapMat<T>(cols.data(), IKK, cw).noalias() = wm.transpose() * gmat;
            col2im_add(cols.data(), nc, I, H, W, k, dx + n0 * I * HW);
          }
        }
        if (need_w) MapMat<T>(tape.grad(weight.id).data().data(), O, IKK) += dw;
        if (need_b) {
          auto& db = tape.grad(bias.id).vec();
          for (std::size_t o = 0; o < O; ++o) {
            T acc = 0;
            for (std::size_t n = 0; n < N; ++n) {
              const T* src = g + (n * O + o) * HW;
              for (std::size_t i = 0; i < HW; ++i) acc += src[i];
            }
            db[o] += acc;
          }
        }
      },
      "conv2d");
}

template <typename T>
Var<T> maxpool2x2(Var<T> x) {
  const auto& xs = x.shape();
  require_rank(xs, 4, "maxpool2x2 input");
  if (xs[2] % 2 != 0 || xs[3] % 2 != 0) {
    throw ShapeError("maxpool2x2: spatial dims must be even, got H=" + std::to_string(xs[2]) +
                     " W=" + std::to_string(xs[3]));
  }
  const std::size_t N = xs[0], C = xs[1], H = xs[2], W = xs[3], Ho = H / 2, Wo = W / 2;
  Tensor<T> out({N, C, Ho, Wo});
  std::vector<std::uint32_t> argmax(out.size());
  const auto& in = x.value();
  for (std::size_t p = 0; p < N * C; ++p) {
    const T* plane = in.data().data() + p * H * W;
    for (std::size_t i = 0; i < Ho; ++i) {
      for (std::size_t j = 0; j < Wo; ++j) {
        std::size_t best = (2 * i) * W + 2 * j;
        const std::size_t cand[3] = {(2 * i) * W + 2 * j + 1, (2 * i + 1) * W + 2 * j, (2 * i + 1) * W + 2 * j + 1};
        for (auto c : cand) {
          if (plane[c] > plane[best]) best = c;
        }
        const std::size_t o = p * Ho * Wo + i * Wo + j;
        out[o] = plane[best];
        argmax[o] = static_cast<std::uint32_t>(p * H * W + best);
      }
    }
  }
  return x.tape->record(
      std::move(out), {x},
      [x, argmax = std::move(argmax)](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self).vec();
        auto& dx = tape.grad(x.id).vec();
        for (std::size_t o = 0; o < g.size(); ++o) dx[argmax[o]] += g[o];
      },
      "maxpool2x2");
}

namespace {

// Source taps for one output coordinate along an axis of length n.
struct Tap {
  std::size_t i0, i1;
  double w1;
};

std::vector<Tap> bilinear_taps(std::size_t n) {
  std::vector<Tap> taps(2 * n);
  for (std::size_t o = 0; o < 2 * n; ++o) {
    double src = (static_cast<double>(o) + 0.5) / 2.0 - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(src);
    if (i0 > n - 1) i0 = n - 1;
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    taps[o] = {i0, i1, src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <typename T>
Var<T> upsample_bilinear2x(Var<T> x) {
  const auto& xs = x.shape();
  require_rank(xs, 4, "upsample_bilinear2x input");
  const std::size_t N = xs[0], C = xs[1], H = xs[2], W = xs[3], Ho = 2 * H, Wo = 2 * W;
  const auto ty = bilinear_taps(H);
  const auto tx = bilinear_taps(W);
  Tensor<T> out({N, C, Ho, Wo});
  const auto& in = x.value();
  for (std::size_t p = 0; p < N * C; ++p) {
    const T* plane = in.data().data() + p * H * W;
    T* dst = out.data().data() + p * Ho * Wo;
    for (std::size_t i = 0; i < Ho; ++i) {
      const T wy1 = static_cast<T>(ty[i].w1), wy0 = T(1) - wy1;
      const T* r0 = plane + ty[i].i0 * W;
      const T* r1 = plane + ty[i].i1 * W;
      for (std::size_t j = 0; j < Wo; ++j) {
        const T wx1 = static_cast<T>(tx[j].w1), wx0 = T(1) - wx1;
        dst[i * Wo + j] = wy0 * (wx0 * r0[tx[j].i0] + wx1 * r0[tx[j].i1]) + wy1 * (wx0 * r1[tx[j].i0] + wx1 * r1[tx[j].i1]);
      }
    }
  }
  return x.tape->record(
      std::move(out), {x},
      [=](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self).vec();
        auto& dx = tape.grad(x.id).vec();
        for (std::size_t p = 0; p < N * C; ++p) {
          T* plane = dx.data() + p * H * W;
          const T* src = g.data() + p * Ho * Wo;
          for (std::size_t i = 0; i < Ho; ++i) {
            const T wy1 = static_cast<T>(ty[i].w1), wy0 = T(1) - wy1;
            T* r0 = plane + ty[i].i0 * W;
            T* r1 = plane + ty[i].i1 * W;
            for (std::size_t j = 0; j < Wo; ++j) {
              const T wx1 = static_cast<T>(tx[j].w1), wx0 = T(1) - wx1;
              const T v = src[i * Wo + j];
              r0[tx[j].i0] += wy0 * wx0 * v;
              r0[tx[j].i1] += wy0 * wx1 * v;
              r1[tx[j].i0] += wy1 * wx0 * v;
              r1[tx[j].i1] += wy1 * wx1 * v;
            }
          }
        }
      },
      "upsample_bilinear2x");
}

template <typename T>
Var<T> group_norm(Var<T> x, std::size_t groups, Var<T> gamma, Var<T> beta, double eps) {
  const auto& xs = x.shape();
  require_rank(xs, 4, "group_norm input");
  const std::size_t N = xs[0], C = xs[1], HW = xs[2] * xs[3];
  if (groups == 0 || C % groups != 0) {
    throw ShapeError("group_norm: channel dim C=" + std::to_string(C) + " not divisible by groups=" +
                     std::to_string(groups));
  }
  if (gamma.shape() != Shape{C} || beta.shape() != Shape{C}) {
    throw ShapeError("group_norm: gamma/beta must have shape [" + std::to_string(C) + "]");
  }
  if (!(eps > 0.0)) throw Error("group_norm: eps must be positive");
  const std::size_t cpg = C / groups, m = cpg * HW;
  Tensor<T> xhat(xs);
  std::vector<T> inv_std(N * groups);
  Tensor<T> out(xs);
  const T* xd = x.value().data().data();
  const T* gd = gamma.value().data().data();
  const T* bd = beta.value().data().data();
  T* hd = xhat.data().data();
  T* od = out.data().data();
  parallel_for(N, [&](std::size_t n) {
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t base = (n * C + g * cpg) * HW;
      double mean = 0.0;
      for (std::size_t i = 0; i < m; ++i) mean += xd[base + i];
      mean /= static_cast<double>(m);
      double var = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        const double d = xd[base + i] - mean;
        var += d * d;
      }
      var /= static_cast<double>(m);
      const double inv = 1.0 / std::sqrt(var + eps);
      inv_std[n * groups + g] = static_cast<T>(inv);
      for (std::size_t c = 0; c < cpg; ++c) {
        const std::size_t ch = g * cpg + c;
        const T* src = xd + base + c * HW;
        T* h = hd + base + c * HW;
        T* o = od + base + c * HW;
        const T ti = static_cast<T>(inv), tm = static_cast<T>(mean), ga = gd[ch], be = bd[ch];
        for (std::size_t i = 0; i < HW; ++i) {
          h[i] = (src[i] - tm) * ti;
          o[i] = ga * h[i] + be;
        }
      }
    }
  });
  return x.tape->record(
      std::move(out), {x, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape<T>& tape, std::size_t self) {
        const T* gout = tape.grad(self).data().data();
        const T* hd = xhat.data().data();
        const T* gam = tape.value(gamma.id).data().data();
        const bool need_x = tape.requires_grad(x.id);
        const bool need_affine = tape.requires_grad(gamma.id) || tape.requires_grad(beta.id);
        std::vector<double> dgam(need_affine ? N * C : 0), dbet(need_affine ? N * C : 0);
        T* dx = need_x ? tape.grad(x.id).data().data() : nullptr;
        parallel_for(N, [&](std::size_t n) {
          for (std::size_t g = 0; g < groups; ++g) {
            const std::size_t base = (n * C + g * cpg) * HW;
            double sum_dh = 0.0, sum_dh_h = 0.0;
            for (std::size_t c = 0; c < cpg; ++c) {
              const std::size_t ch = g * cpg + c;
              const T* go = gout + base + c * HW;
              const T* h = hd + base + c * HW;
              double sg = 0.0, sgh = 0.0;
              for (std::size_t i = 0; i < HW; ++i) {
                sg += go[i];
                sgh += static_cast<double>(go[i]) * h[i];
              }
              if (need_affine) {
                dgam[n * C + ch] = sgh;
                dbet[n * C + ch] = sg;
              }
              sum_dh += sg * gam[ch];
              sum_dh_h += sgh * gam[ch];
            }
            if (!need_x) continue;
            // dx = inv * (gamma * g - mean(dh) - xhat * mean(dh * xhat))
            const double inv = inv_std[n * groups + g];
            const double md = static_cast<double>(m);
            const T k2 = static_cast<T>(-inv * sum_dh_h / md), k3 = static_cast<T>(-inv * sum_dh / md);
            for (std::size_t c = 0; c < cpg; ++c) {
              const std::size_t ch = g * cpg + c;
              const T k1 = static_cast<T>(inv * gam[ch]);
              const T* go = gout + base + c * HW;
              const T* h = hd + base + c * HW;
              T* d = dx + base + c * HW;
              for (std::size_t i = 0; i < HW; ++i) d[i] += k1 * go[i] + k2 * h[i] + k3;
            }
          }
        });
        if (need_affine) {
          auto& dg = tape.grad(gamma.id).vec();
          auto& db = tape.grad(beta.id).vec();
          for (std::size_t n = 0; n < N; ++n) {
            for (std::size_t c = 0; c < C; ++c) {
              dg[c] += static_cast<T>(dgam[n * C + c]);
              db[c] += static_cast<T>(dbet[n * C + c]);
            }
          }
        }
      },
      "group_norm");
}

// tanh(softplus(x)) as a rational function of n = e^x: n(n+2) / (n(n+2) + 2).
// x is clamped at 20 before exponentiating, where the ratio is 1 in double precision.
template <typename T>
Var<T> mish(Var<T> x) {
  using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
  using CMap = Eigen::Map<const Arr>;
  const auto& in = x.value();
  Tensor<T> out(in.shape());
  {
    CMap xv(in.data().data(), static_cast<Eigen::Index>(in.size()));
    const Arr n = xv.min(T(20)).exp();
    const Arr q = n * (n + T(2));
    Eigen::Map<Arr>(out.data().data(), static_cast<Eigen::Index>(out.size())) = xv * q / (q + T(2));
  }
  return x.tape->record(
      std::move(out), {x},
      [x](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self);
        const auto& xt = tape.value(x.id);
        auto& dx = tape.grad(x.id);
        const auto len = static_cast<Eigen::Index>(g.size());
        CMap xv(xt.data().data(), len);
        const Arr n = xv.min(T(20)).exp();
        const Arr q = n * (n + T(2));
        const Arr t = q / (q + T(2));
        const Arr sig = n / (T(1) + n);
        Eigen::Map<Arr>(dx.data().data(), len) += CMap(g.data().data(), len) * (t + xv * (T(1) - t * t) * sig);
      },
      "mish");
}

template <typename T>
Var<T> linear(Var<T> x, Var<T> weight, Var<T> bias) {
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  require_rank(xs, 2, "linear input");
  require_rank(ws, 2, "linear weight");
  if (xs[1] != ws[1]) {
    throw ShapeError("linear: input dim 1 is " + std::to_string(xs[1]) + " but weight expects " +
                     std::to_string(ws[1]));
  }
  if (bias.shape() != Shape{ws[0]}) {
    throw ShapeError("linear: bias dim 0 must equal " + std::to_string(ws[0]) + ", got " + shape_str(bias.shape()));
  }
  const std::size_t N = xs[0], Din = xs[1], Dout = ws[0];
  Tensor<T> out({N, Dout});
  MapMat<T> om(out.data().data(), N, Dout);
  CMapMat<T> xm(x.value().data().data(), N, Din);
  CMapMat<T> wm(weight.value().data().data(), Dout, Din);
  om.noalias() = xm * wm.transpose();
  const T* bd = bias.value().data().data();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t o = 0; o < Dout; ++o) om(n, o) += bd[o];
  }
  return x.tape->record(
      std::move(out), {x, weight, bias},
      [=](Tape<T>& tape, std::size_t self) {
        CMapMat<T> gm(tape.grad(self).data().data(), N, Dout);
        if (tape.requires_grad(x.id)) {
          MapMat<T> dx(tape.grad(x.id).data().data(), N, Din);
          dx.noalias() += gm * CMapMat<T>(tape.value(weight.id).data().data(), Dout, Din);
        }
        if (tape.requires_grad(weight.id)) {
          MapMat<T> dw(tape.grad(weight.id).data().data(), Dout, Din);
          dw.noalias() += gm.transpose() * CMapMat<T>(tape.value(x.id).data().data(), N, Din);
        }
        if (tape.requires_grad(bias.id)) {
          auto& db = tape.grad(bias.id).vec();
          for (std::size_t o = 0; o < Dout; ++o) db[o] += gm.col(o).sum();
        }
      },
      "linear");
}

template <typename T>
Var<T> bce_with_logits(Var<T> logits, const Tensor<T>& targets) {
  require_same(logits.shape(), targets.shape(), "bce_with_logits");
  for (auto t : targets.vec()) {
    if (!(t >= T(0) && t <= T(1))) throw Error("bce_with_logits: target outside [0,1]");
  }
  const auto& l = logits.value().vec();
  double total = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    const double li = l[i];
    total += std::max(li, 0.0) - li * targets[i] + std::log1p(std::exp(-std::abs(li)));
  }
  const double n = static_cast<double>(l.size());
  return logits.tape->record(
      Tensor<T>::scalar(static_cast<T>(total / n)), {logits},
      [logits, targets, n](Tape<T>& tape, std::size_t self) {
        const T g = tape.grad(self)[0];
        const auto& lv = tape.value(logits.id).vec();
        auto& dl = tape.grad(logits.id).vec();
        const T scale = g / static_cast<T>(n);
        for (std::size_t i = 0; i < lv.size(); ++i) dl[i] += scale * (stable_sigmoid(lv[i]) - targets[i]);
      },
      "bce_with_logits");
}

template <typename T>
Var<T> mse(Var<T> a, Var<T> b) {
  require_same(a.shape(), b.shape(), "mse");
  const auto& av = a.value().vec();
  const auto& bv = b.value().vec();
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - bv[i];
    total += d * d;
  }
  const double n = static_cast<double>(av.size());
  return a.tape->record(
      Tensor<T>::scalar(static_cast<T>(total / n)), {a, b},
      [a, b, n](Tape<T>& tape, std::size_t self) {
        const T g = tape.grad(self)[0];
        const auto& av = tape.value(a.id).vec();
        const auto& bv = tape.value(b.id).vec();
        const T scale = T(2) * g / static_cast<T>(n);
        if (tape.requires_grad(a.id)) {
          auto& da = tape.grad(a.id).vec();
          for (std::size_t i = 0; i < av.size(); ++i) da[i] += scale * (av[i] - bv[i]);
        }
        if (tape.requires_grad(b.id)) {
          auto& db = tape.grad(b.id).vec();
          for (std::size_t i = 0; i < av.size(); ++i) db[i] -= scale * (av[i] - bv[i]);
        }
      },
      "mse");
}

template <typename T>
Var<T> kl_diag_gaussian(Var<T> mu, Var<T> logvar) {
  require_same(mu.shape(), logvar.shape(), "kl_diag_gaussian");
  require_rank(mu.shape(), 2, "kl_diag_gaussian mu");
  const auto& m = mu.value().vec();
  const auto& lv = logvar.value().vec();
  double total = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) {
    total += -0.5 * (1.0 + lv[i] - static_cast<double>(m[i]) * m[i] - std::exp(static_cast<double>(lv[i])));
  }
  const double batch = static_cast<double>(mu.shape()[0]);
  return mu.tape->record(
      Tensor<T>::scalar(static_cast<T>(total / batch)), {mu, logvar},
      [mu, logvar, batch](Tape<T>& tape, std::size_t self) {
        const T g = tape.grad(self)[0] / static_cast<T>(batch);
        const auto& m = tape.value(mu.id).vec();
        const auto& lv = tape.value(logvar.id).vec();
        if (tape.requires_grad(mu.id)) {
          auto& dm = tape.grad(mu.id).vec();
          for (std::size_t i = 0; i < m.size(); ++i) dm[i] += g * m[i];
        }
        if (tape.requires_grad(logvar.id)) {
          auto& dl = tape.grad(logvar.id).vec();
          for (std::size_t i = 0; i < lv.size(); ++i) dl[i] += g * T(-0.5) * (T(1) - std::exp(lv[i]));
        }
      },
      "kl_diag_gaussian");
}

template <typename T>
Var<T> reparameterize(Var<T> mu, Var<T> logvar, Rng& rng) {
  require_same(mu.shape(), logvar.shape(), "reparameterize");
  const auto& m = mu.value().vec();
  const auto& lv = logvar.value().vec();
  std::vector<T> noise(m.size());
  Tensor<T> out(mu.shape());
  for (std::size_t i = 0; i < m.size(); ++i) {
    noise[i] = static_cast<T>(rng.normal());
    out[i] = m[i] + std::exp(lv[i] / T(2)) * noise[i];
  }
  return mu.tape->record(
      std::move(out), {mu, logvar},
      [mu, logvar, noise = std::move(noise)](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self).vec();
        if (tape.requires_grad(mu.id)) {
          auto& dm = tape.grad(mu.id).vec();
          for (std::size_t i = 0; i < g.size(); ++i) dm[i] += g[i];
        }
        if (tape.requires_grad(logvar.id)) {
          const auto& lv = tape.value(logvar.id).vec();
          auto& dl = tape.grad(logvar.id).vec();
          for (std::size_t i = 0; i < g.size(); ++i) dl[i] += g[i] * noise[i] * std::exp(lv[i] / T(2)) / T(2);
        }
      },
      "reparameterize");
}

template <typename T>
Var<T> channel_affine(Var<T> features, Var<T> scale, Var<T> shift) {
  const auto& fs = features.shape();
  require_rank(fs, 4, "channel_affine features");
  const Shape nc{fs[0], fs[1]};
  if (scale.shape() != nc) throw ShapeError("channel_affine: scale must be " + shape_str(nc) + ", got " + shape_str(scale.shape()));
  if (shift.shape() != nc) throw ShapeError("channel_affine: shift must be " + shape_str(nc) + ", got " + shape_str(shift.shape()));
  const std::size_t NC = fs[0] * fs[1], HW = fs[2] * fs[3];
  const auto& f = features.value().vec();
  const auto& s = scale.value().vec();
  const auto& b = shift.value().vec();
  Tensor<T> out(fs);
  for (std::size_t p = 0; p < NC; ++p) {
    for (std::size_t i = 0; i < HW; ++i) out[p * HW + i] = s[p] * f[p * HW + i] + b[p];
  }
  return features.tape->record(
      std::move(out), {features, scale, shift},
      [=](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self).vec();
        const auto& f = tape.value(features.id).vec();
        const auto& s = tape.value(scale.id).vec();
        const bool nf = tape.requires_grad(features.id);
        const bool ns = tape.requires_grad(scale.id);
        const bool nb = tape.requires_grad(shift.id);
        T* df = nf ? tape.grad(features.id).data().data() : nullptr;
        T* ds = ns ? tape.grad(scale.id).data().data() : nullptr;
        T* db = nb ? tape.grad(shift.id).data().data() : nullptr;
        for (std::size_t p = 0; p < NC; ++p) {
          T sg = 0, sgf = 0;
          for (std::size_t i = 0; i < HW; ++i) {
            const T gi = g[p * HW + i];
            sg += gi;
            sgf += gi * f[p * HW + i];
            if (nf) df[p * HW + i] += gi * s[p];
          }
          if (ns) ds[p] += sgf;
          if (nb) db[p] += sg;
        }
      },
      "channel_affine");
}

template <typename T>
Var<T> sum(Var<T> x) {
  double total = 0.0;
  for (auto v : x.value().vec()) total += v;
  return x.tape->record(
      Tensor<T>::scalar(static_cast<T>(total)), {x},
      [x](Tape<T>& tape, std::size_t self) {
        const T g = tape.grad(self)[0];
        for (auto& d : tape.grad(x.id).vec()) d += g;
      },
      "sum");
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same(a.shape(), b.shape(), "add");
  Tensor<T> out = a.value();
  const auto& bv = b.value().vec();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return a.tape->record(
      std::move(out), {a, b},
      [a, b](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self).vec();
        for (auto id : {a.id, b.id}) {
          if (!tape.requires_grad(id)) continue;
          auto& d = tape.grad(id).vec();
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        }
      },
      "add");
}

template <typename T>
Var<T> add_scalar(Var<T> x, T c) {
  Tensor<T> out = x.value();
  for (auto& v : out.vec()) v += c;
  return x.tape->record(
      std::move(out), {x},
      [x](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self).vec();
        auto& d = tape.grad(x.id).vec();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      },
      "add_scalar");
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same(a.shape(), b.shape(), "mul");
  Tensor<T> out = a.value();
  const auto& bv = b.value().vec();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->record(
      std::move(out), {a, b},
      [a, b](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self).vec();
        const auto& av = tape.value(a.id).vec();
        const auto& bv = tape.value(b.id).vec();
        if (tape.requires_grad(a.id)) {
          auto& d = tape.grad(a.id).vec();
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
        }
        if (tape.requires_grad(b.id)) {
          auto& d = tape.grad(b.id).vec();
          for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
        }
      },
      "mul");
}

template <typename T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> out = x.value().reshaped(std::move(shape));
  return x.tape->record(
      std::move(out), {x},
      [x](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self).vec();
        auto& d = tape.grad(x.id).vec();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
      },
      "reshape");
}

template <typename T>
Var<T> slice_cols(Var<T> x, std::size_t start, std::size_t width) {
  const auto& xs = x.shape();
  require_rank(xs, 2, "slice_cols input");
  if (width == 0 || start + width > xs[1]) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + "," + std::to_string(start + width) +
                     ") exceed dim 1 of size " + std::to_string(xs[1]));
  }
  const std::size_t N = xs[0], D = xs[1];
  Tensor<T> out({N, width});
  const auto& v = x.value().vec();
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t j = 0; j < width; ++j) out[n * width + j] = v[n * D + start + j];
  }
  return x.tape->record(
      std::move(out), {x},
      [=](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self).vec();
        auto& d = tape.grad(x.id).vec();
        for (std::size_t n = 0; n < N; ++n) {
          for (std::size_t j = 0; j < width; ++j) d[n * D + start + j] += g[n * width + j];
        }
      },
      "slice_cols");
}

template <typename T>
Var<T> concat_cols(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t N = parts[0].shape().at(0);
  std::size_t D = 0;
  for (const auto& p : parts) {
    require_rank(p.shape(), 2, "concat_cols input");
    if (p.shape()[0] != N) throw ShapeError("concat_cols: dim 0 mismatch " + shape_str(p.shape()));
    D += p.shape()[1];
  }
  Tensor<T> out({N, D});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.shape()[1];
    const auto& v = p.value().vec();
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t j = 0; j < w; ++j) out[n * D + off + j] = v[n * w + j];
    }
    off += w;
  }
  return parts[0].tape->record(
      std::move(out), parts,
      [parts, N, D](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self).vec();
        std::size_t off = 0;
        for (const auto& p : parts) {
          const std::size_t w = tape.value(p.id).shape()[1];
          if (tape.requires_grad(p.id)) {
            auto& d = tape.grad(p.id).vec();
            for (std::size_t n = 0; n < N; ++n) {
              for (std::size_t j = 0; j < w; ++j) d[n * w + j] += g[n * D + off + j];
            }
          }
          off += w;
        }
      },
      "concat_cols");
}

template <typename T>
Var<T> broadcast_batch(Var<T> x, std::size_t n) {
  const auto& xs = x.shape();
  require_rank(xs, 3, "broadcast_batch input");
  const std::size_t per = x.value().size();
  Tensor<T> out({n, xs[0], xs[1], xs[2]});
  const auto& v = x.value().vec();
  for (std::size_t i = 0; i < n; ++i) std::copy(v.begin(), v.end(), out.vec().begin() + i * per);
  return x.tape->record(
      std::move(out), {x},
      [x, n, per](Tape<T>& tape, std::size_t self) {
        const auto& g = tape.grad(self).vec();
        auto& d = tape.grad(x.id).vec();
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t k = 0; k < per; ++k) d[k] += g[i * per + k];
        }
      },
      "broadcast_batch");
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& logits) {
  Tensor<T> out(logits.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = stable_sigmoid(logits[i]);
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  require_rank(x.shape(), 4, "global_avg_pool input");
  const std::size_t NC = x.dim(0) * x.dim(1), HW = x.dim(2) * x.dim(3);
  Tensor<T> out({x.dim(0), x.dim(1)});
  for (std::size_t p = 0; p < NC; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < HW; ++i) s += x[p * HW + i];
    out[p] = static_cast<T>(s / static_cast<double>(HW));
  }
  return out;
}

#define STRUCDEC_INSTANTIATE_OPS(T)                                                  \
  template Var<T> conv2d(Var<T>, Var<T>, Var<T>);                                    \
  template Var<T> maxpool2x2(Var<T>);                                                \
  template Var<T> upsample_bilinear2x(Var<T>);                                       \
  template Var<T> group_norm(Var<T>, std::size_t, Var<T>, Var<T>, double);           \
  template Var<T> mish(Var<T>);                                                      \
  template Var<T> linear(Var<T>, Var<T>, Var<T>);                                    \
  template Var<T> bce_with_logits(Var<T>, const Tensor<T>&);                         \
  template Var<T> mse(Var<T>, Var<T>);                                               \
  template Var<T> kl_diag_gaussian(Var<T>, Var<T>);                                  \
  template Var<T> reparameterize(Var<T>, Var<T>, Rng&);                              \
  template Var<T> channel_affine(Var<T>, Var<T>, Var<T>);                            \
  template Var<T> sum(Var<T>);                                                       \
  template Var<T> add(Var<T>, Var<T>);                                               \
  template Var<T> add_scalar(Var<T>, T);                                             \
  template Var<T> mul(Var<T>, Var<T>);                                               \
  template Var<T> reshape(Var<T>, Shape);                                            \
  template Var<T> slice_cols(Var<T>, std::size_t, std::size_t);                      \
  template Var<T> concat_cols(const std::vector<Var<T>>&);                           \
  template Var<T> broadcast_batch(Var<T>, std::size_t);                              \
  template Tensor<T> sigmoid(const Tensor<T>&);                                      \
  template Tensor<T> global_avg_pool(const Tensor<T>&);

STRUCDEC_INSTANTIATE_OPS(float)
STRUCDEC_INSTANTIATE_OPS(double)

}  // namespace strucdec
