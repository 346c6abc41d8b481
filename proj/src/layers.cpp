#include "scasnet/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace scasnet {

namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

void require_rank4(const Tensor& x, const char* what) {
  if (x.rank() != 4) throw ShapeError(std::string(what) + ": expected NCHW tensor, got " + shape_str(x.shape()));
}

bool is_pointwise(std::size_t kh, std::size_t kw, const ConvGeometry& g) {
  return kh == 1 && kw == 1 && g.stride == 1 && g.padding == 0;
}

// Output columns [lo, hi) whose tap ox * stride + offset lands inside [0, extent).
std::pair<std::size_t, std::size_t> valid_span(std::ptrdiff_t offset, std::size_t stride, std::size_t extent,
                                               std::size_t out) {
  const auto s = static_cast<std::ptrdiff_t>(stride);
  const auto e = static_cast<std::ptrdiff_t>(extent);
  const std::ptrdiff_t lo = offset < 0 ? (-offset + s - 1) / s : 0;
  const std::ptrdiff_t hi = e - offset <= 0 ? 0 : (e - offset + s - 1) / s;
  const auto clamp = [&](std::ptrdiff_t v) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(v, 0, static_cast<std::ptrdiff_t>(out)));
  };
  return {clamp(lo), std::max(clamp(lo), clamp(hi))};
}

// Unfold one image [C,H,W] into columns [C*kh*kw, oh*ow] at dilated tap offsets.
void im2col(const Real* img, std::size_t channels, std::size_t height, std::size_t width, std::size_t kh,
            std::size_t kw, const ConvGeometry& g, std::size_t oh, std::size_t ow, Real* cols) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < channels; ++c) {
    const Real* plane = img + c * height * width;
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        Real* row = cols + ((c * kh + ki) * kw + kj) * oh * ow;
        const auto dy = static_cast<std::ptrdiff_t>(ki * g.dilation) - pad;
        const auto dx = static_cast<std::ptrdiff_t>(kj * g.dilation) - pad;
        const auto [x0, x1] = valid_span(dx, g.stride, width, ow);
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride) + dy;
          Real* dst = row + oy * ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) {
            std::fill_n(dst, ow, Real{0});
            continue;
          }
          const Real* src = plane + iy * static_cast<std::ptrdiff_t>(width);
          std::fill(dst, dst + x0, Real{0});
          if (x0 < x1) {
            if (g.stride == 1) {
              std::copy(src + (static_cast<std::ptrdiff_t>(x0) + dx), src + (static_cast<std::ptrdiff_t>(x1) + dx),
                        dst + x0);
            } else {
              for (std::size_t ox = x0; ox < x1; ++ox) dst[ox] = src[static_cast<std::ptrdiff_t>(ox * g.stride) + dx];
            }
          }
          std::fill(dst + x1, dst + ow, Real{0});
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-add columns back into the image gradient.
void col2im(const Real* cols, std::size_t channels, std::size_t height, std::size_t width, std::size_t kh,
            std::size_t kw, const ConvGeometry& g, std::size_t oh, std::size_t ow, Real* img) {
  const auto pad = static_cast<std::ptrdiff_t>(g.padding);
  for (std::size_t c = 0; c < channels; ++c) {
    Real* plane = img + c * height * width;
    for (std::size_t ki = 0; ki < kh; ++ki) {
      for (std::size_t kj = 0; kj < kw; ++kj) {
        const Real* row = cols + ((c * kh + ki) * kw + kj) * oh * ow;
        const auto dy = static_cast<std::ptrdiff_t>(ki * g.dilation) - pad;
        const auto dx = static_cast<std::ptrdiff_t>(kj * g.dilation) - pad;
        const auto [x0, x1] = valid_span(dx, g.stride, width, ow);
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride) + dy;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          Real* dst = plane + iy * static_cast<std::ptrdiff_t>(width);
          const Real* src = row + oy * ow;
          for (std::size_t ox = x0; ox < x1; ++ox) dst[static_cast<std::ptrdiff_t>(ox * g.stride) + dx] += src[ox];
        }
      }
    }
  }
}

// Per-thread im2col scratch, grown on demand and reused across calls.
Real* scratch(std::size_t slot, std::size_t n) {
  thread_local RealBuffer buffers[2];
  if (buffers[slot].size() < n) buffers[slot].resize(n);
  return buffers[slot].data();
}

struct AxisTaps {
  std::vector<std::size_t> lo, hi;
  std::vector<Real> frac;
};

AxisTaps align_corner_taps(std::size_t in, std::size_t out) {
  AxisTaps t;
  t.lo.resize(out);
  t.hi.resize(out);
  t.frac.resize(out);
  for (std::size_t o = 0; o < out; ++o) {
    Real src = 0;
    if (out > 1) src = static_cast<Real>(o) * static_cast<Real>(in - 1) / static_cast<Real>(out - 1);
    auto lo = static_cast<std::size_t>(std::floor(src));
    lo = std::min(lo, in - 1);
    t.lo[o] = lo;
    t.hi[o] = std::min(lo + 1, in - 1);
    t.frac[o] = src - static_cast<Real>(lo);
  }
  return t;
}

// Uniform double in [0,1) from the top 53 bits; libstdc++-independent.
Real unit_uniform(std::mt19937_64& rng) { return static_cast<Real>(rng() >> 11) * 0x1.0p-53; }

}  // namespace

std::size_t conv_out_extent(std::size_t in, std::size_t kernel, const ConvGeometry& g) {
  if (g.stride == 0 || g.dilation == 0) throw ShapeError("conv2d: stride and dilation must be positive");
  const std::size_t extent = (kernel - 1) * g.dilation + 1;
  const std::size_t padded = in + 2 * g.padding;
  if (extent > padded) {
    throw ShapeError("conv2d: effective kernel extent " + std::to_string(extent) + " exceeds padded input " +
                     std::to_string(padded));
  }
  return (padded - extent) / g.stride + 1;
}

Tensor conv2d(const Tensor& x, const Tensor& weights, const Tensor& bias, const ConvGeometry& g) {
  require_rank4(x, "conv2d");
  if (weights.rank() != 4) throw ShapeError("conv2d: weights must be [out,in,kh,kw]");
  const std::size_t out_ch = weights.dim(0), in_ch = weights.dim(1), kh = weights.dim(2), kw = weights.dim(3);
  if (x.c() != in_ch) {
    throw ShapeError("conv2d: input has " + std::to_string(x.c()) + " channels, kernel expects " +
                     std::to_string(in_ch));
  }
  if (bias.size() != out_ch) throw ShapeError("conv2d: bias length does not match output channels");
  const std::size_t oh = conv_out_extent(x.h(), kh, g);
  const std::size_t ow = conv_out_extent(x.w(), kw, g);
  const std::size_t patch = in_ch * kh * kw, npix = oh * ow;

  Tensor out = Tensor::uninitialized({x.n(), out_ch, oh, ow});
  ConstMatMap wmat(weights.data(), static_cast<Eigen::Index>(out_ch), static_cast<Eigen::Index>(patch));
  const bool pointwise = is_pointwise(kh, kw, g);
  Real* cols = pointwise ? nullptr : scratch(0, patch * npix);

  for (std::size_t n = 0; n < x.n(); ++n) {
    const Real* img = x.data() + n * in_ch * x.plane();
    const Real* colp = img;
    if (!pointwise) {
      im2col(img, in_ch, x.h(), x.w(), kh, kw, g, oh, ow, cols);
      colp = cols;
    }
    ConstMatMap cmat(colp, static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(npix));
    MatMap omat(out.data() + n * out_ch * npix, static_cast<Eigen::Index>(out_ch), static_cast<Eigen::Index>(npix));
    omat.noalias() = wmat * cmat;
    for (std::size_t o = 0; o < out_ch; ++o) omat.row(static_cast<Eigen::Index>(o)).array() += bias[o];
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& x, const Tensor& weights, const ConvGeometry& g, const Tensor& grad_out) {
  require_rank4(x, "conv2d_backward");
  const std::size_t out_ch = weights.dim(0), in_ch = weights.dim(1), kh = weights.dim(2), kw = weights.dim(3);
  const std::size_t oh = conv_out_extent(x.h(), kh, g);
  const std::size_t ow = conv_out_extent(x.w(), kw, g);
  const Shape expected{x.n(), out_ch, oh, ow};
  if (grad_out.shape() != expected) {
    throw ShapeError("conv2d_backward: upstream gradient " + shape_str(grad_out.shape()) + " vs output " +
                     shape_str(expected));
  }
  const std::size_t patch = in_ch * kh * kw, npix = oh * ow;

  ConvGrads grads{Tensor(x.shape()), Tensor(weights.shape()), Tensor({out_ch})};
  ConstMatMap wmat(weights.data(), static_cast<Eigen::Index>(out_ch), static_cast<Eigen::Index>(patch));
  MatMap gw(grads.weights.data(), static_cast<Eigen::Index>(out_ch), static_cast<Eigen::Index>(patch));
  const bool pointwise = is_pointwise(kh, kw, g);
  Real* cols = pointwise ? nullptr : scratch(0, patch * npix);
  Real* gcols = pointwise ? nullptr : scratch(1, patch * npix);

  for (std::size_t n = 0; n < x.n(); ++n) {
    const Real* img = x.data() + n * in_ch * x.plane();
    ConstMatMap gy(grad_out.data() + n * out_ch * npix, static_cast<Eigen::Index>(out_ch),
                   static_cast<Eigen::Index>(npix));
    for (std::size_t o = 0; o < out_ch; ++o) {
      const Real* row = grad_out.data() + (n * out_ch + o) * npix;
      Real s = 0;
      for (std::size_t i = 0; i < npix; ++i) s += row[i];
      grads.bias[o] += s;
    }

    Real* gimg = grads.input.data() + n * in_ch * x.plane();
    if (pointwise) {
      ConstMatMap cmat(img, static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(npix));
      gw.noalias() += gy * cmat.transpose();
      MatMap gx(gimg, static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(npix));
      gx.noalias() = wmat.transpose() * gy;
    } else {
      im2col(img, in_ch, x.h(), x.w(), kh, kw, g, oh, ow, cols);
      ConstMatMap cmat(cols, static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(npix));
      gw.noalias() += gy * cmat.transpose();
      MatMap gc(gcols, static_cast<Eigen::Index>(patch), static_cast<Eigen::Index>(npix));
      gc.noalias() = wmat.transpose() * gy;
      col2im(gcols, in_ch, x.h(), x.w(), kh, kw, g, oh, ow, gimg);
    }
  }
  return grads;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.values()) v = v > 0 ? v : Real{0};
  return out;
}

Tensor relu_backward(const Tensor& x, const Tensor& grad_out) {
  require_same_shape(x, grad_out, "relu_backward");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(x[i] > 0)) g[i] = 0;
  }
  return g;
}

PoolResult maxpool2x2(const Tensor& x) {
  require_rank4(x, "maxpool2x2");
  const std::size_t H = x.h(), W = x.w();
  const std::size_t oh = (H + 1) / 2, ow = (W + 1) / 2;
  PoolResult r{Tensor({x.n(), x.c(), oh, ow}), {}};
  r.argmax.resize(r.out.size());
  std::size_t k = 0;
  for (std::size_t nc = 0; nc < x.n() * x.c(); ++nc) {
    const std::size_t base = nc * H * W;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++k) {
        std::size_t best = base + (2 * oy) * W + 2 * ox;
        Real best_v = x[best];
        for (std::size_t dy = 0; dy < 2; ++dy) {
          const std::size_t iy = std::min(2 * oy + dy, H - 1);
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t ix = std::min(2 * ox + dx, W - 1);
            const std::size_t idx = base + iy * W + ix;
            if (x[idx] > best_v) {
              best_v = x[idx];
              best = idx;
            }
          }
        }
        r.out[k] = best_v;
        r.argmax[k] = best;
      }
    }
  }
  return r;
}

Tensor maxpool2x2_backward(const Shape& input_shape, std::span<const std::size_t> argmax, const Tensor& grad_out) {
  if (argmax.size() != grad_out.size()) throw ShapeError("maxpool2x2_backward: index/gradient size mismatch");
  Tensor g(input_shape);
  for (std::size_t k = 0; k < argmax.size(); ++k) g[argmax[k]] += grad_out[k];
  return g;
}

Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  require_rank4(x, "bilinear_resize");
  if (out_h == 0 || out_w == 0) throw ShapeError("bilinear_resize: output size must be positive");
  if (out_h == x.h() && out_w == x.w()) return x;
  const AxisTaps ty = align_corner_taps(x.h(), out_h);
  const AxisTaps tx = align_corner_taps(x.w(), out_w);
  Tensor out({x.n(), x.c(), out_h, out_w});
  for (std::size_t nc = 0; nc < x.n() * x.c(); ++nc) {
    const Real* src = x.data() + nc * x.plane();
    Real* dst = out.data() + nc * out_h * out_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const Real fy = ty.frac[oy];
      const Real* r0 = src + ty.lo[oy] * x.w();
      const Real* r1 = src + ty.hi[oy] * x.w();
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const Real fx = tx.frac[ox];
        const Real top = (1 - fx) * r0[tx.lo[ox]] + fx * r0[tx.hi[ox]];
        const Real bot = (1 - fx) * r1[tx.lo[ox]] + fx * r1[tx.hi[ox]];
        dst[oy * out_w + ox] = (1 - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

Tensor bilinear_resize_backward(const Tensor& grad_out, std::size_t in_h, std::size_t in_w) {
  require_rank4(grad_out, "bilinear_resize_backward");
  if (grad_out.h() == in_h && grad_out.w() == in_w) return grad_out;
  const std::size_t out_h = grad_out.h(), out_w = grad_out.w();
  const AxisTaps ty = align_corner_taps(in_h, out_h);
  const AxisTaps tx = align_corner_taps(in_w, out_w);
  Tensor g({grad_out.n(), grad_out.c(), in_h, in_w});
  for (std::size_t nc = 0; nc < grad_out.n() * grad_out.c(); ++nc) {
    const Real* src = grad_out.data() + nc * out_h * out_w;
    Real* dst = g.data() + nc * in_h * in_w;
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      const Real fy = ty.frac[oy];
      Real* r0 = dst + ty.lo[oy] * in_w;
      Real* r1 = dst + ty.hi[oy] * in_w;
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        const Real fx = tx.frac[ox];
        const Real v = src[oy * out_w + ox];
        r0[tx.lo[ox]] += (1 - fy) * (1 - fx) * v;
        r0[tx.hi[ox]] += (1 - fy) * fx * v;
        r1[tx.lo[ox]] += fy * (1 - fx) * v;
        r1[tx.hi[ox]] += fy * fx * v;
      }
    }
  }
  return g;
}

Tensor softmax_channels(const Tensor& x) {
  require_rank4(x, "softmax_channels");
  if (x.c() < 2) throw ShapeError("softmax_channels: need at least two channels");
  Tensor p(x.shape());
  const std::size_t K = x.c(), P = x.plane();
  for (std::size_t n = 0; n < x.n(); ++n) {
    const Real* src = x.data() + n * K * P;
    Real* dst = p.data() + n * K * P;
    for (std::size_t j = 0; j < P; ++j) {
      Real m = src[j];
      for (std::size_t k = 1; k < K; ++k) m = std::max(m, src[k * P + j]);
      Real z = 0;
      for (std::size_t k = 0; k < K; ++k) {
        const Real e = std::exp(src[k * P + j] - m);
        dst[k * P + j] = e;
        z += e;
      }
      for (std::size_t k = 0; k < K; ++k) dst[k * P + j] /= z;
    }
  }
  return p;
}

Tensor batchnorm(const Tensor& x, BNParams& p, Mode mode, BNCache* cache) {
  require_rank4(x, "batchnorm");
  const std::size_t C = x.c(), P = x.plane(), N = x.n();
  if (p.gamma.size() != C || p.beta.size() != C || p.running_mean.size() != C || p.running_var.size() != C) {
    throw ShapeError("batchnorm: parameter length does not match " + std::to_string(C) + " channels");
  }
  const std::size_t count = N * P;
  if (mode == Mode::Train && count < 2) {
    throw ShapeError("batchnorm: training-mode variance undefined for a single value per channel");
  }
  Tensor out(x.shape());
  BNCache local;
  BNCache& cc = cache ? *cache : local;
  cc.normalized = Tensor(x.shape());
  cc.inv_std.assign(C, 0);
  for (std::size_t c = 0; c < C; ++c) {
    Real mean = 0, var = 0;
    if (mode == Mode::Train) {
      for (std::size_t n = 0; n < N; ++n) {
        const Real* s = x.data() + (n * C + c) * P;
        for (std::size_t j = 0; j < P; ++j) mean += s[j];
      }
      mean /= static_cast<Real>(count);
      for (std::size_t n = 0; n < N; ++n) {
        const Real* s = x.data() + (n * C + c) * P;
        for (std::size_t j = 0; j < P; ++j) var += (s[j] - mean) * (s[j] - mean);
      }
      var /= static_cast<Real>(count);
      const Real unbiased = var * static_cast<Real>(count) / static_cast<Real>(count - 1);
      p.running_mean[c] = p.momentum * p.running_mean[c] + (1 - p.momentum) * mean;
      p.running_var[c] = p.momentum * p.running_var[c] + (1 - p.momentum) * unbiased;
    } else {
      mean = p.running_mean[c];
      var = p.running_var[c];
    }
    const Real inv = 1 / std::sqrt(var + p.epsilon);
    cc.inv_std[c] = inv;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * P;
      for (std::size_t j = 0; j < P; ++j) {
        const Real xh = (x[off + j] - mean) * inv;
        cc.normalized[off + j] = xh;
        out[off + j] = p.gamma[c] * xh + p.beta[c];
      }
    }
  }
  return out;
}

Tensor dropout(const Tensor& x, Real rate, Mode mode, std::uint64_t seed, Tensor* mask) {
  if (!(rate >= 0 && rate < 1)) throw ShapeError("dropout: rate must lie in [0, 1)");
  if (mode == Mode::Eval || rate == 0) {
    if (mask) *mask = Tensor();
    return x;
  }
  std::mt19937_64 rng(seed);
  const Real scale = 1 / (1 - rate);
  Tensor m(x.shape());
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m[i] = unit_uniform(rng) < rate ? Real{0} : scale;
    out[i] = x[i] * m[i];
  }
  if (mask) *mask = std::move(m);
  return out;
}

// ---------------------------------------------------------------------------

Conv2d::Conv2d(const std::string& name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel, ConvGeometry geom)
    : weight_(name + ".w", Tensor({out_ch, in_ch, kernel, kernel}), true),
      bias_(name + ".b", Tensor({out_ch}), false),
      geom_(geom) {}

Tensor Conv2d::forward(const Tensor& x) {
  Tensor y = conv2d(x, weight_.value, bias_.value, geom_);
  input_ = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  if (!input_) throw StateError(weight_.name + ": backward called before forward");
  ConvGrads g = conv2d_backward(*input_, weight_.value, geom_, grad_out);
  weight_.accumulate(g.weights);
  bias_.accumulate(g.bias);
  return std::move(g.input);
}

Tensor ReLU::forward(const Tensor& x) {
  input_ = x;
  return relu(x);
}

Tensor ReLU::backward(const Tensor& grad_out) const {
  if (!input_) throw StateError("relu: backward called before forward");
  return relu_backward(*input_, grad_out);
}

Tensor MaxPool2x2::forward(const Tensor& x) {
  PoolResult r = maxpool2x2(x);
  input_shape_ = x.shape();
  argmax_ = std::move(r.argmax);
  ready_ = true;
  return std::move(r.out);
}

Tensor MaxPool2x2::backward(const Tensor& grad_out) const {
  if (!ready_) throw StateError("maxpool2x2: backward called before forward");
  return maxpool2x2_backward(input_shape_, argmax_, grad_out);
}

BatchNorm::BatchNorm(const std::string& name, std::size_t channels, Real epsilon, Real momentum)
    : gamma_(name + ".gamma", Tensor({channels}, 1), false),
      beta_(name + ".beta", Tensor({channels}), false),
      running_mean_(name + ".mean", Tensor({channels}), false, false),
      running_var_(name + ".var", Tensor({channels}, 1), false, false),
      epsilon_(epsilon),
      momentum_(momentum) {}

Tensor BatchNorm::forward(const Tensor& x, Mode mode) {
  BNParams p{gamma_.value, beta_.value, running_mean_.value, running_var_.value, epsilon_, momentum_};
  BNCache cache;
  Tensor y = batchnorm(x, p, mode, &cache);
  running_mean_.value = std::move(p.running_mean);
  running_var_.value = std::move(p.running_var);
  cache_ = std::move(cache);
  mode_ = mode;
  return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out) {
  if (!cache_) throw StateError(gamma_.name + ": backward called before forward");
  const Tensor& xh = cache_->normalized;
  require_same_shape(xh, grad_out, "batchnorm_backward");
  const std::size_t C = xh.c(), P = xh.plane(), N = xh.n();
  const auto count = static_cast<Real>(N * P);
  Tensor gx(xh.shape());
  Tensor ggamma({C}), gbeta({C});
  for (std::size_t c = 0; c < C; ++c) {
    Real sum_g = 0, sum_gx = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * P;
      for (std::size_t j = 0; j < P; ++j) {
        sum_g += grad_out[off + j];
        sum_gx += grad_out[off + j] * xh[off + j];
      }
    }
    ggamma[c] = sum_gx;
    gbeta[c] = sum_g;
    const Real scale = gamma_.value[c] * cache_->inv_std[c];
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t off = (n * C + c) * P;
      for (std::size_t j = 0; j < P; ++j) {
        if (mode_ == Mode::Train) {
          gx[off + j] = scale * (grad_out[off + j] - sum_g / count - xh[off + j] * sum_gx / count);
        } else {
          gx[off + j] = scale * grad_out[off + j];
        }
      }
    }
  }
  gamma_.accumulate(ggamma);
  beta_.accumulate(gbeta);
  return gx;
}

Dropout::Dropout(Real rate) : rate_(rate) {
  if (!(rate >= 0 && rate < 1)) throw ConfigError("dropout rate must lie in [0, 1)");
}

Tensor Dropout::forward(const Tensor& x, Mode mode, std::uint64_t seed) {
  Tensor mask;
  Tensor y = dropout(x, rate_, mode, seed, &mask);
  mask_ = std::move(mask);
  ready_ = true;
  return y;
}

Tensor Dropout::backward(const Tensor& grad_out) const {
  if (!ready_) throw StateError("dropout: backward called before forward");
  if (mask_->empty()) return grad_out;
  require_same_shape(*mask_, grad_out, "dropout_backward");
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) g[i] *= (*mask_)[i];
  return g;
}

Tensor Resize::forward(const Tensor& x, std::size_t out_h, std::size_t out_w) {
  Tensor y = bilinear_resize(x, out_h, out_w);
  in_h_ = x.h();
  in_w_ = x.w();
  ready_ = true;
  return y;
}

Tensor Resize::backward(const Tensor& grad_out) const {
  if (!ready_) throw StateError("resize: backward called before forward");
  return bilinear_resize_backward(grad_out, in_h_, in_w_);
}

Tensor Sum::forward(const Tensor& a, const Tensor& b) {
  Tensor y = elementwise_sum(a, b);
  shape_ = a.shape();
  ready_ = true;
  return y;
}

std::pair<Tensor, Tensor> Sum::backward(const Tensor& grad_out) const {
  if (!ready_) throw StateError("sum: backward called before forward");
  if (grad_out.shape() != shape_) throw ShapeError("sum_backward: upstream gradient shape mismatch");
  return {grad_out, grad_out};
}

}  // namespace scasnet
