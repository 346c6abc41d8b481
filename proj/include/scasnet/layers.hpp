#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scasnet/tensor.hpp"

namespace scasnet {

enum class Mode { Train, Eval };

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t dilation = 1;
  std::size_t padding = 0;
};

/// Output extent along one axis; throws if the dilated kernel exceeds the padded input.
std::size_t conv_out_extent(std::size_t in, std::size_t kernel, const ConvGeometry& g);

// ---------------------------------------------------------------------------
// Stateless kernels. x is always NCHW.

/// Dilated, strided, zero-padded cross-correlation. weights [O,C,kh,kw], bias [O].
Tensor conv2d(const Tensor& x, const Tensor& weights, const Tensor& bias, const ConvGeometry& g);

struct ConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
ConvGrads conv2d_backward(const Tensor& x, const Tensor& weights, const ConvGeometry& g,
                          const Tensor& grad_out);

Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& grad_out);

struct PoolResult {
  Tensor out;
  /// Flat index into the (unpadded) input for every output element.
  std::vector<std::size_t> argmax;
};
/// 2x2 / stride-2 max pooling. Odd extents are replicate-padded by one row/column first;
/// ties resolve to the first window position in row-major order.
PoolResult maxpool2x2(const Tensor& x);
Tensor maxpool2x2_backward(const Shape& input_shape, std::span<const std::size_t> argmax,
                           const Tensor& grad_out);

/// Align-corners bilinear resampling; same-size resize is an exact copy.
Tensor bilinear_resize(const Tensor& x, std::size_t out_h, std::size_t out_w);
Tensor bilinear_resize_backward(const Tensor& grad_out, std::size_t in_h, std::size_t in_w);

/// Numerically stable softmax across the channel axis, per pixel.
Tensor softmax_channels(const Tensor& x);

struct BNParams {
  Tensor gamma;
  Tensor beta;
  Tensor running_mean;
  Tensor running_var;
  Real epsilon = 1e-5;
  Real momentum = 0.9;
};

struct BNCache {
  Tensor normalized;         // x-hat
  std::vector<Real> inv_std;  // per channel
};

/// Train mode normalizes with batch statistics and folds them into the running
/// averages (unbiased variance); eval mode uses the running statistics.
Tensor batchnorm(const Tensor& x, BNParams& p, Mode mode, BNCache* cache = nullptr);

/// Inverted dropout. Train: zero with probability `rate`, scale survivors by 1/(1-rate).
/// Eval: identity. When `mask` is given it receives the per-element multiplier.
Tensor dropout(const Tensor& x, Real rate, Mode mode, std::uint64_t seed, Tensor* mask = nullptr);

// ---------------------------------------------------------------------------
// Layer nodes: own parameters, cache what backward needs, and accumulate
// parameter gradients. backward() before forward() throws StateError.

class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, std::size_t in_ch, std::size_t out_ch, std::size_t kernel,
         ConvGeometry geom);

  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out);

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const Param& weight() const { return weight_; }
  const Param& bias() const { return bias_; }
  const ConvGeometry& geometry() const { return geom_; }
  std::size_t in_channels() const { return weight_.value.dim(1); }
  std::size_t out_channels() const { return weight_.value.dim(0); }
  std::size_t kernel() const { return weight_.value.dim(2); }

  void collect(std::vector<Param*>& out) {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Param weight_;
  Param bias_;
  ConvGeometry geom_;
  std::optional<Tensor> input_;
};

class ReLU {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out) const;

 private:
  std::optional<Tensor> input_;
};

class MaxPool2x2 {
 public:
  Tensor forward(const Tensor& x);
  Tensor backward(const Tensor& grad_out) const;

 private:
  Shape input_shape_;
  std::vector<std::size_t> argmax_;
  bool ready_ = false;
};

class BatchNorm {
 public:
  BatchNorm() = default;
  BatchNorm(const std::string& name, std::size_t channels, Real epsilon = 1e-5, Real momentum = 0.9);

  Tensor forward(const Tensor& x, Mode mode);
  Tensor backward(const Tensor& grad_out);

  void collect(std::vector<Param*>& out) {
    out.push_back(&gamma_);
    out.push_back(&beta_);
    out.push_back(&running_mean_);
    out.push_back(&running_var_);
  }

 private:
  Param gamma_, beta_, running_mean_, running_var_;
  Real epsilon_ = 1e-5;
  Real momentum_ = 0.9;
  std::optional<BNCache> cache_;
  Mode mode_ = Mode::Eval;
};

class Dropout {
 public:
  explicit Dropout(Real rate = 0.5);

  Tensor forward(const Tensor& x, Mode mode, std::uint64_t seed);
  Tensor backward(const Tensor& grad_out) const;
  Real rate() const { return rate_; }

 private:
  Real rate_;
  std::optional<Tensor> mask_;  // empty mask after an eval forward means identity
  bool ready_ = false;
};

class Resize {
 public:
  Tensor forward(const Tensor& x, std::size_t out_h, std::size_t out_w);
  Tensor backward(const Tensor& grad_out) const;

 private:
  std::size_t in_h_ = 0, in_w_ = 0;
  bool ready_ = false;
};

class Sum {
 public:
  Tensor forward(const Tensor& a, const Tensor& b);
  std::pair<Tensor, Tensor> backward(const Tensor& grad_out) const;

 private:
  Shape shape_;
  bool ready_ = false;
};

}  // namespace scasnet
