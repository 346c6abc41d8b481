#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "scasnet/layers.hpp"

namespace scasnet {

/// f' = f + H(f), with H = 1x1 conv -> ReLU -> 3x3 conv -> ReLU -> 1x1 conv, all at the
/// input width. The last conv starts at zero, so a fresh block is the identity map.
class ResidualCorrection {
 public:
  ResidualCorrection() = default;
  ResidualCorrection(const std::string& name, std::size_t channels);

  Tensor forward(const Tensor& f);
  Tensor backward(const Tensor& grad_out);

  /// H(f) alone, without the skip path. Does not touch the backward cache.
  Tensor inner(const Tensor& f) const;

  std::size_t channels() const { return conv_a_.in_channels(); }
  Conv2d& conv_a() { return conv_a_; }
  Conv2d& conv_b() { return conv_b_; }
  Conv2d& conv_c() { return conv_c_; }
  void collect(std::vector<Param*>& out);

 private:
  Conv2d conv_a_, conv_b_, conv_c_;
  ReLU relu_a_, relu_b_;
};

Tensor residual_correct(const Tensor& f, ResidualCorrection& block);

enum class AggregationMode { Cascaded, ParallelStack };

struct ContextSpec {
  std::vector<std::size_t> rates;  // strictly decreasing
  std::size_t width = 64;
  AggregationMode mode = AggregationMode::Cascaded;
  bool correction = true;
};

/// Multi-scale contexts from dilated 3x3 branches (padding == dilation, each followed by
/// ReLU). Cascaded: T = U[...U[U[T1 + T2] + T3]... + Tn] with one correction per fusion.
/// Parallel stack: T = U[T1 + ... + Tn] with a single correction.
class ContextAggregator {
 public:
  ContextAggregator() = default;
  ContextAggregator(const std::string& name, std::size_t in_channels, ContextSpec spec);

  Tensor forward(const Tensor& enc_out);
  Tensor backward(const Tensor& grad_out);

  const ContextSpec& spec() const { return spec_; }
  std::size_t branch_count() const { return branches_.size(); }
  Conv2d& branch(std::size_t i) { return branches_.at(i); }
  std::size_t correction_count() const { return corrections_.size(); }
  ResidualCorrection& correction(std::size_t i) { return corrections_.at(i); }
  void collect(std::vector<Param*>& out);

 private:
  ContextSpec spec_;
  std::vector<Conv2d> branches_;
  std::vector<ReLU> branch_relus_;
  std::vector<ResidualCorrection> corrections_;
};

/// Throws ConfigError unless there are >= 2 strictly decreasing positive rates.
void validate_dilation_rates(const std::vector<std::size_t>& rates);

Tensor aggregate_contexts(const Tensor& enc_out, ContextAggregator& agg);

struct RefinementSpec {
  std::size_t decoder_channels = 0;  // channels of M^i
  std::size_t shallow_channels = 0;  // channels of F^i
  std::size_t decoder_width = 32;    // proj_m output
  std::size_t shallow_width = 32;    // proj_f output; must equal decoder_width
  bool correction = true;
};

/// M^{i+1} = R[U[ReLU(proj_m(M^i)) + ReLU(proj_f(F^i))]]. M^i is first resized to
/// F^i's resolution; R resizes the fused map to the requested target size.
class RefinementStep {
 public:
  RefinementStep() = default;
  RefinementStep(const std::string& name, RefinementSpec spec);

  Tensor forward(const Tensor& m_prev, const Tensor& f_shallow, std::size_t target_h, std::size_t target_w);
  /// Returns (grad wrt m_prev, grad wrt f_shallow).
  std::pair<Tensor, Tensor> backward(const Tensor& grad_out);

  std::size_t out_channels() const { return spec_.decoder_width; }
  Conv2d& proj_m() { return proj_m_; }
  Conv2d& proj_f() { return proj_f_; }
  bool has_correction() const { return correction_.has_value(); }
  ResidualCorrection& correction() { return correction_.value(); }
  void collect(std::vector<Param*>& out);

 private:
  RefinementSpec spec_;
  Resize align_;
  Conv2d proj_m_, proj_f_;
  ReLU relu_m_, relu_f_;
  std::optional<ResidualCorrection> correction_;
  Resize out_;
};

Tensor refine(const Tensor& m_prev, const Tensor& f_shallow, RefinementStep& step, std::size_t target_h,
              std::size_t target_w);

}  // namespace scasnet
