#include "scasnet/blocks.hpp"

namespace scasnet {

ResidualCorrection::ResidualCorrection(const std::string& name, std::size_t channels)
    : conv_a_(name + ".a", channels, channels, 1, {}),
      conv_b_(name + ".b", channels, channels, 3, {1, 1, 1}),
      conv_c_(name + ".c", channels, channels, 1, {}) {}

Tensor ResidualCorrection::forward(const Tensor& f) {
  if (f.rank() != 4 || f.c() != channels()) {
    throw ShapeError("residual correction expects " + std::to_string(channels()) + " channels, got " +
                     shape_str(f.shape()));
  }
  Tensor h = conv_a_.forward(f);
  h = relu_a_.forward(h);
  h = conv_b_.forward(h);
  h = relu_b_.forward(h);
  h = conv_c_.forward(h);
  h += f;
  return h;
}

Tensor ResidualCorrection::backward(const Tensor& grad_out) {
  Tensor g = conv_c_.backward(grad_out);
  g = relu_b_.backward(g);
  g = conv_b_.backward(g);
  g = relu_a_.backward(g);
  g = conv_a_.backward(g);
  g += grad_out;
  return g;
}

Tensor ResidualCorrection::inner(const Tensor& f) const {
  auto apply = [](const Conv2d& c, const Tensor& x) {
    return conv2d(x, c.weight().value, c.bias().value, c.geometry());
  };
  return apply(conv_c_, relu(apply(conv_b_, relu(apply(conv_a_, f)))));
}

void ResidualCorrection::collect(std::vector<Param*>& out) {
  conv_a_.collect(out);
  conv_b_.collect(out);
  conv_c_.collect(out);
}

Tensor residual_correct(const Tensor& f, ResidualCorrection& block) { return block.forward(f); }

void validate_dilation_rates(const std::vector<std::size_t>& rates) {
  if (rates.size() < 2) throw ConfigError("context aggregation needs at least two dilation rates");
  for (std::size_t i = 0; i < rates.size(); ++i) {
    if (rates[i] == 0) throw ConfigError("dilation rates must be positive");
    if (i > 0 && rates[i] >= rates[i - 1]) {
      throw ConfigError("dilation rates must be strictly decreasing (large context first), got " +
                        std::to_string(rates[i - 1]) + " then " + std::to_string(rates[i]));
    }
  }
}

ContextAggregator::ContextAggregator(const std::string& name, std::size_t in_channels, ContextSpec spec)
    : spec_(std::move(spec)) {
  validate_dilation_rates(spec_.rates);
  for (std::size_t i = 0; i < spec_.rates.size(); ++i) {
    const std::size_t d = spec_.rates[i];
    branches_.emplace_back(name + ".branch" + std::to_string(i), in_channels, spec_.width, 3, ConvGeometry{1, d, d});
    branch_relus_.emplace_back();
  }
  if (spec_.correction) {
    const std::size_t n = spec_.mode == AggregationMode::Cascaded ? spec_.rates.size() - 1 : 1;
    for (std::size_t i = 0; i < n; ++i) corrections_.emplace_back(name + ".rc" + std::to_string(i), spec_.width);
  }
}

Tensor ContextAggregator::forward(const Tensor& enc_out) {
  std::vector<Tensor> contexts;
  contexts.reserve(branches_.size());
  for (std::size_t i = 0; i < branches_.size(); ++i) {
    contexts.push_back(branch_relus_[i].forward(branches_[i].forward(enc_out)));
  }
  Tensor acc = std::move(contexts[0]);
  if (spec_.mode == AggregationMode::Cascaded) {
    for (std::size_t i = 1; i < contexts.size(); ++i) {
      acc += contexts[i];
      if (spec_.correction) acc = corrections_[i - 1].forward(acc);
    }
  } else {
    for (std::size_t i = 1; i < contexts.size(); ++i) acc += contexts[i];
    if (spec_.correction) acc = corrections_[0].forward(acc);
  }
  return acc;
}

Tensor ContextAggregator::backward(const Tensor& grad_out) {
  const std::size_t n = branches_.size();
  std::vector<Tensor> grads(n);
  if (spec_.mode == AggregationMode::Cascaded) {
    Tensor g = grad_out;
    for (std::size_t i = n - 1; i >= 1; --i) {
      if (spec_.correction) g = corrections_[i - 1].backward(g);
      grads[i] = g;
    }
    grads[0] = std::move(g);
  } else {
    Tensor g = spec_.correction ? corrections_[0].backward(grad_out) : grad_out;
    for (auto& gi : grads) gi = g;
  }
  Tensor g_in = branches_[0].backward(branch_relus_[0].backward(grads[0]));
  for (std::size_t i = 1; i < n; ++i) g_in += branches_[i].backward(branch_relus_[i].backward(grads[i]));
  return g_in;
}

void ContextAggregator::collect(std::vector<Param*>& out) {
  for (auto& b : branches_) b.collect(out);
  for (auto& c : corrections_) c.collect(out);
}

Tensor aggregate_contexts(const Tensor& enc_out, ContextAggregator& agg) { return agg.forward(enc_out); }

RefinementStep::RefinementStep(const std::string& name, RefinementSpec spec) : spec_(spec) {
  if (spec_.decoder_width != spec_.shallow_width) {
    throw ConfigError("refinement projections must emit equal widths for sum fusion, got " +
                      std::to_string(spec_.decoder_width) + " and " + std::to_string(spec_.shallow_width));
  }
  if (spec_.decoder_channels == 0 || spec_.shallow_channels == 0 || spec_.decoder_width == 0) {
    throw ConfigError("refinement channel counts must be positive");
  }
  proj_m_ = Conv2d(name + ".pm", spec_.decoder_channels, spec_.decoder_width, 1, {});
  proj_f_ = Conv2d(name + ".pf", spec_.shallow_channels, spec_.shallow_width, 1, {});
  if (spec_.correction) correction_.emplace(name + ".rc", spec_.decoder_width);
}

Tensor RefinementStep::forward(const Tensor& m_prev, const Tensor& f_shallow, std::size_t target_h,
                               std::size_t target_w) {
  if (m_prev.rank() != 4 || f_shallow.rank() != 4 || m_prev.n() != f_shallow.n()) {
    throw ShapeError("refine: incompatible inputs " + shape_str(m_prev.shape()) + " and " +
                     shape_str(f_shallow.shape()));
  }
  if (f_shallow.h() < m_prev.h() || f_shallow.w() < m_prev.w()) {
    throw ShapeError("refine: shallow features " + shape_str(f_shallow.shape()) +
                     " must be at least as fine as decoder stream " + shape_str(m_prev.shape()));
  }
  Tensor m = align_.forward(m_prev, f_shallow.h(), f_shallow.w());
  Tensor fused = relu_m_.forward(proj_m_.forward(m));
  fused += relu_f_.forward(proj_f_.forward(f_shallow));
  if (correction_) fused = correction_->forward(fused);
  return out_.forward(fused, target_h, target_w);
}

std::pair<Tensor, Tensor> RefinementStep::backward(const Tensor& grad_out) {
  Tensor g = out_.backward(grad_out);
  if (correction_) g = correction_->backward(g);
  Tensor g_f = proj_f_.backward(relu_f_.backward(g));
  Tensor g_m = align_.backward(proj_m_.backward(relu_m_.backward(g)));
  return {std::move(g_m), std::move(g_f)};
}

void RefinementStep::collect(std::vector<Param*>& out) {
  proj_m_.collect(out);
  proj_f_.collect(out);
  if (correction_) correction_->collect(out);
}

Tensor refine(const Tensor& m_prev, const Tensor& f_shallow, RefinementStep& step, std::size_t target_h,
              std::size_t target_w) {
  return step.forward(m_prev, f_shallow, target_h, target_w);
}

}  // namespace scasnet
