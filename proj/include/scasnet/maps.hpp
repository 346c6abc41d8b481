#pragma once

#include <cstdint>
#include <vector>

#include "scasnet/tensor.hpp"

namespace scasnet {

/// Per-pixel class indices, row-major.
struct LabelMap {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> labels;

  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::uint8_t fill = 0) : height(h), width(w), labels(h * w, fill) {}

  std::uint8_t& at(std::size_t y, std::size_t x) { return labels[y * width + x]; }
  std::uint8_t at(std::size_t y, std::size_t x) const { return labels[y * width + x]; }
  std::size_t size() const { return labels.size(); }

  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

/// true (1) marks a pixel excluded from loss or scoring.
struct IgnoreMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> ignored;

  IgnoreMask() = default;
  IgnoreMask(std::size_t h, std::size_t w) : height(h), width(w), ignored(h * w, 0) {}

  bool at(std::size_t y, std::size_t x) const { return ignored[y * width + x] != 0; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto v : ignored) n += v != 0;
    return n;
  }

  friend bool operator==(const IgnoreMask&, const IgnoreMask&) = default;
};

/// Class posteriors, stored as a [1,K,H,W] tensor.
struct ProbMap {
  Tensor probs;

  std::size_t classes() const { return probs.c(); }
  std::size_t height() const { return probs.h(); }
  std::size_t width() const { return probs.w(); }
  Real at(std::size_t k, std::size_t y, std::size_t x) const { return probs.at(0, k, y, x); }
};

/// Per-pixel argmax over channels of a [1,K,H,W] tensor; ties go to the lowest class.
LabelMap argmax_channels(const Tensor& scores);

}  // namespace scasnet
