#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "scasnet/maps.hpp"

namespace scasnet {

struct EvalConfig {
  std::size_t erosion_radius = 3;
  std::size_t pr_thresholds = 101;  // evenly spaced in [0, 1]

  friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

void validate(const EvalConfig& cfg);
nlohmann::json to_json(const EvalConfig& cfg);
EvalConfig eval_config_from_json(const nlohmann::json& j, const EvalConfig& base);

/// Boundary pixels have a 4-neighbour of a different class; the mask marks every pixel
/// whose Euclidean distance to a boundary pixel is at most `radius`.
IgnoreMask erode_boundaries(const LabelMap& gt, std::size_t radius);

/// K x K pixel counts, rows = ground truth, columns = prediction.
struct Confusion {
  std::size_t classes = 0;
  std::vector<std::uint64_t> counts;

  Confusion() = default;
  explicit Confusion(std::size_t k) : classes(k), counts(k * k, 0) {}

  std::uint64_t at(std::size_t gt, std::size_t pred) const { return counts[gt * classes + pred]; }
  std::uint64_t total() const;
  /// Adds the non-ignored pixels of one image. An empty mask ignores nothing.
  void add(const LabelMap& pred, const LabelMap& gt, const IgnoreMask& mask = {});
  Confusion& operator+=(const Confusion& other);

  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct ClassMetrics {
  std::uint64_t tp = 0, fp = 0, fn = 0;
  Real precision = 0, recall = 0, f1 = 0, iou = 0;
  bool present = false;  // in ground truth or prediction; absent classes are left out of means
};

struct EvalReport {
  Confusion confusion;
  std::vector<ClassMetrics> per_class;
  Real mean_f1 = 0, mean_iou = 0, overall_accuracy = 0;
};

/// Ratios with a zero denominator are 0.
EvalReport from_confusion(const Confusion& c);
EvalReport score(const LabelMap& pred, const LabelMap& gt, const IgnoreMask& mask, std::size_t classes);

struct PrSample {
  Real threshold = 0, precision = 0, recall = 0;
};

std::vector<Real> even_thresholds(std::size_t count);

/// Per-class precision/recall of the binarization p_k >= t, accumulated over images.
class PrAccumulator {
 public:
  PrAccumulator(std::size_t classes, std::vector<Real> thresholds);

  void add(const ProbMap& probs, const LabelMap& gt, const IgnoreMask& mask = {});
  std::vector<PrSample> samples(std::size_t k) const;
  const std::vector<Real>& thresholds() const { return thresholds_; }
  std::size_t classes() const { return classes_; }

 private:
  std::size_t classes_;
  std::vector<Real> thresholds_;
  // Per class, histograms over "number of thresholds passed", split by ground truth.
  std::vector<std::vector<std::uint64_t>> pos_, neg_;
};

std::vector<PrSample> pr_curve(const ProbMap& probs, const LabelMap& gt, const IgnoreMask& mask, std::size_t k,
                               const std::vector<Real>& thresholds);

nlohmann::json report_to_json(const EvalReport& r, const std::vector<std::string>& class_names);
void write_report_table(std::ostream& out, const EvalReport& r, const std::vector<std::string>& class_names);
/// CSV rows: class,threshold,precision,recall
void write_pr_csv(std::ostream& out, const PrAccumulator& pr, const std::vector<std::string>& class_names);

}  // namespace scasnet
