#include "scasnet/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>

#include "scasnet/json_util.hpp"

namespace scasnet {

void validate(const EvalConfig& cfg) {
  if (cfg.pr_thresholds < 2) throw ConfigError("eval.pr_thresholds must be at least 2");
}

nlohmann::json to_json(const EvalConfig& cfg) {
  return {{"erosion_radius", cfg.erosion_radius}, {"pr_thresholds", cfg.pr_thresholds}};
}

EvalConfig eval_config_from_json(const nlohmann::json& j, const EvalConfig& base) {
  reject_unknown_keys(j, {"erosion_radius", "pr_thresholds"}, "eval");
  EvalConfig c = base;
  read_opt(j, "erosion_radius", c.erosion_radius, "eval");
  read_opt(j, "pr_thresholds", c.pr_thresholds, "eval");
  return c;
}

IgnoreMask erode_boundaries(const LabelMap& gt, std::size_t radius) {
  const std::size_t H = gt.height, W = gt.width;
  IgnoreMask mask(H, W);
  const auto r = static_cast<std::ptrdiff_t>(radius);
  std::vector<std::pair<std::ptrdiff_t, std::ptrdiff_t>> disk;
  for (std::ptrdiff_t dy = -r; dy <= r; ++dy)
    for (std::ptrdiff_t dx = -r; dx <= r; ++dx)
      if (dy * dy + dx * dx <= r * r) disk.emplace_back(dy, dx);

  for (std::size_t y = 0; y < H; ++y)
    for (std::size_t x = 0; x < W; ++x) {
      const auto v = gt.at(y, x);
      const bool boundary = (y > 0 && gt.at(y - 1, x) != v) || (y + 1 < H && gt.at(y + 1, x) != v) ||
                            (x > 0 && gt.at(y, x - 1) != v) || (x + 1 < W && gt.at(y, x + 1) != v);
      if (!boundary) continue;
      for (auto [dy, dx] : disk) {
        const std::ptrdiff_t yy = static_cast<std::ptrdiff_t>(y) + dy, xx = static_cast<std::ptrdiff_t>(x) + dx;
        if (yy < 0 || xx < 0 || yy >= static_cast<std::ptrdiff_t>(H) || xx >= static_cast<std::ptrdiff_t>(W)) continue;
        mask.ignored[static_cast<std::size_t>(yy) * W + static_cast<std::size_t>(xx)] = 1;
      }
    }
  return mask;
}

std::uint64_t Confusion::total() const {
  std::uint64_t s = 0;
  for (auto v : counts) s += v;
  return s;
}

void Confusion::add(const LabelMap& pred, const LabelMap& gt, const IgnoreMask& mask) {
  if (pred.height != gt.height || pred.width != gt.width)
    throw ShapeError("score: prediction " + std::to_string(pred.height) + "x" + std::to_string(pred.width) +
                     " vs ground truth " + std::to_string(gt.height) + "x" + std::to_string(gt.width));
  const bool masked = !mask.ignored.empty();
  if (masked && (mask.height != gt.height || mask.width != gt.width)) throw ShapeError("score: mask size differs");
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    if (masked && mask.ignored[i]) continue;
    const auto g = gt.labels[i], p = pred.labels[i];
    if (g >= classes || p >= classes) throw ShapeError("score: label " + std::to_string(std::max(g, p)) + " >= K");
    ++counts[g * classes + p];
  }
}

Confusion& Confusion::operator+=(const Confusion& other) {
  if (other.classes != classes) throw ShapeError("confusion matrices have different class counts");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
  return *this;
}

namespace {

Real ratio(std::uint64_t num, std::uint64_t den) { return den == 0 ? 0 : Real(num) / Real(den); }

}  // namespace

EvalReport from_confusion(const Confusion& c) {
  EvalReport r;
  r.confusion = c;
  const std::size_t K = c.classes;
  std::uint64_t trace = 0;
  std::size_t present = 0;
  for (std::size_t k = 0; k < K; ++k) {
    ClassMetrics m;
    m.tp = c.at(k, k);
    for (std::size_t j = 0; j < K; ++j) {
      if (j == k) continue;
      m.fp += c.at(j, k);
      m.fn += c.at(k, j);
    }
    m.precision = ratio(m.tp, m.tp + m.fp);
    m.recall = ratio(m.tp, m.tp + m.fn);
    m.f1 = ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn);
    m.iou = ratio(m.tp, m.tp + m.fp + m.fn);
    m.present = m.tp + m.fp + m.fn > 0;
    if (m.present) {
      r.mean_f1 += m.f1;
      r.mean_iou += m.iou;
      ++present;
    }
    trace += m.tp;
    r.per_class.push_back(m);
  }
  if (present > 0) {
    r.mean_f1 /= Real(present);
    r.mean_iou /= Real(present);
  }
  r.overall_accuracy = ratio(trace, c.total());
  return r;
}

EvalReport score(const LabelMap& pred, const LabelMap& gt, const IgnoreMask& mask, std::size_t classes) {
  Confusion c(classes);
  c.add(pred, gt, mask);
  return from_confusion(c);
}

std::vector<Real> even_thresholds(std::size_t count) {
  if (count < 2) throw ConfigError("need at least two thresholds");
  std::vector<Real> t(count);
  for (std::size_t i = 0; i < count; ++i) t[i] = Real(i) / Real(count - 1);
  return t;
}

PrAccumulator::PrAccumulator(std::size_t classes, std::vector<Real> thresholds)
    : classes_(classes),
      thresholds_(std::move(thresholds)),
      pos_(classes, std::vector<std::uint64_t>(thresholds_.size() + 1, 0)),
      neg_(classes, std::vector<std::uint64_t>(thresholds_.size() + 1, 0)) {
  if (!std::is_sorted(thresholds_.begin(), thresholds_.end())) throw ConfigError("PR thresholds must be ascending");
}

void PrAccumulator::add(const ProbMap& probs, const LabelMap& gt, const IgnoreMask& mask) {
  if (probs.classes() != classes_ || probs.height() != gt.height || probs.width() != gt.width)
    throw ShapeError("pr_curve: probability map does not match the ground truth");
  const bool masked = !mask.ignored.empty();
  const std::size_t P = gt.size();
  const Real* p = probs.probs.data();
  for (std::size_t k = 0; k < classes_; ++k)
    for (std::size_t i = 0; i < P; ++i) {
      if (masked && mask.ignored[i]) continue;
      // Number of thresholds t with p >= t.
      const auto passed = static_cast<std::size_t>(
          std::upper_bound(thresholds_.begin(), thresholds_.end(), p[k * P + i]) - thresholds_.begin());
      ++(gt.labels[i] == k ? pos_ : neg_)[k][passed];
    }
}

std::vector<PrSample> PrAccumulator::samples(std::size_t k) const {
  const std::size_t T = thresholds_.size();
  std::vector<PrSample> out(T);
  std::uint64_t tp = 0, fp = 0, positives = 0;
  for (auto v : pos_[k]) positives += v;
  // Predicted positive at threshold i iff more than i thresholds were passed.
  for (std::size_t i = T; i-- > 0;) {
    tp += pos_[k][i + 1];
    fp += neg_[k][i + 1];
    out[i] = {thresholds_[i], ratio(tp, tp + fp), ratio(tp, positives)};
  }
  return out;
}

std::vector<PrSample> pr_curve(const ProbMap& probs, const LabelMap& gt, const IgnoreMask& mask, std::size_t k,
                               const std::vector<Real>& thresholds) {
  PrAccumulator acc(probs.classes(), thresholds);
  acc.add(probs, gt, mask);
  return acc.samples(k);
}

nlohmann::json report_to_json(const EvalReport& r, const std::vector<std::string>& class_names) {
  const std::size_t K = r.confusion.classes;
  auto name = [&](std::size_t k) { return k < class_names.size() ? class_names[k] : "class" + std::to_string(k); };
  nlohmann::json classes = nlohmann::json::array();
  for (std::size_t k = 0; k < K; ++k) {
    const auto& m = r.per_class[k];
    classes.push_back({{"name", name(k)},
                       {"tp", m.tp},
                       {"fp", m.fp},
                       {"fn", m.fn},
                       {"precision", m.precision},
                       {"recall", m.recall},
                       {"f1", m.f1},
                       {"iou", m.iou},
                       {"present", m.present}});
  }
  nlohmann::json confusion = nlohmann::json::array();
  for (std::size_t g = 0; g < K; ++g) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t p = 0; p < K; ++p) row.push_back(r.confusion.at(g, p));
    confusion.push_back(row);
  }
  return {{"classes", classes},
          {"confusion", confusion},
          {"counted_pixels", r.confusion.total()},
          {"mean_f1", r.mean_f1},
          {"mean_iou", r.mean_iou},
          {"overall_accuracy", r.overall_accuracy}};
}

void write_report_table(std::ostream& out, const EvalReport& r, const std::vector<std::string>& class_names) {
  char line[160];
  std::snprintf(line, sizeof line, "%-12s %10s %10s %10s %10s\n", "class", "precision", "recall", "F1", "IoU");
  out << line;
  for (std::size_t k = 0; k < r.per_class.size(); ++k) {
    const auto& m = r.per_class[k];
    const std::string name = k < class_names.size() ? class_names[k] : "class" + std::to_string(k);
    if (m.present)
      std::snprintf(line, sizeof line, "%-12s %10.4f %10.4f %10.4f %10.4f\n", name.c_str(), m.precision, m.recall, m.f1,
                    m.iou);
    else
      std::snprintf(line, sizeof line, "%-12s %10s %10s %10s %10s\n", name.c_str(), "-", "-", "-", "-");
    out << line;
  }
  std::snprintf(line, sizeof line, "%-12s %10s %10s %10.4f %10.4f\n", "mean", "", "", r.mean_f1, r.mean_iou);
  out << line;
  std::snprintf(line, sizeof line, "overall accuracy %.4f over %llu pixels\n", r.overall_accuracy,
                static_cast<unsigned long long>(r.confusion.total()));
  out << line;
}

void write_pr_csv(std::ostream& out, const PrAccumulator& pr, const std::vector<std::string>& class_names) {
  out << "class,threshold,precision,recall\n";
  out << std::setprecision(17);
  for (std::size_t k = 0; k < pr.classes(); ++k) {
    const std::string name = k < class_names.size() ? class_names[k] : "class" + std::to_string(k);
    for (const auto& s : pr.samples(k)) out << name << ',' << s.threshold << ',' << s.precision << ',' << s.recall << '\n';
  }
}

}  // namespace scasnet
