#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace lqd::evaluation {

/// A score with its ground truth; `positive` means corrupted.
struct Scored {
  double score = 0.0;
  bool positive = false;
};

class MetricError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

namespace detail {

struct Counts {
  std::size_t pos = 0, neg = 0;
};

inline Counts count(std::span<const Scored> s) {
  Counts c;
  for (const auto& x : s) {
    if (!std::isfinite(x.score)) throw MetricError("metric: non-finite score");
    (x.positive ? c.pos : c.neg)++;
  }
  return c;
}

// Descending by score; ties are grouped and handled as a block by callers.
inline std::vector<Scored> sorted_desc(std::span<const Scored> s) {
  std::vector<Scored> v(s.begin(), s.end());
  std::sort(v.begin(), v.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  return v;
}

}  // namespace detail

/// P(score_pos > score_neg) + ½ P(tie).
inline double auroc(std::span<const Scored> s) {
  const auto c = detail::count(s);
  if (c.pos == 0 || c.neg == 0) throw MetricError("auroc: need both clean and corrupted entries");
  const auto v = detail::sorted_desc(s);
  // For each tie block: pairs (pos in block, neg below) count 1, pairs within block ½.
  double wins = 0.0;
  std::size_t neg_seen = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i, p = 0, n = 0;
    while (j < v.size() && v[j].score == v[i].score) (v[j++].positive ? p : n)++;
    const std::size_t neg_below = c.neg - neg_seen - n;
    wins += static_cast<double>(p) * (static_cast<double>(neg_below) + 0.5 * static_cast<double>(n));
    neg_seen += n;
    i = j;
  }
  return wins / (static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

/// Average precision: Σ over distinct thresholds of (ΔRecall × Precision).
inline double auprc(std::span<const Scored> s) {
  const auto c = detail::count(s);
  if (c.pos == 0) throw MetricError("auprc: need at least one corrupted entry");
  const auto v = detail::sorted_desc(s);
  double ap = 0.0;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i, p = 0;
    while (j < v.size() && v[j].score == v[i].score) p += v[j++].positive ? 1 : 0;
    tp += p;
    fp += (j - i) - p;
    if (p > 0) {
      ap += (static_cast<double>(p) / static_cast<double>(c.pos)) *
            (static_cast<double>(tp) / static_cast<double>(tp + fp));
    }
    i = j;
  }
  return ap;
}

/// FPR at the largest threshold t whose rule `score >= t` reaches TPR ≥ target.
inline double fpr_at_tpr(std::span<const Scored> s, double target_tpr = 0.8) {
  const auto c = detail::count(s);
  if (c.pos == 0 || c.neg == 0) throw MetricError("fpr_at_tpr: need both clean and corrupted entries");
  if (!(target_tpr > 0.0 && target_tpr <= 1.0)) throw MetricError("fpr_at_tpr: target must lie in (0, 1]");
  const auto v = detail::sorted_desc(s);
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j].score == v[i].score) (v[j++].positive ? tp : fp)++;
    if (static_cast<double>(tp) / static_cast<double>(c.pos) >= target_tpr - 1e-12) {
      return static_cast<double>(fp) / static_cast<double>(c.neg);
    }
    i = j;
  }
  return 1.0;
}

struct MetricTriple {
  double auroc = 0.0;
  double auprc = 0.0;
  double fpr80 = 0.0;
};

inline MetricTriple all_metrics(std::span<const Scored> s) { return {auroc(s), auprc(s), fpr_at_tpr(s, 0.8)}; }

}  // namespace lqd::evaluation
