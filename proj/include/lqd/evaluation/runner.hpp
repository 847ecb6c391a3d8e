#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "lqd/corruptions/benchmark.hpp"
#include "lqd/evaluation/metrics.hpp"
#include "lqd/evaluation/report.hpp"
#include "lqd/scoring/score.hpp"

namespace lqd::evaluation {

enum class MethodKind { skl, skl_fixed, likelihood, llr };

/// A scoring method by name: "skl" (adaptive k), "skl@<k>" (fixed k),
/// "likelihood", or "llr" (split at ScoreConfig::llr_k).
struct Method {
  MethodKind kind = MethodKind::skl;
  std::size_t k = 0;

  std::string name() const {
    switch (kind) {
      case MethodKind::skl: return "skl";
      case MethodKind::skl_fixed: return "skl@" + std::to_string(k);
      case MethodKind::likelihood: return "likelihood";
      case MethodKind::llr: return "llr";
    }
    return "?";
  }
};

inline std::optional<Method> parse_method(const std::string& s) {
  if (s == "skl") return Method{MethodKind::skl, 0};
  if (s == "likelihood") return Method{MethodKind::likelihood, 0};
  if (s == "llr") return Method{MethodKind::llr, 0};
  if (s.rfind("skl@", 0) == 0 && s.size() > 4 &&
      std::all_of(s.begin() + 4, s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
    return Method{MethodKind::skl_fixed, std::stoul(s.substr(4))};
  }
  return std::nullopt;
}

struct ImageScore {
  double score = 0.0;
  std::size_t k_used = 0;
  double high_freq_mean = 0.0;
  std::vector<scoring::LayerContribution> contributions;
};

/// Score one image. Every method draws from the per-image generator
/// image_rng(cfg.seed, image_id), so results do not depend on call order.
inline ImageScore score_image(const hvae::HvaeCheckpoint& ck, const Tensor& x, const std::string& image_id,
                              const Method& m, const scoring::ScoreConfig& cfg) {
  ImageScore out;
  out.high_freq_mean = scoring::high_freq_mean(x);
  switch (m.kind) {
    case MethodKind::skl: {
      const auto r = scoring::score(ck, x, cfg, image_id);
      out.score = r.score;
      out.k_used = r.k_used;
      out.contributions = r.contributions;
      break;
    }
    case MethodKind::skl_fixed: {
      Rng rng = scoring::image_rng(cfg.seed, image_id);
      const auto r = scoring::s_kl(ck, x, m.k, rng, cfg.samples, cfg.sampled_inference);
      out.score = r.score;
      out.k_used = m.k;
      out.contributions = r.contributions;
      break;
    }
    case MethodKind::likelihood: {
      Rng rng = scoring::image_rng(cfg.seed, image_id);
      out.score = scoring::likelihood_score(ck, x, rng);
      break;
    }
    case MethodKind::llr: {
      Rng rng = scoring::image_rng(cfg.seed, image_id);
      out.score = scoring::llr_k_score(ck, x, cfg.llr_k, rng);
      out.k_used = cfg.llr_k;
      break;
    }
  }
  if (!std::isfinite(out.score)) throw std::runtime_error("non-finite score");
  return out;
}

/// Score every item with every method. Failures are recorded per image and
/// surface as error cells in the report.
inline std::vector<LabeledScore> score_items(const hvae::HvaeCheckpoint& ck,
                                             const std::vector<corruptions::BenchmarkItem>& items,
                                             const std::vector<Method>& methods, const scoring::ScoreConfig& cfg) {
  if (methods.empty()) throw std::invalid_argument("run_benchmark: no methods");
  std::vector<LabeledScore> out;
  out.reserve(items.size() * methods.size());
  for (const auto& m : methods) {
    for (const auto& it : items) {
      LabeledScore s;
      s.image_id = it.id;
      s.method = m.name();
      s.label = it.label;
      s.split = it.group;
      try {
        const auto r = score_image(ck, it.image, it.id, m, cfg);
        s.score = r.score;
        s.k_used = r.k_used;
        s.high_freq_mean = r.high_freq_mean;
      } catch (const std::exception& e) {
        s.error = e.what();
      }
      out.push_back(std::move(s));
    }
  }
  return out;
}

struct BenchmarkRun {
  std::vector<LabeledScore> scores;
  BenchmarkReport report;
};

inline BenchmarkRun run_benchmark(const hvae::HvaeCheckpoint& ck, const std::vector<corruptions::BenchmarkItem>& items,
                                  const std::vector<Method>& methods, const scoring::ScoreConfig& cfg) {
  if (items.empty()) throw std::invalid_argument("run_benchmark: empty dataset");
  cfg.validate(ck.config.num_layers());
  BenchmarkRun run;
  run.scores = score_items(ck, items, methods, cfg);
  run.report = build_report(run.scores);
  return run;
}

/// S_KL at every split k ∈ [0, L-1] plus M for one image; row[k] equals
/// score_image(..., skl@k, cfg).score.
struct SplitTable {
  std::vector<std::vector<double>> skl;  // [image][k]
  std::vector<double> high_freq_mean;
  std::vector<bool> positive;
};

inline SplitTable split_table(const hvae::HvaeCheckpoint& ck, const std::vector<corruptions::BenchmarkItem>& items,
                              const scoring::ScoreConfig& cfg) {
  const std::size_t L = ck.config.num_layers();
  SplitTable t;
  for (const auto& it : items) {
    std::vector<double> row;
    for (std::size_t k = 0; k < L; ++k) {
      Rng rng = scoring::image_rng(cfg.seed, it.id);
      row.push_back(scoring::s_kl(ck, it.image, k, rng, cfg.samples, cfg.sampled_inference).score);
    }
    t.skl.push_back(std::move(row));
    t.high_freq_mean.push_back(scoring::high_freq_mean(it.image));
    t.positive.push_back(it.label == corruptions::Label::corrupted);
  }
  return t;
}

inline double adaptive_auroc(const SplitTable& t, std::size_t k1, std::size_t k2, double threshold) {
  std::vector<Scored> v;
  for (std::size_t i = 0; i < t.skl.size(); ++i) {
    const std::size_t k = t.high_freq_mean[i] > threshold ? k1 : k2;
    v.push_back({t.skl[i][k], t.positive[i]});
  }
  return auroc(v);
}

struct Calibration {
  scoring::ScoreConfig config;
  double validation_auroc = 0.0;
  double fixed_k2_validation_auroc = 0.0;
};

/// Grid search over k1 < k2 ≤ L-1 and thresholds T drawn from the validation
/// M values (midpoints, plus one below the minimum and one above the maximum,
/// which reduce to fixed k1 and fixed k2).
/// Ties keep the earliest candidate in (k1, k2, T ascending) order.
inline Calibration calibrate(const SplitTable& t, std::size_t num_layers, scoring::ScoreConfig base) {
  if (num_layers < 2) throw std::invalid_argument("calibrate: need at least two layers");
  std::vector<double> ms = t.high_freq_mean;
  std::sort(ms.begin(), ms.end());
  ms.erase(std::unique(ms.begin(), ms.end()), ms.end());
  std::vector<double> thresholds;
  if (!ms.empty()) thresholds.push_back(ms.front() - 1.0);
  for (std::size_t i = 0; i + 1 < ms.size(); ++i) thresholds.push_back(0.5 * (ms[i] + ms[i + 1]));
  const double above = ms.empty() ? 0.0 : ms.back() + 1.0;
  thresholds.push_back(above);

  Calibration best;
  best.validation_auroc = -1.0;
  for (std::size_t k1 = 0; k1 < num_layers; ++k1) {
    for (std::size_t k2 = k1 + 1; k2 < num_layers; ++k2) {
      for (double th : thresholds) {
        const double a = adaptive_auroc(t, k1, k2, th);
        if (a > best.validation_auroc) {
          best.validation_auroc = a;
          best.config = base;
          best.config.k1 = k1;
          best.config.k2 = k2;
          best.config.threshold = th;
        }
      }
    }
  }
  best.fixed_k2_validation_auroc = adaptive_auroc(t, best.config.k1, best.config.k2, above);
  return best;
}

}  // namespace lqd::evaluation
