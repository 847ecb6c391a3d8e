#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lqd/corruptions/benchmark.hpp"
#include "lqd/evaluation/metrics.hpp"

namespace lqd::evaluation {

/// One scored image. `split` names the benchmark split the image belongs to
/// (a corruption kind, or "pooled").
struct LabeledScore {
  std::string image_id;
  std::string method;
  double score = 0.0;
  std::size_t k_used = 0;
  double high_freq_mean = 0.0;
  corruptions::Label label = corruptions::Label::clean;
  std::string split;
  std::optional<std::string> error;  // set when scoring this image failed
};

struct ReportRow {
  std::string method;
  std::string split;
  std::size_t count = 0;
  std::optional<MetricTriple> metrics;
  std::string error;
};

struct BenchmarkReport {
  std::vector<std::string> methods;
  std::vector<std::string> kinds;  // per-kind splits in table order
  std::vector<ReportRow> rows;     // per (method, kind) and per (method, pooled)
  std::map<std::string, MetricTriple> average;  // mean over the method's kind rows

  const ReportRow* find(const std::string& method, const std::string& split) const {
    for (const auto& r : rows) {
      if (r.method == method && r.split == split) return &r;
    }
    return nullptr;
  }

  std::optional<MetricTriple> pooled(const std::string& method) const {
    const auto* r = find(method, std::string(corruptions::kPooledGroup));
    return r ? r->metrics : std::nullopt;
  }
};

namespace detail {

// Known kinds first in table order, unknown split names after, alphabetically.
inline std::vector<std::string> order_splits(const std::set<std::string>& names) {
  std::vector<std::string> known, other;
  for (const auto& n : names) {
    if (n == corruptions::kPooledGroup) continue;
    (corruptions::parse_kind(n) ? known : other).push_back(n);
  }
  std::sort(known.begin(), known.end(), [](const std::string& a, const std::string& b) {
    return corruptions::table_rank(*corruptions::parse_kind(a)) < corruptions::table_rank(*corruptions::parse_kind(b));
  });
  known.insert(known.end(), other.begin(), other.end());
  return known;
}

}  // namespace detail

/// Metrics per (method, split) plus per-method averages over kind rows.
/// Cells containing a failed image carry an error instead of metrics.
inline BenchmarkReport build_report(const std::vector<LabeledScore>& scores) {
  if (scores.empty()) throw MetricError("report: no scores");
  BenchmarkReport rep;
  std::set<std::string> split_names;
  std::map<std::pair<std::string, std::string>, std::vector<const LabeledScore*>> cells;
  for (const auto& s : scores) {
    if (std::find(rep.methods.begin(), rep.methods.end(), s.method) == rep.methods.end()) rep.methods.push_back(s.method);
    split_names.insert(s.split);
    cells[{s.method, s.split}].push_back(&s);
  }
  rep.kinds = detail::order_splits(split_names);
  std::vector<std::string> all = rep.kinds;
  if (split_names.count(std::string(corruptions::kPooledGroup))) all.emplace_back(corruptions::kPooledGroup);

  for (const auto& m : rep.methods) {
    MetricTriple sum;
    std::size_t ok = 0;
    for (const auto& sp : all) {
      ReportRow row{m, sp, 0, std::nullopt, ""};
      auto it = cells.find({m, sp});
      if (it == cells.end()) {
        row.error = "no scores";
      } else {
        row.count = it->second.size();
        std::vector<Scored> v;
        for (const auto* s : it->second) {
          if (s->error) {
            row.error = "scoring failed for " + s->image_id + ": " + *s->error;
            break;
          }
          v.push_back({s->score, s->label == corruptions::Label::corrupted});
        }
        if (row.error.empty()) {
          try {
            row.metrics = all_metrics(v);
          } catch (const MetricError& e) {
            row.error = e.what();
          }
        }
      }
      if (row.metrics && sp != corruptions::kPooledGroup) {
        sum.auroc += row.metrics->auroc;
        sum.auprc += row.metrics->auprc;
        sum.fpr80 += row.metrics->fpr80;
        ++ok;
      }
      rep.rows.push_back(std::move(row));
    }
    if (ok > 0) {
      const double n = static_cast<double>(ok);
      rep.average[m] = {sum.auroc / n, sum.auprc / n, sum.fpr80 / n};
    }
  }
  return rep;
}

inline nlohmann::json triple_json(const MetricTriple& t) {
  return {{"auroc", t.auroc}, {"auprc", t.auprc}, {"fpr80", t.fpr80}};
}

inline nlohmann::json to_json(const BenchmarkReport& r) {
  nlohmann::json j;
  j["methods"] = r.methods;
  j["kinds"] = r.kinds;
  j["rows"] = nlohmann::json::array();
  for (const auto& row : r.rows) {
    nlohmann::json o = {{"method", row.method}, {"split", row.split}, {"count", row.count}};
    if (row.metrics) {
      o["metrics"] = triple_json(*row.metrics);
    } else {
      o["error"] = row.error;
    }
    j["rows"].push_back(o);
  }
  j["average"] = nlohmann::json::object();
  for (const auto& [m, t] : r.average) j["average"][m] = triple_json(t);
  return j;
}

/// Aligned text table: one line per split, one AUROC/AUPRC/FPR80 column group
/// per method, then the average line.
inline std::string to_text(const BenchmarkReport& r) {
  auto label = [](const std::string& split) {
    if (split == corruptions::kPooledGroup) return std::string("All (pooled)");
    const auto k = corruptions::parse_kind(split);
    return k ? std::string(corruptions::title(*k)) : split;
  };
  std::size_t w0 = 12;
  for (const auto& k : r.kinds) w0 = std::max(w0, label(k).size());
  std::ostringstream os;
  char buf[64];
  auto pad = [](std::string s, std::size_t w) {
    s.resize(std::max(s.size(), w), ' ');
    return s;
  };
  os << pad("", w0);
  for (const auto& m : r.methods) {
    std::snprintf(buf, sizeof buf, " | %-22s", m.c_str());
    os << buf;
  }
  os << "\n" << pad("", w0);
  for (std::size_t i = 0; i < r.methods.size(); ++i) os << " |  AUROC   AUPRC   FPR80";
  os << "\n" << std::string(w0 + r.methods.size() * 25, '-') << "\n";
  auto cells = [&](const std::optional<MetricTriple>& t) {
    if (!t) return std::string(" |    --      --      --");
    std::snprintf(buf, sizeof buf, " | %6.3f  %6.3f  %6.3f", t->auroc, t->auprc, t->fpr80);
    return std::string(buf);
  };
  std::vector<std::string> lines = r.kinds;
  for (const auto& k : lines) {
    os << pad(label(k), w0);
    for (const auto& m : r.methods) {
      const auto* row = r.find(m, k);
      os << cells(row ? row->metrics : std::nullopt);
    }
    os << "\n";
  }
  os << std::string(w0 + r.methods.size() * 25, '-') << "\n" << pad("Average", w0);
  for (const auto& m : r.methods) {
    auto it = r.average.find(m);
    os << cells(it == r.average.end() ? std::nullopt : std::optional<MetricTriple>(it->second));
  }
  os << "\n";
  bool any_pooled = false;
  for (const auto& m : r.methods) any_pooled = any_pooled || r.find(m, std::string(corruptions::kPooledGroup));
  if (any_pooled) {
    os << pad(label(std::string(corruptions::kPooledGroup)), w0);
    for (const auto& m : r.methods) os << cells(r.pooled(m));
    os << "\n";
  }
  return os.str();
}

}  // namespace lqd::evaluation
