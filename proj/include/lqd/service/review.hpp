#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lqd/evaluation/runner.hpp"
#include "lqd/hvae/checkpoint_io.hpp"
#include "lqd/io/dataset.hpp"
#include "lqd/io/files.hpp"

namespace lqd::service {

namespace fs = std::filesystem;

enum class Decision { pending, accept, reject };

inline std::string_view decision_name(Decision d) {
  switch (d) {
    case Decision::pending: return "pending";
    case Decision::accept: return "accept";
    case Decision::reject: return "reject";
  }
  return "pending";
}

inline std::optional<Decision> parse_decision(std::string_view s) {
  if (s == "pending") return Decision::pending;
  if (s == "accept") return Decision::accept;
  if (s == "reject") return Decision::reject;
  return std::nullopt;
}

struct DecisionEvent {
  Decision decision = Decision::pending;
  std::int64_t at_ms = 0;
  std::optional<std::string> note;
};

struct ReviewRecord {
  std::string image_id;
  double score = 0.0;
  std::size_t k_used = 0;
  double high_freq_mean = 0.0;
  std::vector<scoring::LayerContribution> contributions;
  Decision decision = Decision::pending;
  std::optional<std::int64_t> decided_at_ms;
  std::optional<std::string> note;
  std::vector<DecisionEvent> history;
};

class SessionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string hex64(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string checkpoint_hash(const hvae::HvaeCheckpoint& ck) { return hex64(fnv1a(hvae::checkpoint_bytes(ck))); }

inline std::string config_hash(const scoring::ScoreConfig& cfg) { return hex64(fnv1a(scoring::to_json(cfg).dump())); }

inline nlohmann::json to_json(const ReviewRecord& r) {
  nlohmann::json contrib = nlohmann::json::array();
  for (const auto& c : r.contributions) contrib.push_back({{"layer", c.layer}, {"kl", c.kl}});
  nlohmann::json hist = nlohmann::json::array();
  for (const auto& e : r.history) {
    nlohmann::json o = {{"decision", std::string(decision_name(e.decision))}, {"at_ms", e.at_ms}};
    if (e.note) o["note"] = *e.note;
    hist.push_back(o);
  }
  nlohmann::json j = {{"image_id", r.image_id},       {"score", r.score},
                      {"k_used", r.k_used},           {"M", r.high_freq_mean},
                      {"contributions", contrib},     {"decision", std::string(decision_name(r.decision))},
                      {"history", hist}};
  j["decided_at_ms"] = r.decided_at_ms ? nlohmann::json(*r.decided_at_ms) : nlohmann::json(nullptr);
  j["note"] = r.note ? nlohmann::json(*r.note) : nlohmann::json(nullptr);
  return j;
}

inline ReviewRecord record_from_json(const nlohmann::json& j) {
  ReviewRecord r;
  r.image_id = j.at("image_id").get<std::string>();
  r.score = j.at("score").get<double>();
  r.k_used = j.at("k_used").get<std::size_t>();
  r.high_freq_mean = j.at("M").get<double>();
  for (const auto& c : j.at("contributions")) r.contributions.push_back({c.at("layer").get<std::size_t>(), c.at("kl").get<double>()});
  const auto d = parse_decision(j.at("decision").get<std::string>());
  if (!d) throw SessionError("record " + r.image_id + ": bad decision");
  r.decision = *d;
  if (!j.at("decided_at_ms").is_null()) r.decided_at_ms = j.at("decided_at_ms").get<std::int64_t>();
  if (!j.at("note").is_null()) r.note = j.at("note").get<std::string>();
  for (const auto& e : j.at("history")) {
    DecisionEvent ev;
    const auto ed = parse_decision(e.at("decision").get<std::string>());
    if (!ed || *ed == Decision::pending) throw SessionError("record " + r.image_id + ": bad history entry");
    ev.decision = *ed;
    ev.at_ms = e.at("at_ms").get<std::int64_t>();
    if (e.contains("note")) ev.note = e.at("note").get<std::string>();
    r.history.push_back(std::move(ev));
  }
  return r;
}

inline std::int64_t now_ms() {
  return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch()).count();
}

/// Review state for one dataset under one (checkpoint, score config) pair.
/// Every mutation is persisted before it is acknowledged.
class ReviewSession {
 public:
  struct Summary {
    std::size_t total = 0, pending = 0, accepted = 0, rejected = 0, pending_above_threshold = 0;
  };

  struct Page {
    std::vector<ReviewRecord> records;
    std::size_t matched = 0;
  };

  struct Filter {
    std::optional<double> min_score;
    std::optional<Decision> decision;
    std::size_t offset = 0;
    std::size_t limit = 50;
  };

  /// Open `manifest_path` if it exists (refusing on corruption or hash
  /// mismatch), otherwise create it from `records`.
  static ReviewSession open_or_create(const fs::path& manifest_path, const std::string& dataset_path,
                                      const std::string& ck_hash, const std::string& cfg_hash, double threshold,
                                      const std::function<std::vector<ReviewRecord>()>& make_records) {
    ReviewSession s;
    s.path_ = manifest_path;
    if (fs::exists(manifest_path)) {
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(io::read_file(manifest_path));
        s.dataset_ = j.at("dataset").get<std::string>();
        s.checkpoint_hash_ = j.at("checkpoint_hash").get<std::string>();
        s.config_hash_ = j.at("config_hash").get<std::string>();
        s.threshold_ = j.at("threshold").get<double>();
        for (const auto& r : j.at("records")) s.records_.push_back(record_from_json(r));
      } catch (const nlohmann::json::exception& e) {
        throw SessionError("review manifest " + manifest_path.string() + " is corrupt: " + e.what());
      }
      if (s.checkpoint_hash_ != ck_hash || s.config_hash_ != cfg_hash) {
        throw SessionError("review manifest " + manifest_path.string() +
                           " was created for a different checkpoint or score config");
      }
      s.sort();
      return s;
    }
    s.dataset_ = dataset_path;
    s.checkpoint_hash_ = ck_hash;
    s.config_hash_ = cfg_hash;
    s.threshold_ = threshold;
    s.records_ = make_records();
    s.sort();
    s.persist();
    return s;
  }

  ReviewSession(ReviewSession&& o) noexcept
      : path_(std::move(o.path_)),
        dataset_(std::move(o.dataset_)),
        checkpoint_hash_(std::move(o.checkpoint_hash_)),
        config_hash_(std::move(o.config_hash_)),
        threshold_(o.threshold_),
        records_(std::move(o.records_)) {}

  Page list(const Filter& f) const {
    std::lock_guard lock(mu_);
    Page p;
    for (const auto& r : records_) {
      if (f.min_score && !(r.score >= *f.min_score)) continue;
      if (f.decision && r.decision != *f.decision) continue;
      if (p.matched >= f.offset && p.records.size() < f.limit) p.records.push_back(r);
      ++p.matched;
    }
    return p;
  }

  std::optional<ReviewRecord> get(const std::string& id) const {
    std::lock_guard lock(mu_);
    for (const auto& r : records_) {
      if (r.image_id == id) return r;
    }
    return std::nullopt;
  }

  /// Record a decision; returns the updated record, or nullopt for an unknown id.
  std::optional<ReviewRecord> decide(const std::string& id, Decision d, std::optional<std::string> note) {
    if (d == Decision::pending) throw std::invalid_argument("decision must be accept or reject");
    std::lock_guard lock(mu_);
    auto it = std::find_if(records_.begin(), records_.end(), [&](const ReviewRecord& r) { return r.image_id == id; });
    if (it == records_.end()) return std::nullopt;
    const ReviewRecord before = *it;
    std::int64_t t = now_ms();
    if (it->decided_at_ms) t = std::max(t, *it->decided_at_ms);
    it->decision = d;
    it->decided_at_ms = t;
    it->note = note;
    it->history.push_back({d, t, note});
    try {
      persist_locked();
    } catch (...) {
      *it = before;
      throw;
    }
    return *it;
  }

  double threshold() const {
    std::lock_guard lock(mu_);
    return threshold_;
  }

  void set_threshold(double t) {
    if (!std::isfinite(t)) throw std::invalid_argument("threshold must be finite");
    std::lock_guard lock(mu_);
    const double before = threshold_;
    threshold_ = t;
    try {
      persist_locked();
    } catch (...) {
      threshold_ = before;
      throw;
    }
  }

  Summary summary() const {
    std::lock_guard lock(mu_);
    Summary s;
    for (const auto& r : records_) {
      ++s.total;
      if (r.decision == Decision::pending) {
        ++s.pending;
        if (r.score >= threshold_) ++s.pending_above_threshold;
      } else {
        ++(r.decision == Decision::accept ? s.accepted : s.rejected);
      }
    }
    return s;
  }

  const std::string& checkpoint_hash() const { return checkpoint_hash_; }
  const std::string& config_hash() const { return config_hash_; }
  const std::string& dataset() const { return dataset_; }
  const fs::path& path() const { return path_; }

  nlohmann::json to_json() const {
    std::lock_guard lock(mu_);
    return json_locked();
  }

 private:
  ReviewSession() = default;

  void sort() {
    std::stable_sort(records_.begin(), records_.end(), [](const ReviewRecord& a, const ReviewRecord& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.image_id < b.image_id;
    });
  }

  nlohmann::json json_locked() const {
    nlohmann::json recs = nlohmann::json::array();
    for (const auto& r : records_) recs.push_back(service::to_json(r));
    return {{"format", "lqd-review"},         {"version", 1},        {"dataset", dataset_},
            {"checkpoint_hash", checkpoint_hash_}, {"config_hash", config_hash_}, {"threshold", threshold_},
            {"records", recs}};
  }

  void persist_locked() const { io::write_file_atomic(path_, json_locked().dump(2) + "\n"); }

  void persist() const {
    std::lock_guard lock(mu_);
    persist_locked();
  }

  fs::path path_;
  std::string dataset_;
  std::string checkpoint_hash_;
  std::string config_hash_;
  double threshold_ = 0.0;
  std::vector<ReviewRecord> records_;
  mutable std::mutex mu_;
};

/// Per-image score cache keyed by (checkpoint hash, config hash, image id).
class ScoreCache {
 public:
  ScoreCache(fs::path dir, const std::string& ck_hash, const std::string& cfg_hash)
      : dir_(std::move(dir) / (ck_hash + "-" + cfg_hash)) {}

  std::optional<ReviewRecord> load(const std::string& id) const {
    const auto p = dir_ / (id + ".json");
    if (!fs::exists(p)) return std::nullopt;
    try {
      return record_from_json(nlohmann::json::parse(io::read_file(p)));
    } catch (const std::exception&) {
      return std::nullopt;  // unreadable entries are recomputed
    }
  }

  void store(const ReviewRecord& r) const { io::write_file_atomic(dir_ / (r.image_id + ".json"), to_json(r).dump() + "\n"); }

 private:
  fs::path dir_;
};

/// Adaptive S_KL record for one image (pending, no history).
inline ReviewRecord score_record(const hvae::HvaeCheckpoint& ck, const Tensor& x, const std::string& id,
                                 const scoring::ScoreConfig& cfg) {
  const auto r = evaluation::score_image(ck, x, id, {evaluation::MethodKind::skl, 0}, cfg);
  ReviewRecord rec;
  rec.image_id = id;
  rec.score = r.score;
  rec.k_used = r.k_used;
  rec.high_freq_mean = r.high_freq_mean;
  rec.contributions = r.contributions;
  return rec;
}

}  // namespace lqd::service
