#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "lqd/io/png.hpp"
#include "lqd/scoring/visual.hpp"
#include "lqd/service/review.hpp"

namespace lqd::service {

/// HTTP front end for a ReviewSession. All routes live under /api.
class ReviewServer {
 public:
  ReviewServer(const hvae::HvaeCheckpoint& ck, const io::Dataset& dataset, const scoring::ScoreConfig& cfg,
               ReviewSession& session)
      : ck_(ck), dataset_(dataset), cfg_(cfg), session_(session) {
    routes();
  }

  httplib::Server& http() { return srv_; }

  bool listen(const std::string& host, int port) { return srv_.listen(host, port); }

  /// Binds an ephemeral port; returns it (or -1). Serve with run().
  int bind_any(const std::string& host) { return srv_.bind_to_any_port(host); }
  bool run() { return srv_.listen_after_bind(); }
  void stop() { srv_.stop(); }

 private:
  static void json_reply(httplib::Response& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
  }

  static void error_reply(httplib::Response& res, int status, const std::string& msg) {
    json_reply(res, {{"error", msg}}, status);
  }

  static nlohmann::json summary_json(const ReviewRecord& r) {
    nlohmann::json j = to_json(r);
    j.erase("history");
    j.erase("contributions");
    j["original_url"] = "/api/images/" + r.image_id + "/original.png";
    j["clue_url"] = "/api/images/" + r.image_id + "/clue.png";
    return j;
  }

  std::optional<std::size_t> parse_size(const httplib::Request& req, const char* key, std::size_t fallback,
                                        httplib::Response& res) const {
    if (!req.has_param(key)) return fallback;
    const auto v = req.get_param_value(key);
    try {
      std::size_t used = 0;
      const long long n = std::stoll(v, &used);
      if (used != v.size() || n < 0) throw std::invalid_argument(v);
      return static_cast<std::size_t>(n);
    } catch (const std::exception&) {
      error_reply(res, 400, std::string("bad ") + key + " '" + v + "'");
      return std::nullopt;
    }
  }

  // PNGs are pure functions of (checkpoint, config, image), so memoize them.
  std::string cached_png(const std::string& key, const std::function<Tensor()>& make) {
    {
      std::lock_guard lock(png_mu_);
      auto it = png_cache_.find(key);
      if (it != png_cache_.end()) return it->second;
    }
    std::string bytes = io::encode_png(make());
    std::lock_guard lock(png_mu_);
    return png_cache_.emplace(key, std::move(bytes)).first->second;
  }

  void routes() {
    srv_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const std::exception& e) {
        error_reply(res, 500, e.what());
      } catch (...) {
        error_reply(res, 500, "internal error");
      }
    });

    srv_.Get("/api/images", [this](const httplib::Request& req, httplib::Response& res) {
      ReviewSession::Filter f;
      if (req.has_param("min_score")) {
        const auto v = req.get_param_value("min_score");
        try {
          std::size_t used = 0;
          f.min_score = std::stod(v, &used);
          if (used != v.size()) throw std::invalid_argument(v);
        } catch (const std::exception&) {
          return error_reply(res, 400, "bad min_score '" + v + "'");
        }
      }
      if (req.has_param("decision")) {
        const auto d = parse_decision(req.get_param_value("decision"));
        if (!d) return error_reply(res, 400, "bad decision filter");
        f.decision = d;
      }
      const auto limit = parse_size(req, "limit", 50, res);
      if (!limit) return;
      const auto offset = parse_size(req, "offset", 0, res);
      if (!offset) return;
      f.limit = *limit;
      f.offset = *offset;
      const auto page = session_.list(f);
      nlohmann::json recs = nlohmann::json::array();
      for (const auto& r : page.records) recs.push_back(summary_json(r));
      const auto s = session_.summary();
      json_reply(res, {{"records", recs},
                       {"matched", page.matched},
                       {"offset", f.offset},
                       {"limit", f.limit},
                       {"stats", {{"total", s.total}, {"threshold", session_.threshold()}}}});
    });

    srv_.Get(R"(/api/images/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const auto rec = session_.get(req.matches[1]);
      if (!rec) return error_reply(res, 404, "unknown image id");
      json_reply(res, to_json(*rec));
    });

    srv_.Get(R"(/api/images/([^/]+)/(original|clue|strip)\.png)", [this](const httplib::Request& req,
                                                                          httplib::Response& res) {
      const std::string id = req.matches[1], kind = req.matches[2];
      const auto rec = session_.get(id);
      if (!rec) return error_reply(res, 404, "unknown image id");
      const Tensor x = dataset_.load(id);
      std::string bytes;
      if (kind == "original") {
        bytes = io::encode_png(x);
      } else if (kind == "clue") {
        bytes = cached_png("clue/" + id, [&] { return scoring::clue_image(ck_, x, rec->k_used, cfg_, id); });
      } else {
        std::vector<std::size_t> ks;
        for (std::size_t k = 1; k < ck_.config.num_layers(); ++k) ks.push_back(k);
        bytes = cached_png("strip/" + id, [&] { return scoring::strip(ck_, x, ks, cfg_, id); });
      }
      res.set_content(bytes, "image/png");
    });

    srv_.Post(R"(/api/images/([^/]+)/decision)", [this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::parse_error&) {
        return error_reply(res, 400, "body is not JSON");
      }
      if (!body.is_object() || !body.contains("decision") || !body["decision"].is_string()) {
        return error_reply(res, 400, "expected {\"decision\": \"accept\"|\"reject\"}");
      }
      const auto d = parse_decision(body["decision"].get<std::string>());
      if (!d || *d == Decision::pending) return error_reply(res, 400, "decision must be accept or reject");
      std::optional<std::string> note;
      if (body.contains("note") && !body["note"].is_null()) {
        if (!body["note"].is_string()) return error_reply(res, 400, "note must be a string");
        note = body["note"].get<std::string>();
      }
      const auto rec = session_.decide(req.matches[1], *d, note);
      if (!rec) return error_reply(res, 404, "unknown image id");
      json_reply(res, to_json(*rec));
    });

    srv_.Get("/api/session/threshold", [this](const httplib::Request&, httplib::Response& res) {
      json_reply(res, {{"threshold", session_.threshold()}});
    });

    srv_.Put("/api/session/threshold", [this](const httplib::Request& req, httplib::Response& res) {
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
      } catch (const nlohmann::json::parse_error&) {
        return error_reply(res, 400, "body is not JSON");
      }
      if (!body.is_object() || !body.contains("threshold") || !body["threshold"].is_number()) {
        return error_reply(res, 400, "expected {\"threshold\": number}");
      }
      const double t = body["threshold"].get<double>();
      if (!std::isfinite(t)) return error_reply(res, 400, "threshold must be finite");
      session_.set_threshold(t);
      json_reply(res, {{"threshold", session_.threshold()}});
    });

    srv_.Get("/api/session/summary", [this](const httplib::Request&, httplib::Response& res) {
      const auto s = session_.summary();
      json_reply(res, {{"total", s.total},
                       {"pending", s.pending},
                       {"accept", s.accepted},
                       {"reject", s.rejected},
                       {"pending_above_threshold", s.pending_above_threshold},
                       {"threshold", session_.threshold()},
                       {"checkpoint_hash", session_.checkpoint_hash()},
                       {"config_hash", session_.config_hash()}});
    });
  }

  const hvae::HvaeCheckpoint& ck_;
  const io::Dataset& dataset_;
  scoring::ScoreConfig cfg_;
  ReviewSession& session_;
  httplib::Server srv_;
  std::mutex png_mu_;
  std::map<std::string, std::string> png_cache_;
};

/// Build records for every dataset image, reusing cached scores when present.
inline std::vector<ReviewRecord> score_dataset(const hvae::HvaeCheckpoint& ck, const io::Dataset& d,
                                               const scoring::ScoreConfig& cfg, const ScoreCache* cache) {
  std::vector<ReviewRecord> out;
  for (const auto& id : d.all_ids()) {
    if (cache) {
      if (auto hit = cache->load(id)) {
        out.push_back(std::move(*hit));
        continue;
      }
    }
    auto rec = score_record(ck, d.load(id), id, cfg);
    if (cache) cache->store(rec);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace lqd::service
