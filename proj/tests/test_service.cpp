#include <gtest/gtest.h>

#include <csignal>
#include <thread>

#include <sys/wait.h>

#include "lqd/io/dataset.hpp"
#include "lqd/service/server.hpp"
#include "support/fixtures.hpp"

using namespace lqd;
using namespace lqd::service;
using lqd::testing::TempDir;

namespace {

struct Fixture {
  TempDir dir;
  hvae::HvaeCheckpoint ck = hvae::initialize(lqd::testing::tiny_config(), 21);
  scoring::ScoreConfig cfg{1, 2, 0.5};
  io::Dataset data;

  Fixture() {
    data.root = dir / "data";
    std::vector<Tensor> images;
    for (std::uint64_t i = 0; i < 6; ++i) {
      const std::string id = "im" + std::to_string(i);
      data.entries.push_back({id, "", id, "", corruptions::Label::clean, std::nullopt});
      images.push_back(lqd::testing::tiny_image(i));
    }
    io::write_dataset(data, images);
  }

  ReviewSession open(const std::string& ck_hash, const std::string& cfg_hash, int* scored = nullptr) {
    return ReviewSession::open_or_create(dir / "review.json", data.root.string(), ck_hash, cfg_hash, 0.0, [&] {
      if (scored) ++*scored;
      return score_dataset(ck, data, cfg, nullptr);
    });
  }

  ReviewSession open() { return open(checkpoint_hash(ck), config_hash(cfg)); }
};

}  // namespace

TEST(Review, RecordsSortedByScoreDescending) {
  Fixture f;
  auto s = f.open();
  const auto page = s.list({});
  ASSERT_EQ(page.matched, 6u);
  for (std::size_t i = 1; i < page.records.size(); ++i) EXPECT_GE(page.records[i - 1].score, page.records[i].score);
  for (const auto& r : page.records) {
    EXPECT_EQ(r.decision, Decision::pending);
    EXPECT_TRUE(r.k_used == 1 || r.k_used == 2);
    EXPECT_FALSE(r.contributions.empty());
  }
}

TEST(Review, MinScoreFilterAndPaging) {
  Fixture f;
  auto s = f.open();
  const auto all = s.list({}).records;
  const double cut = all[2].score;
  const auto above = s.list({cut, std::nullopt, 0, 50});
  for (const auto& r : above.records) EXPECT_GE(r.score, cut);
  std::size_t want = 0;
  for (const auto& r : all) want += r.score >= cut ? 1 : 0;
  EXPECT_EQ(above.matched, want);
  const auto page = s.list({std::nullopt, std::nullopt, 2, 3});
  ASSERT_EQ(page.records.size(), 3u);
  EXPECT_EQ(page.records[0].image_id, all[2].image_id);
  EXPECT_EQ(page.matched, 6u);
}

TEST(Review, DecisionsPersistAcrossRestartWithoutRescoring) {
  Fixture f;
  int scored = 0;
  std::string id;
  {
    auto s = f.open(checkpoint_hash(f.ck), config_hash(f.cfg), &scored);
    id = s.list({}).records[0].image_id;
    ASSERT_TRUE(s.decide(id, Decision::reject, "blurry"));
    s.set_threshold(0.25);
  }
  auto s = f.open(checkpoint_hash(f.ck), config_hash(f.cfg), &scored);
  EXPECT_EQ(scored, 1);
  const auto r = s.get(id);
  ASSERT_TRUE(r);
  EXPECT_EQ(r->decision, Decision::reject);
  EXPECT_EQ(r->note, "blurry");
  EXPECT_EQ(r->history.size(), 1u);
  EXPECT_EQ(s.threshold(), 0.25);
  EXPECT_EQ(s.summary().rejected, 1u);
  EXPECT_EQ(s.list({std::nullopt, Decision::reject, 0, 50}).matched, 1u);
}

TEST(Review, HistoryTimestampsNeverDecrease) {
  Fixture f;
  auto s = f.open();
  const std::string id = s.list({}).records[3].image_id;
  for (int i = 0; i < 20; ++i) s.decide(id, i % 2 ? Decision::accept : Decision::reject, std::nullopt);
  const auto r = s.get(id);
  ASSERT_EQ(r->history.size(), 20u);
  for (std::size_t i = 1; i < r->history.size(); ++i) EXPECT_GE(r->history[i].at_ms, r->history[i - 1].at_ms);
  EXPECT_EQ(r->decision, Decision::accept);
  EXPECT_FALSE(s.decide("missing", Decision::accept, std::nullopt));
  EXPECT_THROW(s.decide(id, Decision::pending, std::nullopt), std::invalid_argument);
}

TEST(Review, RefusesManifestFromAnotherModelOrConfig) {
  Fixture f;
  { auto s = f.open(); }
  EXPECT_THROW(f.open("0000000000000000", config_hash(f.cfg)), SessionError);
  EXPECT_THROW(f.open(checkpoint_hash(f.ck), "0000000000000000"), SessionError);
  io::write_file_atomic(f.dir / "review.json", "{\"records\": 3");
  EXPECT_THROW(f.open(), SessionError);
}

TEST(Review, ScoreCacheReusesRecords) {
  Fixture f;
  const ScoreCache cache(f.dir / "cache", checkpoint_hash(f.ck), config_hash(f.cfg));
  const auto first = score_dataset(f.ck, f.data, f.cfg, &cache);
  auto cached = cache.load(first[0].image_id);
  ASSERT_TRUE(cached);
  EXPECT_EQ(cached->score, first[0].score);
  const auto second = score_dataset(f.ck, f.data, f.cfg, &cache);
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_EQ(second[i].score, first[i].score);
}

TEST(Review, KilledWriterLeavesOldOrNewManifest) {
  TempDir dir;
  const auto p = dir / "state.json";
  const std::string small = nlohmann::json{{"v", 0}}.dump();
  io::write_file_atomic(p, small);
  std::string big(1 << 20, 'x');
  const std::string large = nlohmann::json{{"v", 1}, {"pad", big}}.dump();
  for (int round = 0; round < 5; ++round) {
    const pid_t child = ::fork();
    ASSERT_GE(child, 0);
    if (child == 0) {
      for (;;) {
        io::write_file_atomic(p, large);
        io::write_file_atomic(p, small);
      }
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(20 + 15 * round));
    ::kill(child, SIGKILL);
    int status = 0;
    ::waitpid(child, &status, 0);
    const std::string got = io::read_file(p);
    EXPECT_TRUE(got == small || got == large) << "torn write of " << got.size() << " bytes";
    EXPECT_TRUE(nlohmann::json::accept(got));
  }
}

namespace {

struct LiveServer {
  Fixture f;
  ReviewSession session = f.open();
  ReviewServer server{f.ck, f.data, f.cfg, session};
  int port = server.bind_any("127.0.0.1");
  std::thread thread{[this] { server.run(); }};
  httplib::Client client{"127.0.0.1", port};

  LiveServer() { server.http().wait_until_ready(); }
  ~LiveServer() {
    server.stop();
    thread.join();
  }
};

}  // namespace

TEST(Api, ListDetailDecisionAndSummary) {
  LiveServer s;
  ASSERT_GT(s.port, 0);
  auto res = s.client.Get("/api/images?limit=4");
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  auto j = nlohmann::json::parse(res->body);
  ASSERT_EQ(j["records"].size(), 4u);
  EXPECT_EQ(j["matched"], 6);
  const std::string id = j["records"][0]["image_id"];
  EXPECT_EQ(j["records"][0]["clue_url"], "/api/images/" + id + "/clue.png");

  res = s.client.Get("/api/images/" + id);
  ASSERT_EQ(res->status, 200);
  EXPECT_TRUE(nlohmann::json::parse(res->body).contains("contributions"));

  for (const char* kind : {"original", "clue", "strip"}) {
    res = s.client.Get("/api/images/" + id + "/" + kind + ".png");
    ASSERT_EQ(res->status, 200) << kind;
    EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
    EXPECT_NO_THROW(io::decode_png(res->body));
  }

  res = s.client.Post("/api/images/" + id + "/decision", R"({"decision":"reject","note":"noisy"})", "application/json");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(nlohmann::json::parse(res->body)["decision"], "reject");

  res = s.client.Get("/api/images?decision=reject");
  EXPECT_EQ(nlohmann::json::parse(res->body)["matched"], 1);

  res = s.client.Put("/api/session/threshold", R"({"threshold": 1e9})", "application/json");
  ASSERT_EQ(res->status, 200);
  res = s.client.Get("/api/session/summary");
  j = nlohmann::json::parse(res->body);
  EXPECT_EQ(j["total"], 6);
  EXPECT_EQ(j["reject"], 1);
  EXPECT_EQ(j["pending"], 5);
  EXPECT_EQ(j["pending_above_threshold"], 0);
  EXPECT_EQ(j["threshold"], 1e9);
  EXPECT_EQ(s.session.threshold(), 1e9);
}

TEST(Api, RejectsBadRequests) {
  LiveServer s;
  EXPECT_EQ(s.client.Get("/api/images/nope")->status, 404);
  EXPECT_EQ(s.client.Get("/api/images/nope/clue.png")->status, 404);
  EXPECT_EQ(s.client.Get("/api/images?min_score=abc")->status, 400);
  EXPECT_EQ(s.client.Get("/api/images?limit=-1")->status, 400);
  EXPECT_EQ(s.client.Get("/api/images?decision=maybe")->status, 400);
  const std::string id = s.session.list({}).records[0].image_id;
  EXPECT_EQ(s.client.Post("/api/images/" + id + "/decision", "nope", "application/json")->status, 400);
  EXPECT_EQ(s.client.Post("/api/images/" + id + "/decision", R"({"decision":"pending"})", "application/json")->status,
            400);
  EXPECT_EQ(s.client.Post("/api/images/" + id + "/decision", R"({"decision":"accept","note":5})", "application/json")
                ->status,
            400);
  EXPECT_EQ(s.client.Post("/api/images/nope/decision", R"({"decision":"accept"})", "application/json")->status, 404);
  EXPECT_EQ(s.client.Put("/api/session/threshold", R"({"threshold":"high"})", "application/json")->status, 400);
  EXPECT_EQ(s.session.summary().pending, 6u);
}

TEST(Api, ConcurrentDecisionsAllLand) {
  LiveServer s;
  const auto ids = s.session.list({}).records;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < 4; ++w) {
    workers.emplace_back([&, w] {
      httplib::Client c("127.0.0.1", s.port);
      for (int i = 0; i < 10; ++i) {
        c.Post("/api/images/" + ids[(w + i) % ids.size()].image_id + "/decision", R"({"decision":"accept"})",
               "application/json");
      }
    });
  }
  for (auto& t : workers) t.join();
  std::size_t events = 0;
  for (const auto& r : s.session.list({}).records) events += r.history.size();
  EXPECT_EQ(events, 40u);
  const auto disk = nlohmann::json::parse(io::read_file(s.session.path()));
  std::size_t on_disk = 0;
  for (const auto& r : disk["records"]) on_disk += r["history"].size();
  EXPECT_EQ(on_disk, 40u);
}
