#include <gtest/gtest.h>

#include <csignal>
#include <thread>

#include <fcntl.h>
#include <sys/wait.h>

#include "lqd/hvae/train.hpp"
#include "lqd/io/files.hpp"
#include "support/fixtures.hpp"

using namespace lqd;
using lqd::testing::TempDir;
namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd = std::string(LQD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (fs::is_regular_file(root)) {
    out[""] = io::read_file(root);
    return out;
  }
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = io::read_file(e.path());
  }
  return out;
}

// A small model so the full pipeline runs in seconds.
std::string write_train_config(const TempDir& dir) {
  hvae::HvaeConfig m;
  m.hidden = 4;
  m.layers = {{2, 16, 16}, {2, 8, 8}, {2, 4, 4}, {2, 2, 2}};
  m.obs_mode = hvae::ObsVariance::fixed;
  m.obs_logvar = -4.0;
  hvae::TrainOptions o;
  o.epochs = 1;
  o.batch = 4;
  const auto p = dir / "train.json";
  io::write_file_atomic(p, nlohmann::json{{"model", hvae::to_json(m)}, {"training", hvae::to_json(o)}}.dump());
  return p.string();
}

// The pipeline's artifacts are built once and reused by every test.
struct Pipeline {
  TempDir dir;
  std::string data, ck, bench, scores;

  Pipeline() {
    const std::string d = dir.path().string();
    data = d + "/data";
    ck = d + "/model.bin";
    bench = d + "/bench";
    scores = d + "/scores.csv";
    const std::string cfg = write_train_config(dir);
    ok = run("synth --train 8 --val 4 --test 8 --seed 3 --out " + data) == 0 &&
         run("train --data " + data + " --config " + cfg + " --out " + ck) == 0 &&
         run("corrupt --data " + data + " --kinds gaussian_noise,jpeg_compression --out " + bench) == 0 &&
         run("score --checkpoint " + ck + " --data " + bench + " --method skl,skl@1,likelihood,llr --out " + scores) == 0;
    train_config = cfg;
  }

  bool ok = false;
  std::string train_config;
};

const Pipeline& pipeline() {
  static const Pipeline p;
  return p;
}

/// Runs `cmd` twice with `{out}` replaced by two fresh paths and compares
/// every written byte.
void expect_reproducible(const std::string& cmd) {
  const auto& p = pipeline();
  ASSERT_TRUE(p.ok);
  TempDir dir;
  std::map<std::string, std::string> first;
  for (const char* name : {"a", "b"}) {
    std::string c = cmd;
    const std::string out = (dir / name).string();
    for (std::size_t at; (at = c.find("{out}")) != std::string::npos;) c.replace(at, 5, out);
    ASSERT_EQ(run(c), 0) << c;
    const auto bytes = tree_bytes(out);
    ASSERT_FALSE(bytes.empty());
    if (first.empty()) {
      first = bytes;
    } else {
      EXPECT_EQ(bytes.size(), first.size());
      for (const auto& [k, v] : first) EXPECT_TRUE(bytes.count(k) && bytes.at(k) == v) << cmd << ": " << k;
    }
  }
}

}  // namespace

TEST(Cli, SynthIsByteReproducible) { expect_reproducible("synth --train 6 --val 2 --test 4 --seed 9 --out {out}"); }

TEST(Cli, TrainIsByteReproducible) {
  expect_reproducible("train --data " + pipeline().data + " --config " + pipeline().train_config + " --out {out}");
}

TEST(Cli, CorruptIsByteReproducible) {
  expect_reproducible("corrupt --data " + pipeline().data + " --kinds all --severity 2 --out {out}");
}

TEST(Cli, ScoreIsByteReproducible) {
  expect_reproducible("score --checkpoint " + pipeline().ck + " --data " + pipeline().bench +
                      " --method skl,skl@2,likelihood,llr --out {out}");
}

TEST(Cli, CalibrateIsByteReproducible) {
  expect_reproducible("calibrate --checkpoint " + pipeline().ck + " --data " + pipeline().bench + " --out {out}");
}

TEST(Cli, EvaluateIsByteReproducible) {
  expect_reproducible("evaluate --scores " + pipeline().scores + " --out {out}");
}

TEST(Cli, VisualizeIsByteReproducible) {
  expect_reproducible("visualize --checkpoint " + pipeline().ck + " --data " + pipeline().bench +
                      " --k 1,2 --split test --out {out}");
}

namespace {

// Starts `serve` on an ephemeral port, waits for its banner, then stops it
// with SIGTERM. Returns the exit code.
int serve_once(const std::string& manifest, const std::string& cache) {
  const auto& p = pipeline();
  int fds[2];
  if (::pipe(fds) != 0) return -1;
  const pid_t pid = ::fork();
  if (pid == 0) {
    ::dup2(fds[1], 1);
    ::close(fds[0]);
    const int devnull = ::open("/dev/null", O_WRONLY);
    ::dup2(devnull, 2);
    ::execl(LQD_CLI_PATH, LQD_CLI_PATH, "serve", "--checkpoint", p.ck.c_str(), "--data", p.bench.c_str(), "--port", "0",
            "--manifest", manifest.c_str(), "--cache", cache.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(fds[1]);
  std::string banner;
  char c;
  while (::read(fds[0], &c, 1) == 1 && c != '\n') banner += c;
  ::close(fds[0]);
  ::kill(pid, SIGTERM);
  int status = 0;
  ::waitpid(pid, &status, 0);
  if (banner.rfind("serving", 0) != 0) return -1;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ServeWritesReproducibleManifestAndStopsCleanly) {
  ASSERT_TRUE(pipeline().ok);
  TempDir dir;
  ASSERT_EQ(serve_once((dir / "a.json").string(), (dir / "cache-a").string()), 0);
  ASSERT_EQ(serve_once((dir / "b.json").string(), (dir / "cache-b").string()), 0);
  EXPECT_EQ(io::read_file(dir / "a.json"), io::read_file(dir / "b.json"));
  // Restart on an existing manifest reuses it.
  ASSERT_EQ(serve_once((dir / "a.json").string(), (dir / "cache-a").string()), 0);
  EXPECT_EQ(io::read_file(dir / "a.json"), io::read_file(dir / "b.json"));
}

TEST(Cli, UsageErrorsExitWithTwo) {
  const auto& p = pipeline();
  ASSERT_TRUE(p.ok);
  TempDir dir;
  const std::string out = (dir / "x").string();
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("bogus"), 2);
  EXPECT_EQ(run("synth"), 2);
  EXPECT_EQ(run("corrupt --data " + p.data + " --kinds fog --out " + out), 2);
  EXPECT_EQ(run("corrupt --data " + p.data + " --severity 6 --out " + out), 2);
  EXPECT_EQ(run("corrupt --data " + (dir / "missing").string() + " --out " + out), 2);
  EXPECT_EQ(run("score --checkpoint " + p.ck + " --data " + p.bench + " --method skl@9 --out " + out), 2);
  EXPECT_EQ(run("score --checkpoint " + p.ck + " --data " + p.bench + " --method magic --out " + out), 2);
  EXPECT_EQ(run("score --checkpoint " + p.bench + " --data " + p.bench + " --out " + out), 2);
  EXPECT_EQ(run("evaluate --scores " + (dir / "none.csv").string() + " --out " + out), 2);
  io::write_file_atomic(dir / "bad.csv", "image_id,method\n");
  EXPECT_EQ(run("evaluate --scores " + (dir / "bad.csv").string() + " --out " + out), 2);
  EXPECT_EQ(run("visualize --checkpoint " + p.ck + " --data " + p.bench + " --k 7 --out " + out), 2);
  EXPECT_FALSE(fs::exists(out));
}

TEST(Cli, RuntimeFailuresExitWithOne) {
  const auto& p = pipeline();
  ASSERT_TRUE(p.ok);
  TempDir dir;
  fs::create_directories(dir / "taken" / "inner");
  EXPECT_EQ(run("score --checkpoint " + p.ck + " --data " + p.bench + " --out " + (dir / "taken").string()), 1);
}

TEST(Cli, HelpExitsWithZero) { EXPECT_EQ(run("--help"), 0); }
