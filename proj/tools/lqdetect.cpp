// lqdetect: train / corrupt / score / evaluate / visualize / serve.

#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <pthread.h>
#include <unistd.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "lqd/corruptions/benchmark.hpp"
#include "lqd/data/procedural.hpp"
#include "lqd/evaluation/runner.hpp"
#include "lqd/hvae/checkpoint_io.hpp"
#include "lqd/hvae/train.hpp"
#include "lqd/io/csv.hpp"
#include "lqd/io/dataset.hpp"
#include "lqd/scoring/visual.hpp"
#include "lqd/service/server.hpp"

namespace fs = std::filesystem;
using namespace lqd;

namespace {

/// Bad input from the user: exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

nlohmann::json read_json_file(const std::string& path) {
  try {
    return nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(path + ": " + e.what());
  } catch (const io::IoError& e) {
    throw UsageError(e.what());
  }
}

scoring::ScoreConfig load_score_config(const std::string& path, std::optional<std::uint64_t> seed) {
  scoring::ScoreConfig cfg;
  if (!path.empty()) cfg = scoring::score_config_from_json(read_json_file(path));
  if (seed) cfg.seed = *seed;
  return cfg;
}

hvae::HvaeCheckpoint load_ck(const std::string& path) {
  try {
    return hvae::load_checkpoint(path);
  } catch (const std::exception& e) {
    throw UsageError("cannot load checkpoint " + path + ": " + e.what());
  }
}

void require_compatible(const hvae::HvaeCheckpoint& ck, const std::vector<corruptions::BenchmarkItem>& items) {
  const Shape want{ck.config.image_channels, ck.config.image_height, ck.config.image_width};
  for (const auto& it : items) {
    if (it.image.shape() != want) {
      throw UsageError("image '" + it.id + "' has shape " + shape_str(it.image.shape()) + " but the model expects " +
                       shape_str(want));
    }
  }
}

std::vector<std::size_t> parse_k_list(const std::string& s) {
  std::vector<std::size_t> ks;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      const long v = std::stol(tok, &used);
      if (used != tok.size() || v < 0) throw std::invalid_argument(tok);
      ks.push_back(static_cast<std::size_t>(v));
    } catch (const std::exception&) {
      throw UsageError("bad k value '" + tok + "'");
    }
  }
  return ks;
}

std::string supported_kinds() {
  std::string s;
  for (auto k : corruptions::kAllKinds) s += (s.empty() ? "" : ", ") + std::string(corruptions::name(k));
  return s;
}

// ---- synth ---------------------------------------------------------------

struct SynthArgs {
  std::size_t train = 2000, val = 200, test = 400;
  std::uint64_t seed = 0;
  std::string out;
};

int cmd_synth(const SynthArgs& a) {
  io::Dataset d;
  d.root = a.out;
  d.meta = {{"generator", "procedural_scene"}, {"seed", a.seed}};
  std::vector<Tensor> images;
  const std::pair<const char*, std::size_t> parts[] = {{"train", a.train}, {"val", a.val}, {"test", a.test}};
  std::size_t index = 0;
  for (const auto& [split, count] : parts) {
    auto& ids = d.splits[split];
    for (std::size_t i = 0; i < count; ++i, ++index) {
      char id[32];
      std::snprintf(id, sizeof id, "img%06zu", index);
      ids.push_back(id);
      d.entries.push_back({id, std::string("images/") + id + ".png", id, "", corruptions::Label::clean, std::nullopt});
      images.push_back(data::procedural_scene(derive_seed(a.seed, index)));
    }
  }
  io::write_dataset(d, images);
  std::printf("wrote %zu images to %s\n", images.size(), a.out.c_str());
  return 0;
}

// ---- train ---------------------------------------------------------------

struct TrainArgs {
  std::string data, config, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
};

int cmd_train(const TrainArgs& a) {
  const auto d = io::load_dataset(a.data);
  hvae::HvaeConfig model = hvae::HvaeConfig::desk(6);
  hvae::TrainOptions opts;
  if (!a.config.empty()) {
    const auto j = read_json_file(a.config);
    if (j.contains("model")) model = hvae::config_from_json(j.at("model"));
    if (j.contains("training")) opts = hvae::train_options_from_json(j.at("training"));
  }
  if (a.seed) opts.seed = *a.seed;
  if (a.epochs) opts.epochs = *a.epochs;

  std::vector<Tensor> images;
  for (const auto& id : d.split_ids("train")) {
    const auto& e = d.entry(id);
    if (e.label != corruptions::Label::clean) {
      throw UsageError("train split contains corrupted image '" + id + "'; training uses clean images only");
    }
    images.push_back(d.load(id));
  }
  const Shape want{model.image_channels, model.image_height, model.image_width};
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].shape() != want) throw UsageError("training image shape " + shape_str(images[i].shape()) + " does not match model " + shape_str(want));
  }
  if (images.empty()) throw UsageError("train split is empty");

  const auto ck = hvae::train(images, model, opts, [](const hvae::EpochLog& e) {
    std::printf("epoch %zu  neg_elbo %.4f  kl %.4f\n", e.epoch, e.mean_neg_elbo, e.mean_kl);
    std::fflush(stdout);
  });
  hvae::save_checkpoint(a.out, ck);
  std::printf("wrote checkpoint %s\n", a.out.c_str());
  return 0;
}

// ---- corrupt -------------------------------------------------------------

struct CorruptArgs {
  std::string data, split = "test", kinds = "all", out;
  int severity = 1;
  std::uint64_t seed = 0;
  bool no_pooled = false, no_per_kind = false;
};

int cmd_corrupt(const CorruptArgs& a) {
  std::vector<corruptions::Kind> kinds;
  if (a.kinds == "all") {
    kinds.assign(corruptions::kAllKinds.begin(), corruptions::kAllKinds.end());
  } else {
    std::stringstream ss(a.kinds);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      const auto k = corruptions::parse_kind(tok);
      if (!k) throw UsageError("unknown corruption kind '" + tok + "'; supported: " + supported_kinds());
      kinds.push_back(*k);
    }
  }
  if (kinds.empty()) throw UsageError("no corruption kinds given; supported: " + supported_kinds());
  if (a.severity < 1 || a.severity > 5) throw UsageError("severity must be in [1, 5]");

  const auto d = io::load_dataset(a.data);
  std::vector<corruptions::SourceImage> clean;
  for (const auto& id : d.split_ids(a.split)) {
    if (d.entry(id).label != corruptions::Label::clean) continue;
    clean.push_back({id, d.load(id)});
  }
  corruptions::BenchmarkOptions opts;
  opts.severity = a.severity;
  opts.seed = a.seed;
  opts.pooled = !a.no_pooled;
  opts.per_kind = !a.no_per_kind;
  const auto items = corruptions::build_benchmark(clean, kinds, opts);

  nlohmann::json kind_names = nlohmann::json::array();
  for (auto k : kinds) kind_names.push_back(std::string(corruptions::name(k)));
  const nlohmann::json meta = {{"source_dataset", fs::absolute(a.data).lexically_normal().string()},
                               {"source_split", a.split},
                               {"kinds", kind_names},
                               {"severity", a.severity},
                               {"seed", a.seed},
                               {"severity_table_hash", corruptions::SeverityTable::standard().hash()},
                               {"severity_table", corruptions::SeverityTable::standard().to_json()}};
  auto out = io::benchmark_dataset(a.out, items, meta);
  std::vector<Tensor> images;
  for (const auto& it : items) images.push_back(it.image);
  io::write_dataset(out, images);
  std::printf("wrote %zu benchmark images to %s\n", items.size(), a.out.c_str());
  return 0;
}

// ---- score ---------------------------------------------------------------

struct ScoreArgs {
  std::string checkpoint, data, method = "skl", config, out, split;
  std::optional<std::uint64_t> seed;
};

int cmd_score(const ScoreArgs& a) {
  std::vector<evaluation::Method> methods;
  std::stringstream ss(a.method);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    const auto m = evaluation::parse_method(tok);
    if (!m) throw UsageError("unknown method '" + tok + "' (use skl, skl@<k>, likelihood, llr)");
    methods.push_back(*m);
  }
  if (methods.empty()) throw UsageError("no methods given");
  const auto ck = load_ck(a.checkpoint);
  const auto cfg = load_score_config(a.config, a.seed);
  cfg.validate(ck.config.num_layers());
  for (const auto& m : methods) {
    if (m.kind == evaluation::MethodKind::skl_fixed && m.k >= ck.config.num_layers()) {
      throw UsageError("method " + m.name() + ": k outside [0, L-1]");
    }
  }
  const auto d = io::load_dataset(a.data);
  const auto items = io::load_items(d, a.split.empty() ? std::nullopt : std::optional<std::string>(a.split));
  require_compatible(ck, items);
  const auto scores = evaluation::score_items(ck, items, methods, cfg);
  std::size_t failed = 0;
  for (const auto& s : scores) {
    if (s.error) {
      ++failed;
      std::fprintf(stderr, "warning: %s/%s: %s\n", s.method.c_str(), s.image_id.c_str(), s.error->c_str());
    }
  }
  io::write_file_atomic(a.out, io::scores_csv(scores));
  std::printf("wrote %zu scores to %s (%zu failed)\n", scores.size(), a.out.c_str(), failed);
  return 0;
}

// ---- calibrate -----------------------------------------------------------

struct CalibrateArgs {
  std::string checkpoint, data, config, out, split;
  std::optional<std::uint64_t> seed;
};

int cmd_calibrate(const CalibrateArgs& a) {
  const auto ck = load_ck(a.checkpoint);
  auto base = load_score_config(a.config, a.seed);
  const auto d = io::load_dataset(a.data);
  const auto items = io::load_items(d, a.split.empty() ? std::nullopt : std::optional<std::string>(a.split));
  require_compatible(ck, items);
  const auto table = evaluation::split_table(ck, items, base);
  const auto cal = evaluation::calibrate(table, ck.config.num_layers(), base);
  io::write_file_atomic(a.out, scoring::to_json(cal.config).dump(2) + "\n");
  std::printf("k1=%zu k2=%zu T=%.6g  validation AUROC %.4f (fixed k2: %.4f)\n", cal.config.k1, cal.config.k2,
              cal.config.threshold, cal.validation_auroc, cal.fixed_k2_validation_auroc);
  return 0;
}

// ---- evaluate ------------------------------------------------------------

struct EvaluateArgs {
  std::vector<std::string> scores;
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& a) {
  std::vector<evaluation::LabeledScore> all;
  for (const auto& path : a.scores) {
    std::string text;
    try {
      text = io::read_file(path);
    } catch (const io::IoError& e) {
      throw UsageError(e.what());
    }
    try {
      auto rows = io::parse_scores_csv(text);
      all.insert(all.end(), rows.begin(), rows.end());
    } catch (const io::CsvError& e) {
      throw UsageError(path + ": " + e.what());
    }
  }
  if (all.empty()) throw UsageError("no score rows");
  // Every method must cover the same image set; otherwise metrics would silently compare different data.
  std::map<std::string, std::set<std::string>> per_method;
  for (const auto& s : all) per_method[s.method].insert(s.image_id);
  const auto& first = per_method.begin()->second;
  for (const auto& [m, ids] : per_method) {
    if (ids != first) {
      throw UsageError("method '" + m + "' was scored on a different image set than '" + per_method.begin()->first + "'");
    }
  }
  const auto report = evaluation::build_report(all);
  const fs::path out(a.out);
  io::write_file_atomic(out / "report.json", evaluation::to_json(report).dump(2) + "\n");
  const auto text = evaluation::to_text(report);
  io::write_file_atomic(out / "report.txt", text);
  std::fputs(text.c_str(), stdout);
  return 0;
}

// ---- visualize -----------------------------------------------------------

struct VisualizeArgs {
  std::string checkpoint, data, ks = "1,2,3", config, out, split;
  std::vector<std::string> ids;
  std::size_t per_group = 2;
  std::optional<std::uint64_t> seed;
};

int cmd_visualize(const VisualizeArgs& a) {
  const auto ck = load_ck(a.checkpoint);
  const auto cfg = load_score_config(a.config, a.seed);
  const auto ks = parse_k_list(a.ks);
  for (auto k : ks) {
    if (k >= ck.config.num_layers()) {
      throw UsageError("k=" + std::to_string(k) + " outside [0, " + std::to_string(ck.config.num_layers() - 1) + "]");
    }
  }
  const auto d = io::load_dataset(a.data);
  std::vector<std::string> ids = a.ids;
  if (ids.empty()) ids = a.split.empty() ? d.all_ids() : d.split_ids(a.split);
  const fs::path out(a.out);

  // Gallery: per group (corruption kind, or label for plain datasets) the first
  // `per_group` images, one strip per row.
  std::map<std::string, std::vector<Tensor>> gallery_rows;
  std::vector<std::string> group_order;
  for (const auto& id : ids) {
    const auto& e = d.entry(id);
    const Tensor x = d.load(id);
    if (x.shape() != Shape{ck.config.image_channels, ck.config.image_height, ck.config.image_width}) {
      throw UsageError("image '" + id + "' does not match the model shape");
    }
    const Tensor s = scoring::strip(ck, x, ks, cfg, id);
    io::save_png(out / "strips" / (id + ".png"), s);
    const std::string group = e.spec ? std::string(corruptions::name(e.spec->kind)) : std::string("clean");
    auto& rows = gallery_rows[group];
    if (rows.empty()) group_order.push_back(group);
    if (rows.size() < a.per_group) rows.push_back(s);
  }
  std::sort(group_order.begin(), group_order.end(), [](const std::string& x, const std::string& y) {
    auto rank = [](const std::string& g) {
      const auto k = corruptions::parse_kind(g);
      return k ? corruptions::table_rank(*k) + 1 : 0;  // clean first
    };
    return rank(x) < rank(y);
  });
  std::vector<Tensor> rows;
  for (const auto& g : group_order)
    for (const auto& r : gallery_rows[g]) rows.push_back(r);
  if (!rows.empty()) io::save_png(out / "gallery.png", scoring::vconcat(rows));
  std::printf("wrote %zu strips and gallery to %s\n", ids.size(), a.out.c_str());
  return 0;
}

// ---- serve ---------------------------------------------------------------

struct ServeArgs {
  std::string checkpoint, data, config, manifest, cache, host = "127.0.0.1", split;
  int port = 8080;
  double threshold = 0.0;
  std::optional<std::uint64_t> seed;
};

int cmd_serve(const ServeArgs& a) {
  const auto ck = load_ck(a.checkpoint);
  const auto cfg = load_score_config(a.config, a.seed);
  cfg.validate(ck.config.num_layers());
  const auto d = io::load_dataset(a.data);
  const auto ck_hash = service::checkpoint_hash(ck);
  const auto cfg_hash = service::config_hash(cfg);
  const fs::path manifest = a.manifest.empty() ? fs::path(a.data) / "review.json" : fs::path(a.manifest);
  const fs::path cache_dir = a.cache.empty() ? fs::path(a.data) / "score-cache" : fs::path(a.cache);
  service::ScoreCache cache(cache_dir, ck_hash, cfg_hash);
  auto session = [&] {
    try {
      return service::ReviewSession::open_or_create(manifest, fs::absolute(a.data).lexically_normal().string(), ck_hash,
                                                    cfg_hash, a.threshold,
                                                    [&] { return service::score_dataset(ck, d, cfg, &cache); });
    } catch (const service::SessionError& e) {
      throw UsageError(e.what());
    }
  }();
  service::ReviewServer server(ck, d, cfg, session);
  // SIGINT/SIGTERM go to a waiter thread, which stops the server once it is
  // accepting; a signal arriving during startup is not lost.
  sigset_t stop_signals;
  sigemptyset(&stop_signals);
  sigaddset(&stop_signals, SIGINT);
  sigaddset(&stop_signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);
  int port = a.port;
  if (port == 0) {
    port = server.bind_any(a.host);
    if (port < 0) throw std::runtime_error("cannot bind " + a.host);
  } else if (!server.http().bind_to_port(a.host, port)) {
    throw std::runtime_error("cannot bind " + a.host + ":" + std::to_string(port) + " (port busy?)");
  }
  std::printf("serving %zu images on http://%s:%d/api (manifest %s)\n", d.entries.size(), a.host.c_str(), port,
              manifest.c_str());
  std::fflush(stdout);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&stop_signals, &sig);
    server.http().wait_until_ready();
    server.stop();
  });
  const bool ok = server.run();
  ::kill(::getpid(), SIGTERM);  // release the waiter if run() ended on its own
  waiter.join();
  if (!ok) throw std::runtime_error("server stopped unexpectedly");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-quality image detection with hierarchical VAE partial reconstructions"};
  app.require_subcommand(1);

  SynthArgs synth;
  auto* s_synth = app.add_subcommand("synth", "Write a procedural clean dataset with train/val/test splits");
  s_synth->add_option("--train", synth.train, "Training images")->capture_default_str();
  s_synth->add_option("--val", synth.val, "Validation images")->capture_default_str();
  s_synth->add_option("--test", synth.test, "Test images")->capture_default_str();
  s_synth->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  s_synth->add_option("--out", synth.out, "Output dataset directory")->required();

  TrainArgs train;
  auto* s_train = app.add_subcommand("train", "Train the hierarchical VAE on the clean train split");
  s_train->add_option("--data", train.data, "Dataset directory")->required();
  s_train->add_option("--config", train.config, "JSON with optional \"model\" and \"training\" objects");
  s_train->add_option("--seed", train.seed, "Training seed (overrides config)");
  s_train->add_option("--epochs", train.epochs, "Epochs (overrides config)");
  s_train->add_option("--out", train.out, "Checkpoint path")->required();

  CorruptArgs corrupt;
  auto* s_corrupt = app.add_subcommand("corrupt", "Build clean/corrupted benchmark splits");
  s_corrupt->add_option("--data", corrupt.data, "Clean dataset directory")->required();
  s_corrupt->add_option("--split", corrupt.split, "Source split")->capture_default_str();
  s_corrupt->add_option("--kinds", corrupt.kinds, "Comma-separated kinds or 'all'")->capture_default_str();
  s_corrupt->add_option("--severity", corrupt.severity, "Severity 1..5")->capture_default_str();
  s_corrupt->add_option("--seed", corrupt.seed, "Corruption seed")->capture_default_str();
  s_corrupt->add_flag("--no-pooled", corrupt.no_pooled, "Skip the pooled split");
  s_corrupt->add_flag("--no-per-kind", corrupt.no_per_kind, "Skip the per-kind splits");
  s_corrupt->add_option("--out", corrupt.out, "Output dataset directory")->required();

  ScoreArgs score;
  auto* s_score = app.add_subcommand("score", "Score a dataset, writing per-image CSV");
  s_score->add_option("--checkpoint", score.checkpoint, "Checkpoint path")->required();
  s_score->add_option("--data", score.data, "Dataset directory")->required();
  s_score->add_option("--method", score.method, "skl, skl@<k>, likelihood, llr (comma-separated)")->capture_default_str();
  s_score->add_option("--config", score.config, "Score config JSON");
  s_score->add_option("--split", score.split, "Only score this split");
  s_score->add_option("--seed", score.seed, "Score seed (overrides config)");
  s_score->add_option("--out", score.out, "CSV path")->required();

  CalibrateArgs calib;
  auto* s_calib = app.add_subcommand("calibrate", "Grid-search k1, k2 and T on a validation benchmark");
  s_calib->add_option("--checkpoint", calib.checkpoint, "Checkpoint path")->required();
  s_calib->add_option("--data", calib.data, "Validation benchmark directory")->required();
  s_calib->add_option("--config", calib.config, "Base score config JSON");
  s_calib->add_option("--split", calib.split, "Only use this split");
  s_calib->add_option("--seed", calib.seed, "Score seed (overrides config)");
  s_calib->add_option("--out", calib.out, "Calibrated score config JSON")->required();

  EvaluateArgs eval;
  auto* s_eval = app.add_subcommand("evaluate", "Compute AUROC/AUPRC/FPR80 from score CSVs");
  s_eval->add_option("--scores", eval.scores, "Score CSV files")->required()->expected(1, -1);
  s_eval->add_option("--out", eval.out, "Output directory (report.json, report.txt)")->required();

  VisualizeArgs vis;
  auto* s_vis = app.add_subcommand("visualize", "Write reconstruction strips and a gallery");
  s_vis->add_option("--checkpoint", vis.checkpoint, "Checkpoint path")->required();
  s_vis->add_option("--data", vis.data, "Dataset directory")->required();
  s_vis->add_option("--k", vis.ks, "Comma-separated split layers")->capture_default_str();
  s_vis->add_option("--ids", vis.ids, "Image ids (default: all)");
  s_vis->add_option("--split", vis.split, "Only this split");
  s_vis->add_option("--per-group", vis.per_group, "Gallery rows per group")->capture_default_str();
  s_vis->add_option("--config", vis.config, "Score config JSON");
  s_vis->add_option("--seed", vis.seed, "Seed (overrides config)");
  s_vis->add_option("--out", vis.out, "Output directory")->required();

  ServeArgs serve;
  auto* s_serve = app.add_subcommand("serve", "Serve the review API");
  s_serve->add_option("--checkpoint", serve.checkpoint, "Checkpoint path")->required();
  s_serve->add_option("--data", serve.data, "Dataset directory")->required();
  s_serve->add_option("--config", serve.config, "Score config JSON");
  s_serve->add_option("--seed", serve.seed, "Score seed (overrides config)");
  s_serve->add_option("--manifest", serve.manifest, "Review manifest path (default <data>/review.json)");
  s_serve->add_option("--cache", serve.cache, "Score cache directory (default <data>/score-cache)");
  s_serve->add_option("--threshold", serve.threshold, "Initial review threshold")->capture_default_str();
  s_serve->add_option("--host", serve.host, "Bind address")->capture_default_str();
  s_serve->add_option("--port", serve.port, "Port (0 = any free port)")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*s_synth) return cmd_synth(synth);
    if (*s_train) return cmd_train(train);
    if (*s_corrupt) return cmd_corrupt(corrupt);
    if (*s_score) return cmd_score(score);
    if (*s_calib) return cmd_calibrate(calib);
    if (*s_eval) return cmd_evaluate(eval);
    if (*s_vis) return cmd_visualize(vis);
    if (*s_serve) return cmd_serve(serve);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "internal error: %s\n", e.what());
    return 1;
  }
  return 1;
}
