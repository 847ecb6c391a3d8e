#include <gtest/gtest.h>

#include <cmath>

#include "lqd/io/csv.hpp"
#include "lqd/io/dataset.hpp"
#include "lqd/io/png.hpp"
#include "support/fixtures.hpp"

using namespace lqd;
using namespace lqd::io;
using lqd::testing::TempDir;

TEST(Png, QuantizedImagesRoundTripExactly) {
  for (std::uint64_t i = 0; i < 8; ++i) {
    const Tensor x = data::procedural_scene(i, 16 + 16 * (i % 2));
    EXPECT_EQ(decode_png(encode_png(x)).vec(), x.vec());
  }
  const Tensor gray = data::quantize8(Tensor({1, 3, 5}, {0, .1, .2, .3, .4, .5, .6, .7, .8, .9, 1, 0, .5, .25, .75}));
  const Tensor back = decode_png(encode_png(gray));
  EXPECT_EQ(back.shape(), gray.shape());
  EXPECT_EQ(back.vec(), gray.vec());
}

TEST(Png, EncodingIsByteStable) {
  const Tensor x = data::procedural_scene(4);
  EXPECT_EQ(encode_png(x), encode_png(x));
}

TEST(Png, RejectsGarbage) {
  EXPECT_THROW(decode_png("not a png at all"), IoError);
  std::string bytes = encode_png(data::procedural_scene(5));
  EXPECT_THROW(decode_png(bytes.substr(0, bytes.size() / 2)), IoError);
  TempDir dir;
  EXPECT_THROW(load_png(dir / "missing.png"), IoError);
}

TEST(Files, AtomicWriteReplacesWholeFile) {
  TempDir dir;
  const auto p = dir / "sub" / "f.txt";
  write_file_atomic(p, "first version, longer");
  write_file_atomic(p, "second");
  EXPECT_EQ(read_file(p), "second");
  EXPECT_FALSE(fs::exists(p.string() + ".tmp"));
}

namespace {

evaluation::LabeledScore row(const std::string& id, double score, std::size_t k, double m, bool corrupted,
                             const std::string& split) {
  evaluation::LabeledScore s;
  s.image_id = id;
  s.method = "skl";
  s.score = score;
  s.k_used = k;
  s.high_freq_mean = m;
  s.label = corrupted ? corruptions::Label::corrupted : corruptions::Label::clean;
  s.split = split;
  return s;
}

}  // namespace

TEST(Csv, ScoresRoundTripBitExactly) {
  Rng rng(3);
  std::vector<evaluation::LabeledScore> v;
  for (int i = 0; i < 200; ++i) {
    v.push_back(row("img,\"" + std::to_string(i) + "\"", rng.normal() * std::pow(10.0, rng.uniform(-20, 20)),
                    rng.below(6), rng.uniform(), i % 2, i % 3 ? "gaussian_noise" : "pooled"));
  }
  const std::string text = scores_csv(v);
  const auto back = parse_scores_csv(text);
  ASSERT_EQ(back.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(back[i].image_id, v[i].image_id);
    EXPECT_EQ(back[i].score, v[i].score);
    EXPECT_EQ(back[i].k_used, v[i].k_used);
    EXPECT_EQ(back[i].high_freq_mean, v[i].high_freq_mean);
    EXPECT_EQ(back[i].label, v[i].label);
    EXPECT_EQ(back[i].split, v[i].split);
  }
  EXPECT_EQ(scores_csv(back), text);
}

TEST(Csv, FailedScoresSurviveAsMissing) {
  auto r = row("x", 0.0, 1, 0.5, true, "pooled");
  r.error = "failed";
  const auto back = parse_scores_csv(scores_csv({r}));
  ASSERT_EQ(back.size(), 1u);
  EXPECT_TRUE(back[0].error);
}

TEST(Csv, ReportsLineOfMalformedRecords) {
  const std::string header = std::string(kScoreHeader) + "\n";
  EXPECT_THROW(parse_scores_csv(""), CsvError);
  EXPECT_THROW(parse_scores_csv("a,b\n"), CsvError);
  try {
    parse_scores_csv(header + "a,skl,0.5,1,0.1,clean,pooled\nb,skl,zero,1,0.1,clean,pooled\n");
    FAIL();
  } catch (const CsvError& e) {
    EXPECT_NE(std::string(e.what()).find("3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_scores_csv(header + "a,skl,0.5,1,0.1,dirty,pooled\n"), CsvError);
  EXPECT_THROW(parse_scores_csv(header + "a,skl,0.5,1,0.1\n"), CsvError);
  EXPECT_THROW(parse_scores_csv(header + "\"a,skl,0.5,1,0.1,clean,pooled\n"), CsvError);
}

TEST(Dataset, WriteLoadRoundTrip) {
  TempDir dir;
  std::vector<corruptions::SourceImage> clean;
  for (std::uint64_t i = 0; i < 6; ++i) clean.push_back({"c" + std::to_string(i), data::procedural_scene(i, 16)});
  const auto items = corruptions::build_benchmark(clean, {corruptions::Kind::jpeg_compression}, {1, 0, true, false});
  auto d = benchmark_dataset(dir.path(), items, {{"seed", 0}});
  std::vector<Tensor> images;
  for (const auto& it : items) images.push_back(it.image);
  write_dataset(d, images);

  const auto back = load_dataset(dir.path());
  EXPECT_EQ(back.meta["seed"], 0);
  const auto loaded = load_items(back, "test");
  ASSERT_EQ(loaded.size(), items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    EXPECT_EQ(loaded[i].id, items[i].id);
    EXPECT_EQ(loaded[i].label, items[i].label);
    EXPECT_EQ(loaded[i].spec, items[i].spec);
    EXPECT_EQ(loaded[i].image.vec(), items[i].image.vec());
  }
  EXPECT_THROW(back.split_ids("train"), DatasetError);
  EXPECT_THROW(back.entry("nope"), DatasetError);
}

TEST(Dataset, ValidationRejectsInconsistentManifests) {
  Dataset d;
  d.entries.push_back({"a", "a.png", "a", "", corruptions::Label::clean, std::nullopt});
  EXPECT_NO_THROW(validate(d));
  d.entries.push_back({"a", "b.png", "a", "", corruptions::Label::clean, std::nullopt});
  EXPECT_THROW(validate(d), DatasetError);
  d.entries.back().id = "x/y";
  EXPECT_THROW(validate(d), DatasetError);
  d.entries.back().id = "b";
  d.entries.back().label = corruptions::Label::corrupted;
  EXPECT_THROW(validate(d), DatasetError);
  d.entries.back().spec = corruptions::CorruptionSpec{};
  EXPECT_NO_THROW(validate(d));
  d.splits["train"] = {"a"};
  d.splits["test"] = {"a", "b"};
  EXPECT_THROW(validate(d), DatasetError);
  d.splits["test"] = {"b", "zz"};
  EXPECT_THROW(validate(d), DatasetError);

  EXPECT_THROW(parse_manifest("/", {{"format", "other"}}), DatasetError);
  EXPECT_THROW(parse_manifest("/", {{"format", "lqd-dataset"}}), DatasetError);
  TempDir dir;
  EXPECT_THROW(load_dataset(dir.path()), DatasetError);
  write_file_atomic(dir / "manifest.json", "{not json");
  EXPECT_THROW(load_dataset(dir.path()), DatasetError);
  d.splits.clear();
  write_file_atomic(dir / "manifest.json", manifest_json(d).dump());
  EXPECT_THROW(load_dataset(dir.path()), DatasetError);  // image files missing
}
