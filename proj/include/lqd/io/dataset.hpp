#pragma once

#include <algorithm>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "lqd/corruptions/benchmark.hpp"
#include "lqd/io/files.hpp"
#include "lqd/io/png.hpp"

namespace lqd::io {

using corruptions::Label;

class DatasetError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct DatasetEntry {
  std::string id;
  std::string file;    // relative to the dataset root
  std::string source;  // source image id (equal to id for clean originals)
  std::string group;   // benchmark split name; empty for plain datasets
  Label label = Label::clean;
  std::optional<corruptions::CorruptionSpec> spec;
};

/// Directory with images/*.png, manifest.json and named id splits.
struct Dataset {
  fs::path root;
  std::vector<DatasetEntry> entries;
  std::map<std::string, std::vector<std::string>> splits;
  nlohmann::json meta = nlohmann::json::object();  // free-form provenance (seed, severity table hash, …)

  const DatasetEntry& entry(const std::string& id) const {
    for (const auto& e : entries) {
      if (e.id == id) return e;
    }
    throw DatasetError("unknown image id '" + id + "'");
  }

  std::vector<std::string> split_ids(const std::string& name) const {
    auto it = splits.find(name);
    if (it == splits.end()) throw DatasetError("dataset has no split '" + name + "'");
    return it->second;
  }

  std::vector<std::string> all_ids() const {
    std::vector<std::string> ids;
    for (const auto& e : entries) ids.push_back(e.id);
    return ids;
  }

  Tensor load(const std::string& id) const { return load_png(root / entry(id).file); }
};

inline nlohmann::json manifest_json(const Dataset& d) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& e : d.entries) {
    nlohmann::json o = {{"id", e.id}, {"file", e.file}, {"source", e.source}, {"label", std::string(corruptions::label_name(e.label))}};
    if (!e.group.empty()) o["group"] = e.group;
    if (e.spec) o["spec"] = corruptions::to_json(*e.spec);
    items.push_back(o);
  }
  return {{"format", "lqd-dataset"}, {"version", 1}, {"items", items}, {"splits", d.splits}, {"meta", d.meta}};
}

inline void validate(const Dataset& d) {
  std::set<std::string> ids;
  for (const auto& e : d.entries) {
    if (e.id.empty() || e.id.find_first_of("/\\") != std::string::npos) throw DatasetError("invalid image id '" + e.id + "'");
    if (!ids.insert(e.id).second) throw DatasetError("duplicate image id '" + e.id + "'");
    if ((e.label == Label::corrupted) != e.spec.has_value()) {
      throw DatasetError("image '" + e.id + "': corrupted label and corruption spec must go together");
    }
  }
  std::map<std::string, std::string> owner;
  for (const auto& [name, list] : d.splits) {
    for (const auto& id : list) {
      if (!ids.count(id)) throw DatasetError("split '" + name + "' names unknown id '" + id + "'");
      auto [it, fresh] = owner.emplace(id, name);
      if (!fresh) throw DatasetError("id '" + id + "' appears in splits '" + it->second + "' and '" + name + "'");
    }
  }
}

inline Dataset parse_manifest(const fs::path& root, const nlohmann::json& j) {
  Dataset d;
  d.root = root;
  try {
    if (j.at("format").get<std::string>() != "lqd-dataset") throw DatasetError("not a dataset manifest");
    for (const auto& o : j.at("items")) {
      DatasetEntry e;
      e.id = o.at("id").get<std::string>();
      e.file = o.at("file").get<std::string>();
      e.source = o.value("source", e.id);
      e.group = o.value("group", std::string());
      const auto lbl = corruptions::parse_label(o.at("label").get<std::string>());
      if (!lbl) throw DatasetError("image '" + e.id + "': bad label");
      e.label = *lbl;
      if (o.contains("spec")) e.spec = corruptions::spec_from_json(o.at("spec"));
      d.entries.push_back(std::move(e));
    }
    d.splits = j.value("splits", std::map<std::string, std::vector<std::string>>{});
    d.meta = j.value("meta", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DatasetError(std::string("malformed manifest: ") + e.what());
  } catch (const corruptions::UnsupportedCorruption& e) {
    throw DatasetError(std::string("malformed manifest: ") + e.what());
  }
  validate(d);
  return d;
}

inline Dataset load_dataset(const fs::path& root) {
  const fs::path mp = root / "manifest.json";
  if (!fs::exists(mp)) throw DatasetError("no manifest.json under " + root.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(mp));
  } catch (const nlohmann::json::parse_error& e) {
    throw DatasetError(mp.string() + ": " + e.what());
  }
  Dataset d = parse_manifest(root, j);
  for (const auto& e : d.entries) {
    if (!fs::exists(root / e.file)) throw DatasetError("missing image file " + (root / e.file).string());
  }
  return d;
}

/// Write every image then the manifest (last, atomically). Images must be
/// 8-bit quantized so that reading back reproduces them exactly.
inline void write_dataset(Dataset& d, const std::vector<Tensor>& images) {
  if (images.size() != d.entries.size()) throw DatasetError("write_dataset: image count mismatch");
  validate(d);
  fs::create_directories(d.root / "images");
  for (std::size_t i = 0; i < images.size(); ++i) {
    auto& e = d.entries[i];
    if (e.file.empty()) e.file = "images/" + e.id + ".png";
    save_png(d.root / e.file, images[i]);
  }
  write_file_atomic(d.root / "manifest.json", manifest_json(d).dump(2) + "\n");
}

/// Benchmark items as a dataset whose "test" split lists every item.
inline Dataset benchmark_dataset(const fs::path& root, const std::vector<corruptions::BenchmarkItem>& items,
                                 const nlohmann::json& meta) {
  Dataset d;
  d.root = root;
  d.meta = meta;
  auto& test = d.splits["test"];
  for (const auto& it : items) {
    d.entries.push_back({it.id, "images/" + it.id + ".png", it.source_id, it.group, it.label, it.spec});
    test.push_back(it.id);
  }
  return d;
}

/// Items of a dataset (or one of its splits) with pixel data loaded.
inline std::vector<corruptions::BenchmarkItem> load_items(const Dataset& d, const std::optional<std::string>& split = std::nullopt) {
  const auto ids = split ? d.split_ids(*split) : d.all_ids();
  std::vector<corruptions::BenchmarkItem> out;
  for (const auto& id : ids) {
    const auto& e = d.entry(id);
    out.push_back({e.id, e.source, e.group, e.label, e.spec, d.load(id)});
  }
  return out;
}

}  // namespace lqd::io
