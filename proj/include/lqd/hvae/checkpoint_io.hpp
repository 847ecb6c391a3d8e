#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "json.hpp"
#include "lqd/hvae/model.hpp"

namespace lqd::hvae {

// Layout (all integers little-endian):
//   "HVAE" | u32 version | u64 json length | canonical JSON {config, training}
//   | u32 tensor count | per tensor: u32 name length, name, u32 rank,
//     u64 extents[rank], f64 values[numel]
// Tensor names carry a "theta/" or "phi/" prefix.
inline constexpr char kCheckpointMagic[4] = {'H', 'V', 'A', 'E'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

inline void put_tensor(std::ostream& os, const std::string& name, const Tensor& t) {
  put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put<std::uint64_t>(os, e);
  os.write(reinterpret_cast<const char*>(t.vec().data()), static_cast<std::streamsize>(t.size() * sizeof(double)));
}

}  // namespace detail

inline nlohmann::json checkpoint_header(const HvaeCheckpoint& ck) {
  return {{"config", to_json(ck.config)},
          {"training", {{"seed", ck.meta.seed}, {"epochs", ck.meta.epochs}, {"final_loss", ck.meta.final_loss}}}};
}

inline void write_checkpoint(std::ostream& os, const HvaeCheckpoint& ck) {
  os.write(kCheckpointMagic, 4);
  detail::put<std::uint32_t>(os, kCheckpointVersion);
  const std::string header = checkpoint_header(ck).dump();
  detail::put<std::uint64_t>(os, header.size());
  os.write(header.data(), static_cast<std::streamsize>(header.size()));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(ck.theta.size() + ck.phi.size()));
  for (const auto& [name, t] : ck.theta) detail::put_tensor(os, "theta/" + name, t);
  for (const auto& [name, t] : ck.phi) detail::put_tensor(os, "phi/" + name, t);
}

inline HvaeCheckpoint read_checkpoint(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic");
  }
  const auto version = detail::get<std::uint32_t>(is);
  if (version != kCheckpointVersion) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto hlen = detail::get<std::uint64_t>(is);
  if (hlen > (1u << 24)) throw std::runtime_error("checkpoint: header too large");
  std::string header(hlen, '\0');
  if (!is.read(header.data(), static_cast<std::streamsize>(hlen))) throw std::runtime_error("checkpoint: truncated header");

  HvaeCheckpoint ck;
  const auto j = nlohmann::json::parse(header);
  ck.config = config_from_json(j.at("config"));
  const auto& tr = j.at("training");
  ck.meta.seed = tr.at("seed").get<std::uint64_t>();
  ck.meta.epochs = tr.at("epochs").get<std::size_t>();
  ck.meta.final_loss = tr.at("final_loss").get<double>();

  const auto count = detail::get<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto nlen = detail::get<std::uint32_t>(is);
    if (nlen > 4096) throw std::runtime_error("checkpoint: tensor name too long");
    std::string name(nlen, '\0');
    if (!is.read(name.data(), nlen)) throw std::runtime_error("checkpoint: truncated name");
    const auto rank = detail::get<std::uint32_t>(is);
    if (rank == 0 || rank > 8) throw std::runtime_error("checkpoint: bad rank for " + name);
    Shape shape(rank);
    for (auto& e : shape) e = detail::get<std::uint64_t>(is);
    const std::size_t n = shape_numel(shape);
    if (n == 0 || n > (std::size_t{1} << 28)) throw std::runtime_error("checkpoint: bad extents for " + name);
    std::vector<double> data(n);
    if (!is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(double)))) {
      throw std::runtime_error("checkpoint: truncated tensor " + name);
    }
    Tensor t(std::move(shape), std::move(data));
    if (name.rfind("theta/", 0) == 0) {
      ck.theta[name.substr(6)] = std::move(t);
    } else if (name.rfind("phi/", 0) == 0) {
      ck.phi[name.substr(4)] = std::move(t);
    } else {
      throw std::runtime_error("checkpoint: tensor without collection prefix: " + name);
    }
  }

  // Every parameter must have the shape the config dictates.
  const HvaeCheckpoint ref = initialize(ck.config, 0);
  auto check = [](const ParamSet& want, const ParamSet& got, const char* what) {
    if (want.size() != got.size()) throw std::runtime_error(std::string("checkpoint: wrong ") + what + " parameter count");
    for (const auto& [name, t] : want) {
      auto it = got.find(name);
      if (it == got.end()) throw std::runtime_error("checkpoint: missing " + name);
      if (it->second.shape() != t.shape()) throw std::runtime_error("checkpoint: shape mismatch for " + name);
    }
  };
  check(ref.theta, ck.theta, "theta");
  check(ref.phi, ck.phi, "phi");
  return ck;
}

inline std::string checkpoint_bytes(const HvaeCheckpoint& ck) {
  std::ostringstream os(std::ios::binary);
  write_checkpoint(os, ck);
  return os.str();
}

inline void save_checkpoint(const std::filesystem::path& path, const HvaeCheckpoint& ck) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    write_checkpoint(os, ck);
    if (!os) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline HvaeCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(is);
}

}  // namespace lqd::hvae
