#pragma once

#include <array>
#include <type_traits>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mtmd/errors.hpp"
#include "mtmd/harness/config.hpp"
#include "mtmd/model.hpp"

namespace mtmd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Named float64 tensors (every learnable tensor plus `memory.predefined`
/// and `memory.hidden`) followed by a JSON echo of the training config and
/// a metric snapshot.
///
/// Layout, all integers little-endian:
///   "MTMD" | u32 version | u32 tensor count
///   per tensor: u32 name length | name (UTF-8) | u32 rank | u64 dims[rank] |
///               f64 payload[prod(dims)]
///   u64 metadata length | metadata JSON (UTF-8)
struct Checkpoint {
  NamedTensors tensors;
  Json metadata;
};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
  static_assert(std::is_integral_v<T>);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff));
}

inline void put_f64(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
 public:
  explicit Reader(std::string bytes, std::string source) : bytes_(std::move(bytes)), source_(std::move(source)) {}

  template <class T>
  T get() {
    need(sizeof(T));
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(v);
  }

  double get_f64() { return std::bit_cast<double>(get<std::uint64_t>()); }

  std::string get_bytes(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw DataError(source_ + ": truncated checkpoint");
  }

  std::string bytes_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string serialize(const Checkpoint& ckpt) {
  std::string out = "MTMD";
  detail::put_le<std::uint32_t>(out, kCheckpointVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) detail::put_le<std::uint64_t>(out, d);
    for (double v : t.data()) detail::put_f64(out, v);
  }
  const std::string meta = ckpt.metadata.dump();
  detail::put_le<std::uint64_t>(out, meta.size());
  out += meta;
  return out;
}

inline Checkpoint deserialize(std::string bytes, const std::string& source = "checkpoint") {
  detail::Reader r(std::move(bytes), source);
  if (r.get_bytes(4) != "MTMD") throw DataError(source + ": not a checkpoint (bad magic)");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) throw DataError(source + ": unsupported checkpoint version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  Checkpoint ckpt;
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.get_bytes(r.get<std::uint32_t>());
    const auto rank = r.get<std::uint32_t>();
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint64_t>();
    std::vector<double> data(shape_size(shape));
    for (double& v : data) v = r.get_f64();
    ckpt.tensors.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  const std::string meta = r.get_bytes(r.get<std::uint64_t>());
  try {
    ckpt.metadata = Json::parse(meta);
  } catch (const Json::exception& e) {
    throw DataError(source + ": bad checkpoint metadata: " + e.what());
  }
  if (!r.done()) throw DataError(source + ": trailing bytes after checkpoint");
  return ckpt;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  const std::string bytes = serialize(ckpt);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize(ss.str(), path.string());
}

inline Checkpoint make_checkpoint(const ModelState& state, const TrainConfig& config, Json metrics) {
  Checkpoint ckpt;
  ckpt.tensors = state.params;
  ckpt.tensors[memory_tensor_name(Stage::predefined)] = state.banks.predefined.items;
  ckpt.tensors[memory_tensor_name(Stage::hidden)] = state.banks.hidden.items;
  ckpt.metadata = Json{{"config", to_json(config)}, {"metrics", std::move(metrics)}};
  return ckpt;
}

inline ModelState state_from_checkpoint(const Checkpoint& ckpt) {
  ModelState state;
  for (const auto& [name, t] : ckpt.tensors) {
    if (name == memory_tensor_name(Stage::predefined)) {
      state.banks.predefined = MemoryBank{t, Stage::predefined};
    } else if (name == memory_tensor_name(Stage::hidden)) {
      state.banks.hidden = MemoryBank{t, Stage::hidden};
    } else {
      state.params.emplace(name, t);
    }
  }
  if (state.banks.predefined.items.rank() != 2 || state.banks.hidden.items.rank() != 2)
    throw DataError("checkpoint lacks memory banks");
  return state;
}

inline TrainConfig config_from_checkpoint(const Checkpoint& ckpt) {
  if (!ckpt.metadata.contains("config")) throw DataError("checkpoint lacks a config echo");
  return train_config_from_json(ckpt.metadata.at("config"));
}

}  // namespace mtmd
