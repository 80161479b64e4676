#pragma once

// Binary checkpoint format, little-endian float32:
//   magic "MEMLABCK" | u32 version | config | u64 step | u64 rng seed/counter
//   | u32 n_tensors | table of (name, rank, dims, byte offset) | data blob
// Save -> load -> save is byte-identical.

#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include "memlab/model/transformer.hpp"

namespace memlab::train {

inline constexpr char kCkptMagic[8] = {'M', 'E', 'M', 'L', 'A', 'B', 'C', 'K'};
inline constexpr uint32_t kCkptVersion = 1;

struct Checkpoint {
  ModelConfig config;
  uint64_t step = 0;
  uint64_t rng_seed = 0;
  uint64_t rng_counter = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;

  static Checkpoint from_model(const Transformer& model, uint64_t step, uint64_t rng_seed,
                               uint64_t rng_counter) {
    Checkpoint c;
    c.config = model.config();
    c.step = step;
    c.rng_seed = rng_seed;
    c.rng_counter = rng_counter;
    for (auto& [name, t] : model.named_parameters()) c.tensors.emplace_back(name, t.detached_copy());
    return c;
  }

  Transformer to_model() const {
    Transformer model(config);
    auto expected = model.named_parameters();
    if (expected.size() != tensors.size())
      throw ShapeError("checkpoint tensor count does not match the declared architecture");
    for (size_t i = 0; i < expected.size(); ++i) {
      const auto& [name, stored] = tensors[i];
      if (name != expected[i].first)
        throw ShapeError("checkpoint tensor order mismatch: expected " + expected[i].first +
                         ", found " + name);
      Tensor& dst = model.tensor_by_name(name);
      if (stored.shape() != dst.shape())
        throw ShapeError("checkpoint shape mismatch for " + name + ": " +
                         shape_str(stored.shape()) + " vs " + shape_str(dst.shape()));
      dst.values() = stored.values();
    }
    return model;
  }
};

namespace detail {

template <typename T>
void put(std::string& buf, T v) {
  char tmp[sizeof(T)];
  std::memcpy(tmp, &v, sizeof(T));
  buf.append(tmp, sizeof(T));
}

template <typename T>
T take(const std::string& buf, size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw IoError("corrupt checkpoint: truncated");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace detail

inline std::string checkpoint_to_bytes(const Checkpoint& c) {
  using detail::put;
  std::string buf;
  buf.append(kCkptMagic, sizeof(kCkptMagic));
  put<uint32_t>(buf, kCkptVersion);
  put<int32_t>(buf, c.config.n_layers);
  put<int32_t>(buf, c.config.n_heads);
  put<int32_t>(buf, c.config.d_model);
  put<int32_t>(buf, c.config.d_ff);
  put<int32_t>(buf, c.config.vocab_size);
  put<int32_t>(buf, c.config.max_seq);
  put<uint8_t>(buf, static_cast<uint8_t>(c.config.norm_kind));
  put<uint8_t>(buf, static_cast<uint8_t>(c.config.positional_kind));
  put<uint16_t>(buf, 0);
  put<uint64_t>(buf, c.step);
  put<uint64_t>(buf, c.rng_seed);
  put<uint64_t>(buf, c.rng_counter);
  put<uint32_t>(buf, static_cast<uint32_t>(c.tensors.size()));
  uint64_t offset = 0;
  for (const auto& [name, t] : c.tensors) {
    put<uint16_t>(buf, static_cast<uint16_t>(name.size()));
    buf.append(name);
    put<uint32_t>(buf, static_cast<uint32_t>(t.shape().size()));
    for (int d : t.shape()) put<int64_t>(buf, d);
    put<uint64_t>(buf, offset);
    offset += static_cast<uint64_t>(t.numel()) * sizeof(float);
  }
  for (const auto& [name, t] : c.tensors)
    buf.append(reinterpret_cast<const char*>(t.data()), t.numel() * sizeof(float));
  return buf;
}

inline Checkpoint checkpoint_from_bytes(const std::string& buf) {
  using detail::take;
  if (buf.size() < sizeof(kCkptMagic) || std::memcmp(buf.data(), kCkptMagic, sizeof(kCkptMagic)) != 0)
    throw IoError("corrupt checkpoint: bad magic");
  size_t pos = sizeof(kCkptMagic);
  uint32_t version = take<uint32_t>(buf, pos);
  if (version != kCkptVersion)
    throw IoError("checkpoint version mismatch: file has " + std::to_string(version) +
                  ", expected " + std::to_string(kCkptVersion));
  Checkpoint c;
  c.config.n_layers = take<int32_t>(buf, pos);
  c.config.n_heads = take<int32_t>(buf, pos);
  c.config.d_model = take<int32_t>(buf, pos);
  c.config.d_ff = take<int32_t>(buf, pos);
  c.config.vocab_size = take<int32_t>(buf, pos);
  c.config.max_seq = take<int32_t>(buf, pos);
  c.config.norm_kind = static_cast<NormKind>(take<uint8_t>(buf, pos));
  c.config.positional_kind = static_cast<PosKind>(take<uint8_t>(buf, pos));
  take<uint16_t>(buf, pos);
  c.step = take<uint64_t>(buf, pos);
  c.rng_seed = take<uint64_t>(buf, pos);
  c.rng_counter = take<uint64_t>(buf, pos);
  uint32_t n_tensors = take<uint32_t>(buf, pos);

  struct Entry {
    std::string name;
    Shape shape;
    uint64_t offset;
  };
  std::vector<Entry> table;
  uint64_t expected_offset = 0;
  for (uint32_t i = 0; i < n_tensors; ++i) {
    Entry e;
    uint16_t len = take<uint16_t>(buf, pos);
    if (pos + len > buf.size()) throw IoError("corrupt checkpoint: truncated");
    e.name.assign(buf.data() + pos, len);
    pos += len;
    uint32_t rank = take<uint32_t>(buf, pos);
    if (rank > 8) throw ShapeError("checkpoint tensor rank header is implausible");
    for (uint32_t r = 0; r < rank; ++r) {
      int64_t d = take<int64_t>(buf, pos);
      if (d < 0 || d > (1 << 24)) throw ShapeError("checkpoint shape header out of range");
      e.shape.push_back(static_cast<int>(d));
    }
    e.offset = take<uint64_t>(buf, pos);
    if (e.offset != expected_offset) throw ShapeError("checkpoint tensor table offsets inconsistent");
    expected_offset += static_cast<uint64_t>(shape_numel(e.shape)) * sizeof(float);
    table.push_back(std::move(e));
  }
  if (pos + expected_offset != buf.size()) throw IoError("corrupt checkpoint: truncated");
  for (auto& e : table) {
    int64_t count = shape_numel(e.shape);
    std::vector<float> values(static_cast<size_t>(count));
    std::memcpy(values.data(), buf.data() + pos, static_cast<size_t>(count) * sizeof(float));
    pos += static_cast<size_t>(count) * sizeof(float);
    c.tensors.emplace_back(e.name, Tensor::from(e.shape, std::move(values)));
  }
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_to_bytes(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return checkpoint_from_bytes(read_file(path));
}

}  // namespace memlab::train
