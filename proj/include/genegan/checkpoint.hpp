// Copyright (c) 2026 the genegan-cpp authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary checkpoint format:
//   magic "GGCK", u32 version=1,
//   config block: u32 length + canonical key=value text, u64 step, u64 prng_state,
//   tensor table: per tensor u16 name length, UTF-8 name, u8 dtype tag
//     (0=float32, 1=float64), u8 rank, rank x u64 dims, raw little-endian payload,
//   trailing CRC32 (IEEE reflected) of all preceding bytes.
//
// Tensor names are prefixed "param/", "opt/" or "state/" to route them back
// into the parameter store, optimizer state and batch-norm running stats.
// Save -> load -> save is byte-identical.

#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "genegan/errors.hpp"
#include "genegan/tensor.hpp"

namespace genegan {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace detail_ckpt {

inline std::uint32_t crc32_update(std::uint32_t crc, const unsigned char* data, std::size_t len) {
  static const std::array<std::uint32_t, 256> table = [] {
    std::array<std::uint32_t, 256> t{};
    for (std::uint32_t i = 0; i < 256; ++i) {
      std::uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  crc ^= 0xFFFFFFFFu;
  for (std::size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

inline std::uint32_t crc32(const std::vector<unsigned char>& buf, std::size_t len) {
  return crc32_update(0, buf.data(), len);
}

struct Writer {
  std::vector<unsigned char> buf;

  template <typename V>
  void raw(const V& v) {
    const auto* p = reinterpret_cast<const unsigned char*>(&v);
    buf.insert(buf.end(), p, p + sizeof(V));
  }
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    buf.insert(buf.end(), b, b + n);
  }
};

struct Cursor {
  const std::vector<unsigned char>& buf;
  std::size_t pos = 0;
  std::size_t limit = 0;  // end of the CRC-covered region

  std::size_t remaining() const { return limit - pos; }

  template <typename V>
  V raw(const std::string& context) {
    if (remaining() < sizeof(V))
      throw CheckpointError(CheckpointError::Code::kTruncated, "checkpoint truncated while reading " + context);
    V v;
    std::memcpy(&v, buf.data() + pos, sizeof(V));
    pos += sizeof(V);
    return v;
  }
  void bytes(void* out, std::size_t n, const std::string& context) {
    if (remaining() < n)
      throw CheckpointError(CheckpointError::Code::kTruncated, "checkpoint truncated while reading " + context);
    std::memcpy(out, buf.data() + pos, n);
    pos += n;
  }
};

template <typename T>
constexpr std::uint8_t dtype_tag() {
  if constexpr (std::is_same_v<T, float>) return 0;
  else if constexpr (std::is_same_v<T, double>) return 1;
  else static_assert(sizeof(T) == 0, "unsupported checkpoint dtype");
}

}  // namespace detail_ckpt

template <typename T>
struct CheckpointData {
  std::string config_text;  // canonical key=value snapshot of the train config
  std::uint64_t step = 0;
  std::uint64_t prng_state = 0;
  std::map<std::string, Tensor<T>> params;
  std::map<std::string, Tensor<T>> opt;
  std::map<std::string, Tensor<T>> state;
};

template <typename T>
void save_checkpoint(const std::string& path, const CheckpointData<T>& ckpt) {
  detail_ckpt::Writer w;
  w.bytes("GGCK", 4);
  w.raw<std::uint32_t>(1);
  w.raw<std::uint32_t>(static_cast<std::uint32_t>(ckpt.config_text.size()));
  w.bytes(ckpt.config_text.data(), ckpt.config_text.size());
  w.raw<std::uint64_t>(ckpt.step);
  w.raw<std::uint64_t>(ckpt.prng_state);

  auto write_table = [&](const char* prefix, const std::map<std::string, Tensor<T>>& table) {
    for (const auto& [name, tensor] : table) {
      const std::string full = std::string(prefix) + name;
      w.raw<std::uint16_t>(static_cast<std::uint16_t>(full.size()));
      w.bytes(full.data(), full.size());
      w.raw<std::uint8_t>(detail_ckpt::dtype_tag<T>());
      w.raw<std::uint8_t>(static_cast<std::uint8_t>(tensor.rank()));
      for (std::int64_t d : tensor.shape) w.raw<std::uint64_t>(static_cast<std::uint64_t>(d));
      w.bytes(tensor.data.data(), tensor.data.size() * sizeof(T));
    }
  };
  write_table("param/", ckpt.params);
  write_table("opt/", ckpt.opt);
  write_table("state/", ckpt.state);

  const std::uint32_t crc = detail_ckpt::crc32(w.buf, w.buf.size());
  w.raw<std::uint32_t>(crc);

  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError(path + ": cannot open checkpoint for writing");
  f.write(reinterpret_cast<const char*>(w.buf.data()), static_cast<std::streamsize>(w.buf.size()));
  if (!f) throw DataError(path + ": checkpoint write failed");
}

template <typename T>
CheckpointData<T> load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError(path + ": cannot open checkpoint");
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  if (buf.size() < 4 || std::memcmp(buf.data(), "GGCK", 4) != 0)
    throw CheckpointError(CheckpointError::Code::kBadMagic, path + ": bad checkpoint magic");
  if (buf.size() < 12)
    throw CheckpointError(CheckpointError::Code::kTruncated, path + ": checkpoint shorter than its fixed header");
  detail_ckpt::Cursor c{buf, 4, buf.size() - 4};
  const auto version = c.raw<std::uint32_t>("version");
  if (version != 1)
    throw CheckpointError(CheckpointError::Code::kBadVersion,
                          path + ": unsupported checkpoint version " + std::to_string(version));

  CheckpointData<T> out;
  const auto cfg_len = c.raw<std::uint32_t>("config block length");
  out.config_text.resize(cfg_len);
  c.bytes(out.config_text.data(), cfg_len, "config block");
  out.step = c.raw<std::uint64_t>("step counter");
  out.prng_state = c.raw<std::uint64_t>("prng state");

  while (c.remaining() > 0) {
    const auto name_len = c.raw<std::uint16_t>("tensor name length");
    std::string name(name_len, '\0');
    c.bytes(name.data(), name_len, "tensor name");
    const auto tag = c.raw<std::uint8_t>("dtype tag of " + name);
    if (tag != detail_ckpt::dtype_tag<T>())
      throw CheckpointError(CheckpointError::Code::kBadFormat,
                            path + ": tensor " + name + " has dtype tag " + std::to_string(tag) +
                                ", expected " + std::to_string(detail_ckpt::dtype_tag<T>()));
    const auto rank = c.raw<std::uint8_t>("rank of " + name);
    Shape shape;
    std::int64_t numel = 1;
    for (std::uint8_t i = 0; i < rank; ++i) {
      const auto d = c.raw<std::uint64_t>("dims of " + name);
      if (d == 0 || d > (1ull << 32))
        throw CheckpointError(CheckpointError::Code::kBadFormat, path + ": bad dimension in tensor " + name);
      shape.push_back(static_cast<std::int64_t>(d));
      numel *= static_cast<std::int64_t>(d);
    }
    Tensor<T> tensor(shape);
    c.bytes(tensor.data.data(), static_cast<std::size_t>(numel) * sizeof(T), "payload of " + name);

    if (name.rfind("param/", 0) == 0) out.params.emplace(name.substr(6), std::move(tensor));
    else if (name.rfind("opt/", 0) == 0) out.opt.emplace(name.substr(4), std::move(tensor));
    else if (name.rfind("state/", 0) == 0) out.state.emplace(name.substr(6), std::move(tensor));
    else
      throw CheckpointError(CheckpointError::Code::kBadFormat, path + ": unknown tensor prefix in " + name);
  }

  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
  const std::uint32_t computed = detail_ckpt::crc32(buf, buf.size() - 4);
  if (stored != computed)
    throw CheckpointError(CheckpointError::Code::kBadCrc, path + ": checkpoint CRC mismatch");
  return out;
}

}  // namespace genegan
