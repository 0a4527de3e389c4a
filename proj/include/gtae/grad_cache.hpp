// Copyright (c) 2026, The GTAE Authors
// SPDX-License-Identifier: Apache-2.0
//
// Binary cache of projected gradient features. Little-endian, 8-byte aligned:
//
//   header (40 bytes)
//     "GTAE1"  5 bytes
//     mode     u8   projection mode (0 materialized, 1 counter, 2 identity)
//     pad      2 bytes, zero
//     p, d, seed, sample count   u64 each
//   record (16 + 8d bytes)
//     task_id  u32  task id from the collection
//     y        i8   +1 / -1
//     split    u8   0 train, 2 test
//     pad      2 bytes, zero
//     f0       f64
//     g~       f64 x d

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gtae/affinity.hpp"
#include "gtae/error.hpp"

namespace gtae {

static_assert(std::endian::native == std::endian::little, "gradient cache assumes a little-endian host");

struct CacheHeader {
  ProjectionMode mode = ProjectionMode::counter;
  std::uint64_t p = 0;
  std::uint64_t d = 0;
  std::uint64_t seed = 0;
  std::uint64_t count = 0;
};

inline constexpr char kCacheMagic[5] = {'G', 'T', 'A', 'E', '1'};

namespace detail {

template <typename T>
void put(std::string& buf, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw InvalidArgument("gradient cache: truncated file");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace detail

inline std::string encode_cache(const MemberFeatures& f, const std::vector<int>& ids) {
  std::string buf;
  buf.append(kCacheMagic, 5);
  detail::put<std::uint8_t>(buf, static_cast<std::uint8_t>(f.projection.mode()));
  detail::put<std::uint16_t>(buf, 0);
  detail::put<std::uint64_t>(buf, f.projection.p());
  detail::put<std::uint64_t>(buf, f.projection.d());
  detail::put<std::uint64_t>(buf, f.projection.seed());
  detail::put<std::uint64_t>(buf, f.train.size() + f.test.size());
  for (const auto* split : {&f.train, &f.test}) {
    const std::uint8_t kind = split == &f.train ? 0 : 2;
    for (const auto& s : *split) {
      require(s.task < ids.size(), "gradient cache: task index out of range");
      require(s.g_tilde.size() == f.projection.d(), "gradient cache: feature length differs from d");
      detail::put<std::uint32_t>(buf, static_cast<std::uint32_t>(ids[s.task]));
      detail::put<std::int8_t>(buf, s.y > 0 ? 1 : -1);
      detail::put<std::uint8_t>(buf, kind);
      detail::put<std::uint16_t>(buf, 0);
      detail::put<double>(buf, s.f0);
      for (double v : s.g_tilde) detail::put<double>(buf, v);
    }
  }
  return buf;
}

inline CacheHeader decode_cache_header(const std::string& buf) {
  if (buf.size() < 40 || std::memcmp(buf.data(), kCacheMagic, 5) != 0)
    throw InvalidArgument("gradient cache: bad magic");
  std::size_t pos = 5;
  CacheHeader h;
  const auto mode = detail::take<std::uint8_t>(buf, pos);
  require(mode <= 2, "gradient cache: unknown projection mode");
  h.mode = static_cast<ProjectionMode>(mode);
  pos += 2;
  h.p = detail::take<std::uint64_t>(buf, pos);
  h.d = detail::take<std::uint64_t>(buf, pos);
  h.seed = detail::take<std::uint64_t>(buf, pos);
  h.count = detail::take<std::uint64_t>(buf, pos);
  return h;
}

/// Rebuilds member features. Task ids are mapped back to indices through
/// `tasks`; the projection handle is regenerated from the header.
inline MemberFeatures decode_cache(const std::string& buf, const TaskCollection& tasks) {
  const CacheHeader h = decode_cache_header(buf);
  require(buf.size() == 40 + h.count * (16 + 8 * h.d), "gradient cache: size does not match header");
  MemberFeatures f;
  f.projection = ProjectionHandle(h.p, h.d, h.seed, h.mode);
  std::size_t pos = 40;
  for (std::uint64_t r = 0; r < h.count; ++r) {
    ProjectedSample s;
    s.task = tasks.index_of(static_cast<int>(detail::take<std::uint32_t>(buf, pos)));
    s.y = detail::take<std::int8_t>(buf, pos);
    const auto kind = detail::take<std::uint8_t>(buf, pos);
    require(kind == 0 || kind == 2, "gradient cache: unknown split");
    pos += 2;
    s.f0 = detail::take<double>(buf, pos);
    s.b = -s.y * s.f0;
    s.g_tilde.resize(h.d);
    for (auto& v : s.g_tilde) v = detail::take<double>(buf, pos);
    (kind == 0 ? f.train : f.test).push_back(std::move(s));
  }
  return f;
}

inline void write_cache(const std::string& path, const MemberFeatures& f, const std::vector<int>& ids) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path);
  const std::string buf = encode_cache(f, ids);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot read " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline MemberFeatures read_cache(const std::string& path, const TaskCollection& tasks) {
  return decode_cache(read_file(path), tasks);
}

}  // namespace gtae
