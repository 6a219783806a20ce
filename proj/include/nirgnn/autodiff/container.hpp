#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <type_traits>
#include <string>
#include <vector>

#include "nirgnn/error.hpp"

// Flat named-array container shared by checkpoints and dataset shards.
//
// Layout (all integers little-endian):
//   magic     8 bytes  "NIRGNN01"
//   count     u64
//   entries   count times:
//     name_len u32, name bytes (UTF-8)
//     rank     u32, dims u64 x rank
//     values   f64 x product(dims), row-major

namespace nirgnn::ad {

inline constexpr std::array<char, 8> container_magic = {'N', 'I', 'R', 'G', 'N', 'N', '0', '1'};

struct NamedArray {
  std::string name;
  std::vector<std::uint64_t> dims;
  std::vector<double> values;

  std::uint64_t numel() const {
    std::uint64_t n = 1;
    for (auto d : dims) n *= d;
    return n;
  }

  bool operator==(const NamedArray&) const = default;
};

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
  static_assert(std::is_integral_v<T>);
  std::array<char, sizeof(T)> b{};
  auto u = static_cast<std::make_unsigned_t<T>>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<char>((u >> (8 * i)) & 0xFF);
  os.write(b.data(), b.size());
}

template <class T>
T get_le(std::istream& is, const char* what) {
  std::array<unsigned char, sizeof(T)> b{};
  if (!is.read(reinterpret_cast<char*>(b.data()), b.size())) {
    throw IngestError(std::string("truncated container while reading ") + what);
  }
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<std::make_unsigned_t<T>>(b[i]) << (8 * i);
  return static_cast<T>(u);
}

}  // namespace detail

inline void write_container(std::ostream& os, const std::vector<NamedArray>& entries) {
  os.write(container_magic.data(), container_magic.size());
  detail::put_le<std::uint64_t>(os, entries.size());
  for (const auto& e : entries) {
    if (e.numel() != e.values.size()) {
      throw DimensionError("container entry '" + e.name + "' has inconsistent dims");
    }
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) detail::put_le<std::uint64_t>(os, d);
    for (double v : e.values) detail::put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(v));
  }
}

inline std::vector<NamedArray> read_container(std::istream& is) {
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != container_magic) {
    throw IngestError("not a NIRGNN01 container (bad magic)");
  }
  const auto count = detail::get_le<std::uint64_t>(is, "entry count");
  std::vector<NamedArray> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedArray e;
    const auto name_len = detail::get_le<std::uint32_t>(is, "name length");
    e.name.resize(name_len);
    if (!is.read(e.name.data(), name_len)) throw IngestError("truncated container while reading name");
    const auto rank = detail::get_le<std::uint32_t>(is, "rank");
    if (rank > 8) throw IngestError("container entry '" + e.name + "' has implausible rank");
    for (std::uint32_t r = 0; r < rank; ++r) e.dims.push_back(detail::get_le<std::uint64_t>(is, "dims"));
    const auto n = e.numel();
    e.values.resize(n);
    for (std::uint64_t k = 0; k < n; ++k) {
      e.values[k] = std::bit_cast<double>(detail::get_le<std::uint64_t>(is, "values"));
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline void save_container(const std::string& path, const std::vector<NamedArray>& entries) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IngestError("cannot open " + path + " for writing");
  write_container(os, entries);
  if (!os) throw IngestError("failed writing " + path);
}

inline std::vector<NamedArray> load_container(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IngestError("cannot open " + path);
  return read_container(is);
}

inline const NamedArray& find_entry(const std::vector<NamedArray>& entries, const std::string& name) {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  throw LookupError("container has no entry '" + name + "'");
}

}  // namespace nirgnn::ad
