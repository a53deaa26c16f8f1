#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <type_traits>
#include <vector>

#include "ift/tensor.hpp"

namespace ift {

// Tensor container: "IFT1", u8 dtype (0=f32, 1=f64), u8 rank,
// rank x u64 little-endian dims, then the row-major little-endian payload.

namespace detail {

inline void put_u64_le(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t get_u64_le(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

template <typename T>
std::vector<T> get_payload(std::istream& is, std::size_t n, const std::string& path) {
  std::vector<T> out(n);
  is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(n * sizeof(T)));
  if (!is) throw Error("truncated tensor file: " + path);
  return out;
}

}  // namespace detail

template <typename S>
void save_tensor(const std::string& path, const Tensor<S>& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open for writing: " + path);
  os.write("IFT1", 4);
  const unsigned char dtype = std::is_same_v<S, float> ? 0 : 1;
  const unsigned char rank = static_cast<unsigned char>(t.rank());
  os.put(static_cast<char>(dtype));
  os.put(static_cast<char>(rank));
  for (index_t d : t.shape()) detail::put_u64_le(os, static_cast<std::uint64_t>(d));
  os.write(reinterpret_cast<const char*>(t.data()),
           static_cast<std::streamsize>(sizeof(S) * static_cast<std::size_t>(t.numel())));
  if (!os) throw Error("write failed: " + path);
}

template <typename S>
Tensor<S> load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open tensor file: " + path);
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "IFT1", 4) != 0)
    throw Error("not a tensor file (bad magic): " + path);
  const int dtype = is.get();
  const int rank = is.get();
  if (dtype != 0 && dtype != 1) throw Error("unknown tensor dtype in " + path);
  if (rank < 0 || !is) throw Error("truncated tensor file: " + path);
  Shape shape(static_cast<std::size_t>(rank));
  for (auto& d : shape) {
    d = static_cast<index_t>(detail::get_u64_le(is));
    if (!is) throw Error("truncated tensor file: " + path);
    if (d < 0) throw Error("bad dimension in tensor file: " + path);
  }
  const std::size_t n = static_cast<std::size_t>(numel(shape));
  std::vector<S> data(n);
  if (dtype == 0) {
    auto raw = detail::get_payload<float>(is, n, path);
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<S>(raw[i]);
  } else {
    auto raw = detail::get_payload<double>(is, n, path);
    for (std::size_t i = 0; i < n; ++i) data[i] = static_cast<S>(raw[i]);
  }
  return Tensor<S>::from(std::move(shape), std::move(data));
}

}  // namespace ift
