#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ift {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using index_t = std::int64_t;
using Shape = std::vector<index_t>;

inline index_t numel(const Shape& s) {
  index_t n = 1;
  for (index_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw Error(msg);
}

// Row-major strides.
inline Shape strides_of(const Shape& s) {
  Shape st(s.size());
  index_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[i] = acc;
    acc *= s[i];
  }
  return st;
}

inline int normalize_axis(int axis, int rank) {
  int a = axis < 0 ? axis + rank : axis;
  require(a >= 0 && a < rank, "axis " + std::to_string(axis) + " out of range for rank " +
                                  std::to_string(rank));
  return a;
}

}  // namespace ift
