#include "ift/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

namespace ift {

namespace {

void check_rgb(const Tensor<float>& img, const char* what) {
  require(img.defined() && img.rank() == 3 && img.dim(0) == 3,
          std::string(what) + ": image must be [3,H,W]");
}

// Skips whitespace and '#' comment lines in a PNM header.
int next_header_token(std::istream& is, std::string& tok) {
  tok.clear();
  int c = is.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = is.get();
    } else if (std::isspace(c)) {
      if (!tok.empty()) return 0;
    } else {
      tok.push_back(static_cast<char>(c));
    }
    c = is.get();
  }
  return tok.empty() ? -1 : 0;
}

}  // namespace

void save_pfm(const std::string& path, const Tensor<float>& img) {
  check_rgb(img, "save_pfm");
  const index_t H = img.dim(1), W = img.dim(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open for writing: " + path);
  os << "PF\n" << W << " " << H << "\n-1.0\n";
  std::vector<float> row(static_cast<std::size_t>(W * 3));
  const float* p = img.data();
  for (index_t y = H - 1; y >= 0; --y) {  // PFM stores bottom row first
    for (index_t x = 0; x < W; ++x)
      for (index_t c = 0; c < 3; ++c)
        row[static_cast<std::size_t>(x * 3 + c)] = p[(c * H + y) * W + x];
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size() * sizeof(float)));
  }
  if (!os) throw Error("write failed: " + path);
}

Tensor<float> load_pfm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open image: " + path);
  std::string tok;
  if (next_header_token(is, tok) != 0 || tok != "PF")
    throw Error("not a color PFM file: " + path);
  if (next_header_token(is, tok) != 0) throw Error("bad PFM header: " + path);
  const index_t W = std::stoll(tok);
  if (next_header_token(is, tok) != 0) throw Error("bad PFM header: " + path);
  const index_t H = std::stoll(tok);
  if (next_header_token(is, tok) != 0) throw Error("bad PFM header: " + path);
  const double scale = std::stod(tok);
  require(scale < 0, "big-endian PFM not supported: " + path);
  require(W > 0 && H > 0, "bad PFM dimensions: " + path);

  Tensor<float> img({3, H, W});
  std::vector<float> row(static_cast<std::size_t>(W * 3));
  float* p = img.data();
  for (index_t y = H - 1; y >= 0; --y) {
    is.read(reinterpret_cast<char*>(row.data()),
            static_cast<std::streamsize>(row.size() * sizeof(float)));
    if (!is) throw Error("truncated PFM file: " + path);
    for (index_t x = 0; x < W; ++x)
      for (index_t c = 0; c < 3; ++c)
        p[(c * H + y) * W + x] = row[static_cast<std::size_t>(x * 3 + c)];
  }
  return img;
}

void save_ppm(const std::string& path, const Tensor<float>& img) {
  check_rgb(img, "save_ppm");
  const index_t H = img.dim(1), W = img.dim(2);
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open for writing: " + path);
  os << "P6\n" << W << " " << H << "\n255\n";
  std::vector<unsigned char> row(static_cast<std::size_t>(W * 3));
  const float* p = img.data();
  for (index_t y = 0; y < H; ++y) {
    for (index_t x = 0; x < W; ++x)
      for (index_t c = 0; c < 3; ++c) {
        const float v = std::clamp(p[(c * H + y) * W + x], 0.0f, 1.0f);
        row[static_cast<std::size_t>(x * 3 + c)] =
            static_cast<unsigned char>(std::lround(v * 255.0f));
      }
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw Error("write failed: " + path);
}

Tensor<float> load_ppm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open image: " + path);
  std::string tok;
  if (next_header_token(is, tok) != 0 || tok != "P6") throw Error("not a P6 PPM file: " + path);
  if (next_header_token(is, tok) != 0) throw Error("bad PPM header: " + path);
  const index_t W = std::stoll(tok);
  if (next_header_token(is, tok) != 0) throw Error("bad PPM header: " + path);
  const index_t H = std::stoll(tok);
  if (next_header_token(is, tok) != 0) throw Error("bad PPM header: " + path);
  const long maxval = std::stol(tok);
  require(maxval == 255, "only 8-bit PPM supported: " + path);
  require(W > 0 && H > 0, "bad PPM dimensions: " + path);

  Tensor<float> img({3, H, W});
  std::vector<unsigned char> row(static_cast<std::size_t>(W * 3));
  float* p = img.data();
  for (index_t y = 0; y < H; ++y) {
    is.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size()));
    if (!is) throw Error("truncated PPM file: " + path);
    for (index_t x = 0; x < W; ++x)
      for (index_t c = 0; c < 3; ++c)
        p[(c * H + y) * W + x] = static_cast<float>(row[static_cast<std::size_t>(x * 3 + c)]) / 255.0f;
  }
  return img;
}

}  // namespace ift
