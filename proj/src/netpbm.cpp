#include "cdnn/netpbm.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

namespace cdnn {
namespace {

struct Parser {
  std::string path;
  std::vector<uint8_t> bytes;
  size_t pos = 0;

  [[noreturn]] void fail(const std::string& why) const {
    throw ImageIoError(path + ": " + why);
  }
  // whitespace and '#' comments separate header tokens
  void skip_space() {
    while (pos < bytes.size()) {
      const uint8_t c = bytes[pos];
      if (c == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        ++pos;
      } else {
        return;
      }
    }
  }
  int64_t number() {
    skip_space();
    if (pos >= bytes.size() || bytes[pos] < '0' || bytes[pos] > '9')
      fail("malformed header");
    int64_t v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (int64_t(1) << 40)) fail("absurd header value");
      ++pos;
    }
    return v;
  }
  void magic(const char* want) {
    if (bytes.size() < 2 || bytes[0] != uint8_t(want[0]) ||
        bytes[1] != uint8_t(want[1]))
      fail(std::string("not a ") + want + " file");
    pos = 2;
  }
  // exactly one whitespace byte separates maxval from the payload
  void end_header() {
    if (pos >= bytes.size()) fail("truncated header");
    const uint8_t c = bytes[pos];
    if (c != ' ' && c != '\t' && c != '\r' && c != '\n')
      fail("malformed header");
    ++pos;
  }
  const uint8_t* payload(size_t n) {
    if (bytes.size() - pos < n) fail("truncated pixel data");
    if (bytes.size() - pos > n) fail("trailing bytes after pixel data");
    return bytes.data() + pos;
  }
};

Parser slurp(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ImageIoError(path + ": cannot open");
  Parser p;
  p.path = path;
  p.bytes.assign((std::istreambuf_iterator<char>(f)),
                 std::istreambuf_iterator<char>());
  return p;
}

void atomic_write(const std::string& path, const std::string& data) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    f.write(data.data(), std::streamsize(data.size()));
    if (!f) throw ImageIoError(tmp + ": cannot write");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw ImageIoError(path + ": cannot replace");
}

void check_plane(const Tensor<float>& t, const char* who) {
  if (t.shape.b != 1 || t.shape.c != 1 || t.shape.h < 1 || t.shape.w < 1)
    throw ImageIoError(std::string(who) + ": tensor must be (1,1,H,W)");
}

}  // namespace

RawImage read_ppm(const std::string& path) {
  Parser p = slurp(path);
  p.magic("P6");
  RawImage img;
  img.w = p.number();
  img.h = p.number();
  const int64_t maxval = p.number();
  if (img.w < 1 || img.h < 1) p.fail("empty image");
  if (maxval != 255) p.fail("unsupported maxval (want 255)");
  p.end_header();
  const size_t n = size_t(img.w) * size_t(img.h) * 3;
  const uint8_t* d = p.payload(n);
  img.rgb.assign(d, d + n);
  return img;
}

GrayImage read_pgm(const std::string& path) {
  Parser p = slurp(path);
  p.magic("P5");
  GrayImage img;
  img.w = p.number();
  img.h = p.number();
  const int64_t maxval = p.number();
  if (img.w < 1 || img.h < 1) p.fail("empty image");
  if (maxval < 1 || maxval > 65535) p.fail("unsupported maxval");
  img.maxval = int(maxval);
  p.end_header();
  const size_t n = size_t(img.w) * size_t(img.h);
  img.v.resize(n);
  if (maxval > 255) {
    const uint8_t* d = p.payload(n * 2);
    for (size_t k = 0; k < n; ++k)
      img.v[k] = uint16_t((uint16_t(d[2 * k]) << 8) | d[2 * k + 1]);
  } else {
    const uint8_t* d = p.payload(n);
    for (size_t k = 0; k < n; ++k) img.v[k] = d[k];
  }
  return img;
}

void write_pgm_mask(const Tensor<float>& mask, const std::string& path) {
  check_plane(mask, "write_pgm_mask");
  std::string out = "P5\n" + std::to_string(mask.shape.w) + " " +
                    std::to_string(mask.shape.h) + "\n255\n";
  for (float v : mask.data) out.push_back(v > 0.5f ? char(255) : char(0));
  atomic_write(path, out);
}

void write_pgm16(const Tensor<float>& map, const std::string& path) {
  check_plane(map, "write_pgm16");
  std::string out = "P5\n" + std::to_string(map.shape.w) + " " +
                    std::to_string(map.shape.h) + "\n65535\n";
  for (float v : map.data) {
    const float c = v < 0 ? 0.0f : v > 1 ? 1.0f : v;
    const uint16_t q = uint16_t(std::lround(double(c) * 65535.0));
    out.push_back(char(q >> 8));
    out.push_back(char(q & 0xff));
  }
  atomic_write(path, out);
}

void write_ppm(const RawImage& img, const std::string& path) {
  if (img.w < 1 || img.h < 1 ||
      img.rgb.size() != size_t(img.w) * size_t(img.h) * 3)
    throw ImageIoError(path + ": inconsistent RawImage");
  std::string out = "P6\n" + std::to_string(img.w) + " " +
                    std::to_string(img.h) + "\n255\n";
  out.append(reinterpret_cast<const char*>(img.rgb.data()), img.rgb.size());
  atomic_write(path, out);
}

Tensor<float> mask_tensor(const GrayImage& g) {
  Tensor<float> t({1, 1, g.h, g.w});
  const int thresh = g.maxval / 2;
  for (size_t k = 0; k < g.v.size(); ++k)
    t.data[k] = g.v[k] > thresh ? 1.0f : 0.0f;
  return t;
}

}  // namespace cdnn
