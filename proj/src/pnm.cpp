#include "gfrnet/pnm.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace gfrnet {

namespace {

[[noreturn]] void fail(const std::string& path, std::size_t offset, const std::string& what) {
  throw DataError(path + ": " + what + " at byte " + std::to_string(offset));
}

// Whitespace/comment skipper for the PNM header grammar.
void skip_space(const std::string& buf, std::size_t& pos, const std::string& path) {
  bool moved = false;
  while (pos < buf.size()) {
    if (std::isspace(static_cast<unsigned char>(buf[pos]))) {
      ++pos;
      moved = true;
    } else if (buf[pos] == '#') {
      while (pos < buf.size() && buf[pos] != '\n') ++pos;
    } else {
      break;
    }
  }
  if (!moved) fail(path, pos, "expected whitespace in header");
}

int read_int(const std::string& buf, std::size_t& pos, const std::string& path) {
  std::size_t start = pos;
  long value = 0;
  while (pos < buf.size() && std::isdigit(static_cast<unsigned char>(buf[pos]))) {
    value = value * 10 + (buf[pos] - '0');
    if (value > 1 << 30) fail(path, start, "header number out of range");
    ++pos;
  }
  if (pos == start) fail(path, pos, "expected integer in header");
  return static_cast<int>(value);
}

}  // namespace

TensorF load_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open file");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();

  if (buf.size() < 2 || buf[0] != 'P' || (buf[1] != '5' && buf[1] != '6'))
    fail(path, 0, "not a binary PGM/PPM (expected P5 or P6 magic)");
  const int channels = buf[1] == '5' ? 1 : 3;

  std::size_t pos = 2;
  skip_space(buf, pos, path);
  const int w = read_int(buf, pos, path);
  skip_space(buf, pos, path);
  const int h = read_int(buf, pos, path);
  skip_space(buf, pos, path);
  const std::size_t maxval_at = pos;
  const int maxval = read_int(buf, pos, path);
  if (maxval != 255) fail(path, maxval_at, "unsupported maxval " + std::to_string(maxval));
  if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos])))
    fail(path, pos, "expected single whitespace before payload");
  ++pos;

  if (w <= 0 || h <= 0) fail(path, 2, "non-positive image dimensions");
  const std::size_t need = std::size_t(w) * h * channels;
  if (buf.size() - pos < need)
    fail(path, buf.size(), "truncated payload: need " + std::to_string(need) + " bytes, have " +
                               std::to_string(buf.size() - pos));

  TensorF img({1, channels, h, w});
  // Payload is row-major interleaved; tensor layout is planar.
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c)
      for (int ch = 0; ch < channels; ++ch)
        img.at(0, ch, r, c) =
            float(static_cast<unsigned char>(buf[pos + (std::size_t(r) * w + c) * channels + ch])) /
            255.0f;
  return img;
}

void save_pnm(const TensorF& image, const std::string& path) {
  const Shape s = image.shape();
  if (s.n != 1 || (s.c != 1 && s.c != 3))
    throw DataError(path + ": expected a (1,1,H,W) or (1,3,H,W) image, got " + s.str());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open file for writing");
  out << (s.c == 1 ? "P5" : "P6") << "\n" << s.w << " " << s.h << "\n255\n";
  std::string payload(std::size_t(s.w) * s.h * s.c, '\0');
  for (int r = 0; r < s.h; ++r)
    for (int c = 0; c < s.w; ++c)
      for (int ch = 0; ch < s.c; ++ch) {
        long v = std::lround(double(image.at(0, ch, r, c)) * 255.0);
        payload[(std::size_t(r) * s.w + c) * s.c + ch] =
            char(static_cast<unsigned char>(std::clamp(v, 0L, 255L)));
      }
  out.write(payload.data(), std::streamsize(payload.size()));
  if (!out) throw DataError(path + ": write failed");
}

}  // namespace gfrnet
