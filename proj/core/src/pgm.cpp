#include "timecast/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "timecast/errors.hpp"

namespace timecast::pgm {

namespace {
void check_size(int width, int height, std::size_t n) {
  if (width <= 0 || height <= 0 ||
      n != static_cast<std::size_t>(width) * static_cast<std::size_t>(height)) {
    throw Error(errtag::kIo, "pgm: value count does not match dimensions");
  }
}

int next_token(std::istream& is) {
  // skips whitespace and '#' comments
  int c = is.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = is.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = is.get();
  }
  if (c == EOF) throw Error(errtag::kIo, "pgm: unexpected end of header");
  int value = 0;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    c = is.get();
  }
  return value;
}
}  // namespace

void write_pgm16(const std::filesystem::path& path, int width, int height,
                 const std::vector<float>& values) {
  check_size(width, height, values.size());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(errtag::kIo, "cannot open " + path.string() + " for writing");
  os << "P5\n" << width << " " << height << "\n65535\n";
  for (float v : values) {
    const long q = std::lround(std::clamp(v, 0.f, 1.f) * 65535.f);
    const unsigned char hi = static_cast<unsigned char>((q >> 8) & 0xff);
    const unsigned char lo = static_cast<unsigned char>(q & 0xff);
    os.put(static_cast<char>(hi));
    os.put(static_cast<char>(lo));
  }
  if (!os.good()) throw Error(errtag::kIo, "write failed: " + path.string());
}

Image read_pgm16(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(errtag::kIo, "cannot open " + path.string());
  char magic[2];
  is.read(magic, 2);
  if (!is.good() || magic[0] != 'P' || magic[1] != '5') {
    throw Error(errtag::kIo, "not a binary PGM: " + path.string());
  }
  Image img;
  img.width = next_token(is);
  img.height = next_token(is);
  const int maxval = next_token(is);
  if (maxval != 65535) {
    throw Error(errtag::kIo, "expected 16-bit PGM (maxval 65535) in " + path.string());
  }
  const std::size_t n =
      static_cast<std::size_t>(img.width) * static_cast<std::size_t>(img.height);
  img.values.resize(n);
  std::vector<unsigned char> raw(n * 2);
  is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (is.gcount() != static_cast<std::streamsize>(raw.size())) {
    throw Error(errtag::kIo, "truncated PGM: " + path.string());
  }
  for (std::size_t i = 0; i < n; ++i) {
    const int q = (raw[2 * i] << 8) | raw[2 * i + 1];
    img.values[i] = static_cast<float>(q) / 65535.f;
  }
  return img;
}

void write_pgm8(const std::filesystem::path& path, int width, int height,
                const std::vector<float>& values) {
  check_size(width, height, values.size());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(errtag::kIo, "cannot open " + path.string() + " for writing");
  os << "P5\n" << width << " " << height << "\n255\n";
  for (float v : values) {
    os.put(static_cast<char>(std::lround(std::clamp(v, 0.f, 1.f) * 255.f)));
  }
  if (!os.good()) throw Error(errtag::kIo, "write failed: " + path.string());
}

}  // namespace timecast::pgm
