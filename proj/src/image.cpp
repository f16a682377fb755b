#include "ber/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "ber/errors.hpp"

namespace ber {
namespace {

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  // skips whitespace and '#' comments between header tokens
  for (;;) {
    const int ch = in.peek();
    if (ch == '#') {
      std::string discard;
      std::getline(in, discard);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int value = 0;
  if (!(in >> value)) throw LoadError("malformed PPM header in " + path.string());
  return value;
}

struct PpmHeader {
  int width;
  int height;
};

PpmHeader read_header(std::istream& in, const std::filesystem::path& path) {
  char magic[2] = {};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || magic[1] != '6') throw LoadError("not a binary PPM (P6): " + path.string());
  const int w = read_header_int(in, path);
  const int h = read_header_int(in, path);
  const int maxval = read_header_int(in, path);
  if (w <= 0 || h <= 0) throw LoadError("bad PPM dimensions in " + path.string());
  if (maxval != 255) throw LoadError("unsupported PPM maxval (need 255) in " + path.string());
  in.get();  // single whitespace before raster
  return {w, h};
}

}  // namespace

std::pair<int, int> read_ppm_size(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  const auto hdr = read_header(in, path);
  return {hdr.width, hdr.height};
}

RasterImage read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  const auto hdr = read_header(in, path);
  RasterImage img(hdr.width, hdr.height, 3);
  std::vector<unsigned char> bytes(img.data.size());
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw LoadError("truncated PPM raster in " + path.string());
  std::transform(bytes.begin(), bytes.end(), img.data.begin(), [](unsigned char b) { return static_cast<float>(b); });
  return img;
}

void write_ppm(const std::filesystem::path& path, const RasterImage& img) {
  if (img.channels != 3) throw std::invalid_argument("write_ppm: need 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.data.size());
  std::transform(img.data.begin(), img.data.end(), bytes.begin(), [](float v) {
    return static_cast<unsigned char>(std::clamp(std::lround(v), 0L, 255L));
  });
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace ber
