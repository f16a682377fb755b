#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace ber {

/// Interleaved row-major image. Values are on the 0..255 scale until the
/// normalization stage, after which they are unbounded floats.
struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<float> data;

  RasterImage() = default;
  RasterImage(int w, int h, int c = 3, float fill = 0.0f)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {
    if (w < 0 || h < 0 || c <= 0) throw std::invalid_argument("RasterImage: bad dimensions");
  }

  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
               static_cast<std::size_t>(channels) +
           static_cast<std::size_t>(c);
  }
  float& at(int x, int y, int c) { return data[index(x, y, c)]; }
  float at(int x, int y, int c) const { return data[index(x, y, c)]; }

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }

  bool operator==(const RasterImage&) const = default;
};

/// Binary PPM (P6, maxval 255). Values are rounded and clamped to 0..255 on write.
RasterImage read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const RasterImage& img);

/// Reads only the P6 header; returns {width, height}.
std::pair<int, int> read_ppm_size(const std::filesystem::path& path);

}  // namespace ber
