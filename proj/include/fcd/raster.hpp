#pragma once

#include <compare>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fcd {

/// Base for every rejection raised by the pipeline. The message names the
/// offending field or artifact.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PixelOrigin {
  int row = 0;
  int col = 0;
  auto operator<=>(const PixelOrigin&) const = default;
};

std::string to_string(PixelOrigin origin);

/// Band-major (C x H x W) float raster.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> values;

  Image() = default;
  Image(int c, int h, int w, float fill = 0.0f);

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  float& at(int c, int r, int col) { return values[c * plane_size() + static_cast<std::size_t>(r) * width + col]; }
  float at(int c, int r, int col) const { return values[c * plane_size() + static_cast<std::size_t>(r) * width + col]; }
  std::span<float> band(int c) { return {values.data() + c * plane_size(), plane_size()}; }
  std::span<const float> band(int c) const { return {values.data() + c * plane_size(), plane_size()}; }

  bool operator==(const Image&) const = default;
};

/// Row-major single-plane raster.
template <typename T>
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<T> values;

  Grid() = default;
  Grid(int h, int w, T fill = T{}) : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {
    if (h < 0 || w < 0) throw Error("grid: negative shape");
  }

  std::size_t size() const { return values.size(); }
  T& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
  const T& at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }

  bool operator==(const Grid&) const = default;
};

/// Binary per-pixel mask; 1 = cloud.
using Mask = Grid<std::uint8_t>;
/// Non-negative per-pixel score (difference map or activation map).
using ScoreMap = Grid<float>;

/// Mirror index into [0, n) without repeating the edge sample.
int reflect_index(int i, int n);

/// Reflect-pad on the bottom and right edges.
Image pad_reflect(const Image& image, int out_height, int out_width);
Mask pad_reflect(const Mask& mask, int out_height, int out_width);

Image crop(const Image& image, int row, int col, int height, int width);
Mask crop(const Mask& mask, int row, int col, int height, int width);

std::size_t count_ones(const Mask& mask);

}  // namespace fcd
