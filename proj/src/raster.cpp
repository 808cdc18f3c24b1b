#include "fcd/raster.hpp"

#include <algorithm>
#include <numeric>

namespace fcd {

std::string to_string(PixelOrigin origin) {
  return "(" + std::to_string(origin.row) + "," + std::to_string(origin.col) + ")";
}

Image::Image(int c, int h, int w, float fill) : channels(c), height(h), width(w) {
  if (c < 0 || h < 0 || w < 0) throw Error("image: negative shape");
  values.assign(static_cast<std::size_t>(c) * h * w, fill);
}

int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

Image pad_reflect(const Image& image, int out_height, int out_width) {
  if (out_height < image.height || out_width < image.width) throw Error("pad_reflect: target smaller than image");
  if (out_height - image.height >= image.height || out_width - image.width >= image.width)
    throw Error("pad_reflect: pad width must be smaller than the image extent");
  Image out(image.channels, out_height, out_width);
  for (int c = 0; c < image.channels; ++c)
    for (int r = 0; r < out_height; ++r) {
      const int sr = reflect_index(r, image.height);
      for (int col = 0; col < out_width; ++col) out.at(c, r, col) = image.at(c, sr, reflect_index(col, image.width));
    }
  return out;
}

Mask pad_reflect(const Mask& mask, int out_height, int out_width) {
  if (out_height < mask.height || out_width < mask.width) throw Error("pad_reflect: target smaller than mask");
  if (out_height - mask.height >= mask.height || out_width - mask.width >= mask.width)
    throw Error("pad_reflect: pad width must be smaller than the mask extent");
  Mask out(out_height, out_width);
  for (int r = 0; r < out_height; ++r) {
    const int sr = reflect_index(r, mask.height);
    for (int col = 0; col < out_width; ++col) out.at(r, col) = mask.at(sr, reflect_index(col, mask.width));
  }
  return out;
}

Image crop(const Image& image, int row, int col, int height, int width) {
  if (row < 0 || col < 0 || row + height > image.height || col + width > image.width)
    throw Error("crop: window outside image");
  Image out(image.channels, height, width);
  for (int c = 0; c < image.channels; ++c)
    for (int r = 0; r < height; ++r) {
      const float* src = &image.values[c * image.plane_size() + static_cast<std::size_t>(row + r) * image.width + col];
      std::copy(src, src + width, &out.at(c, r, 0));
    }
  return out;
}

Mask crop(const Mask& mask, int row, int col, int height, int width) {
  if (row < 0 || col < 0 || row + height > mask.height || col + width > mask.width)
    throw Error("crop: window outside mask");
  Mask out(height, width);
  for (int r = 0; r < height; ++r) {
    const auto* src = &mask.values[static_cast<std::size_t>(row + r) * mask.width + col];
    std::copy(src, src + width, &out.at(r, 0));
  }
  return out;
}

std::size_t count_ones(const Mask& mask) {
  return static_cast<std::size_t>(std::count_if(mask.values.begin(), mask.values.end(), [](auto v) { return v != 0; }));
}

}  // namespace fcd
