#include "fcd/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include <png.h>

#include "fcd/scene_io.hpp"

namespace fcd {

namespace fs = std::filesystem;

void write_png(const RgbImage& image, const fs::path& file) {
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height * 3)
    throw Error("write_png: pixel buffer does not match the image size");
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(image.width);
  png.height = static_cast<png_uint_32>(image.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, file.c_str(), 0, image.pixels.data(), 0, nullptr))
    throw Error("write_png: cannot write " + file.string() + ": " + png.message);
}

RgbImage read_png(const fs::path& file) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, file.c_str()))
    throw Error("read_png: cannot read " + file.string() + ": " + png.message);
  png.format = PNG_FORMAT_RGB;
  RgbImage out;
  out.width = static_cast<int>(png.width);
  out.height = static_cast<int>(png.height);
  out.pixels.resize(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, out.pixels.data(), 0, nullptr))
    throw Error("read_png: cannot decode " + file.string() + ": " + png.message);
  return out;
}

namespace {

std::uint8_t to_byte(double v) { return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)); }

// Nearest-neighbour resampling of a grid to the thumbnail geometry.
template <typename F>
void paint(RgbImage& canvas, int column, int thumb_w, int thumb_h, int src_h, int src_w, F&& color) {
  for (int r = 0; r < thumb_h; ++r) {
    const int sr = std::min(src_h - 1, r * src_h / thumb_h);
    for (int c = 0; c < thumb_w; ++c) {
      const int sc = std::min(src_w - 1, c * src_w / thumb_w);
      const auto rgb = color(sr, sc);
      auto* px = &canvas.pixels[(static_cast<std::size_t>(r) * canvas.width + column * thumb_w + c) * 3];
      px[0] = rgb[0];
      px[1] = rgb[1];
      px[2] = rgb[2];
    }
  }
}

}  // namespace

RgbImage render_panel(const PanelInputs& in, int thumbnail) {
  if (!in.bands || !in.difference || !in.fcd || !in.fcdplus || !in.truth)
    throw Error("render_panel: panel '" + in.name + "' is missing an input");
  if (thumbnail < 1) throw Error("render_panel: thumbnail must be positive");
  const int h = in.bands->height, w = in.bands->width;
  const auto same = [&](const auto& g) { return g.height == h && g.width == w; };
  if (!same(*in.difference) || !same(*in.fcd) || !same(*in.fcdplus) || !same(*in.truth))
    throw Error("render_panel: panel '" + in.name + "' inputs differ in shape");
  for (int b : in.rgb_bands)
    if (b < 0 || b >= in.bands->channels) throw Error("render_panel: rgb band index out of range");

  const int tw = thumbnail;
  const int th = std::max(1, thumbnail * h / w);
  RgbImage canvas{tw * kPanelColumns, th, std::vector<std::uint8_t>(static_cast<std::size_t>(tw) * kPanelColumns * th * 3)};

  using Rgb = std::array<std::uint8_t, 3>;
  paint(canvas, 0, tw, th, h, w, [&](int r, int c) {
    Rgb out;
    for (int k = 0; k < 3; ++k) out[k] = to_byte((in.bands->at(in.rgb_bands[k], r, c) + 1.0) / 2.0);
    return out;
  });
  const float peak = *std::max_element(in.difference->values.begin(), in.difference->values.end());
  paint(canvas, 1, tw, th, h, w, [&](int r, int c) {
    const auto v = to_byte(peak > 0 ? in.difference->at(r, c) / peak : 0.0);
    return Rgb{v, v, v};
  });
  const auto mask_color = [](const Mask& m) {
    return [&m](int r, int c) { return m.at(r, c) ? Rgb{255, 255, 255} : Rgb{0, 0, 0}; };
  };
  paint(canvas, 2, tw, th, h, w, mask_color(*in.fcd));
  paint(canvas, 3, tw, th, h, w, mask_color(*in.fcdplus));
  paint(canvas, 4, tw, th, h, w, mask_color(*in.truth));
  return canvas;
}

std::string table_csv(const std::vector<MetricsReport>& reports) {
  std::string out = "method,f1,accuracy\n";
  char line[256];
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%s,%.6f,%.6f\n", r.method.c_str(), r.overall.scores.f1,
                  r.overall.scores.accuracy);
    out += line;
  }
  return out;
}

nlohmann::json report_document(const std::vector<MetricsReport>& reports) {
  nlohmann::json methods = nlohmann::json::array();
  for (const auto& r : reports) methods.push_back(to_json(r));
  return {{"methods", methods}};
}

void emit_artifacts(const std::vector<MetricsReport>& reports, const std::vector<PanelInputs>& panels,
                    const fs::path& out_dir, int thumbnail) {
  std::error_code ec;
  fs::create_directories(out_dir / "panels", ec);
  if (ec) throw Error("emit_artifacts: cannot create " + (out_dir / "panels").string() + ": " + ec.message());
  write_text_file(out_dir / "report.json", report_document(reports).dump(2) + "\n");
  write_text_file(out_dir / "table.csv", table_csv(reports));
  for (const auto& p : panels) write_png(render_panel(p, thumbnail), out_dir / "panels" / (p.name + ".png"));
}

}  // namespace fcd
