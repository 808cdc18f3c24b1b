#include "fcd/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "fcd/rng.hpp"

namespace fcd {

namespace {

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

// Multi-octave value noise in [0, 1].
Grid<float> value_noise(int height, int width, int base_cell, int octaves, Rng& rng) {
  Grid<double> acc(height, width, 0.0);
  double amplitude = 1.0;
  double total = 0.0;
  int cell = base_cell;
  for (int o = 0; o < octaves && cell >= 1; ++o, cell /= 2, amplitude *= 0.5) {
    const int gh = height / cell + 2;
    const int gw = width / cell + 2;
    std::vector<double> lattice(static_cast<std::size_t>(gh) * gw);
    for (auto& v : lattice) v = rng.uniform();
    for (int r = 0; r < height; ++r) {
      const double fy = static_cast<double>(r) / cell;
      const int y0 = static_cast<int>(fy);
      const double ty = smoothstep(fy - y0);
      for (int c = 0; c < width; ++c) {
        const double fx = static_cast<double>(c) / cell;
        const int x0 = static_cast<int>(fx);
        const double tx = smoothstep(fx - x0);
        const double v00 = lattice[static_cast<std::size_t>(y0) * gw + x0];
        const double v01 = lattice[static_cast<std::size_t>(y0) * gw + x0 + 1];
        const double v10 = lattice[static_cast<std::size_t>(y0 + 1) * gw + x0];
        const double v11 = lattice[static_cast<std::size_t>(y0 + 1) * gw + x0 + 1];
        const double top = v00 + (v01 - v00) * tx;
        const double bottom = v10 + (v11 - v10) * tx;
        acc.at(r, c) += amplitude * (top + (bottom - top) * ty);
      }
    }
    total += amplitude;
  }
  Grid<float> out(height, width);
  for (std::size_t i = 0; i < out.size(); ++i) out.values[i] = static_cast<float>(acc.values[i] / total);
  return out;
}

}  // namespace

void validate(const SynthSpec& spec) {
  if (spec.num_scenes < 1) throw Error("synth: num_scenes must be >= 1");
  if (spec.height < 8 || spec.width < 8) throw Error("synth: scene_size must be at least 8x8");
  if (spec.channels < 1) throw Error("synth: channels must be >= 1");
  if (!(spec.cloud_density >= 0.0 && spec.cloud_density <= 1.0)) throw Error("synth: cloud_density must lie in [0, 1]");
  if (!(spec.haze_fraction >= 0.0 && spec.haze_fraction <= 1.0)) throw Error("synth: haze_fraction must lie in [0, 1]");
  if (!(spec.snow_fraction >= 0.0 && spec.snow_fraction <= 1.0)) throw Error("synth: snow_fraction must lie in [0, 1]");
  if (!(spec.alpha_threshold > 0.0 && spec.alpha_threshold < 1.0))
    throw Error("synth: alpha_threshold must lie in (0, 1)");
}

std::vector<float> cloud_brightness(int channels) {
  std::vector<float> out(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) out[static_cast<std::size_t>(c)] = 0.85f + 0.03f * static_cast<float>(c % 3);
  return out;
}

std::vector<float> snow_brightness(int channels) {
  std::vector<float> out(static_cast<std::size_t>(channels));
  for (int c = 0; c < channels; ++c) out[static_cast<std::size_t>(c)] = c % 3 == 2 ? 0.45f : 0.80f + 0.02f * (c % 3);
  return out;
}

Grid<float> synthetic_cloud_alpha(const SynthSpec& spec, int index) {
  Rng rng(derive_seed(spec.seed, "clouds/" + std::to_string(index)));
  const int h = spec.height;
  const int w = spec.width;
  const double scale = std::sqrt(static_cast<double>(h) * w) / 256.0;

  // Scene-level cover varies widely so that both clear and overcast patches occur.
  const double cover = spec.cloud_density * rng.uniform(0.0, 2.0);
  const int blobs = static_cast<int>(std::lround(cover * 20.0 * scale * scale));

  Grid<double> field(h, w, 0.0);
  for (int b = 0; b < blobs; ++b) {
    const double cy = rng.uniform(-0.1, 1.1) * h;
    const double cx = rng.uniform(-0.1, 1.1) * w;
    const double radius = rng.uniform(8.0, 36.0) * scale;
    const double amp = rng.uniform(0.5, 1.4);
    const double stretch = rng.uniform(0.6, 1.6);
    const double inv = 1.0 / (2.0 * radius * radius);
    const int reach = static_cast<int>(std::ceil(3.5 * radius * std::max(stretch, 1.0 / stretch)));
    for (int r = std::max(0, static_cast<int>(cy) - reach); r < std::min(h, static_cast<int>(cy) + reach); ++r)
      for (int c = std::max(0, static_cast<int>(cx) - reach); c < std::min(w, static_cast<int>(cx) + reach); ++c) {
        const double dy = (r - cy) * stretch;
        const double dx = (c - cx) / stretch;
        field.at(r, c) += amp * std::exp(-(dy * dy + dx * dx) * inv);
      }
  }

  Grid<float> alpha(h, w, 0.0f);
  if (spec.cloud_density == 0.0) return alpha;
  const Grid<float> ragged = value_noise(h, w, 16, 3, rng);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const double f = field.values[i] * (0.6 + 0.8 * ragged.values[i]);
    alpha.values[i] = static_cast<float>(smoothstep((f - 0.25) / 0.55));
  }

  // Optional sheet of thin, semi-transparent haze.
  if (rng.uniform() < spec.haze_fraction) {
    const Grid<float> sheet = value_noise(h, w, 64, 3, rng);
    for (std::size_t i = 0; i < alpha.size(); ++i) {
      const double haze = 0.35 * smoothstep((sheet.values[i] - 0.5) / 0.15);
      alpha.values[i] = static_cast<float>(1.0 - (1.0 - alpha.values[i]) * (1.0 - haze));
    }
  }
  return alpha;
}

Scene generate_synthetic_scene(const SynthSpec& spec, int index) {
  validate(spec);
  const int h = spec.height;
  const int w = spec.width;
  Rng rng(derive_seed(spec.seed, "ground/" + std::to_string(index)));

  char id[32];
  std::snprintf(id, sizeof id, "synth_%03d", index);
  Scene scene;
  scene.id = id;
  scene.biome = spec.biome;
  scene.bands = Image(spec.channels, h, w);

  // Two land-cover materials mixed by a low-frequency field, plus per-band texture.
  const Grid<float> cover = value_noise(h, w, 64, 4, rng);
  const double shift = rng.uniform(-0.04, 0.04);
  const auto cloud = cloud_brightness(spec.channels);
  const Grid<float> alpha = synthetic_cloud_alpha(spec, index);
  const auto snow = snow_brightness(spec.channels);
  Grid<float> snow_cover(h, w, 0.0f);
  if (rng.uniform() < spec.snow_fraction) {
    const Grid<float> field = value_noise(h, w, 64, 3, rng);
    for (std::size_t i = 0; i < snow_cover.size(); ++i)
      snow_cover.values[i] = static_cast<float>(smoothstep((field.values[i] - 0.45) / 0.1));
  }

  for (int c = 0; c < spec.channels; ++c) {
    const double dark = 0.06 + 0.04 * (c % 3) + shift;
    const double bright = 0.26 + 0.05 * ((c + 1) % 3) + shift;
    const Grid<float> texture = value_noise(h, w, 8, 2, rng);
    auto band = scene.bands.band(c);
    const double top = cloud[static_cast<std::size_t>(c)];
    for (std::size_t i = 0; i < band.size(); ++i) {
      const double mix = smoothstep(cover.values[i] * 1.6 - 0.3);
      const double land = dark + (bright - dark) * mix;
      const double ground = land + (snow[static_cast<std::size_t>(c)] - land) * snow_cover.values[i] +
                            0.05 * (texture.values[i] - 0.5);
      const double a = alpha.values[i];
      band[i] = static_cast<float>((1.0 - a) * ground + a * top);
    }
  }

  Mask labels(h, w);
  for (std::size_t i = 0; i < labels.size(); ++i)
    labels.values[i] = alpha.values[i] > spec.alpha_threshold ? 1 : 0;
  scene.pixel_labels = std::move(labels);
  return scene;
}

std::vector<Scene> generate_synthetic_corpus(const SynthSpec& spec) {
  validate(spec);
  std::vector<Scene> out;
  out.reserve(static_cast<std::size_t>(spec.num_scenes));
  for (int i = 0; i < spec.num_scenes; ++i) out.push_back(generate_synthetic_scene(spec, i));
  return out;
}

}  // namespace fcd
