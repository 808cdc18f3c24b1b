#pragma once

#include <cstdint>
#include <vector>

#include "fcd/data.hpp"

namespace fcd {

/// Parameters of the desk-scale synthetic corpus. Ground truth is exact:
/// a pixel is cloud iff its compositing alpha exceeds alpha_threshold.
struct SynthSpec {
  int num_scenes = 60;
  int height = 256;
  int width = 256;
  int channels = 3;
  double cloud_density = 0.5;
  double alpha_threshold = 0.2;
  /// Share of scenes with bright snow cover, which is easy to confuse with
  /// cloud centres in the visible bands.
  double snow_fraction = 0.3;
  /// Share of cloudy scenes that also carry a sheet of thin haze.
  double haze_fraction = 0.5;
  std::uint64_t seed = 0;
  std::string biome = "synthetic";
};

void validate(const SynthSpec& spec);

/// Per-band cloud top reflectance, near the top of the band range.
std::vector<float> cloud_brightness(int channels);
/// Per-band snow reflectance: as bright as cloud except in every third band.
std::vector<float> snow_brightness(int channels);

/// Cloud opacity in [0, 1]; smooth blobs that taper to 0 at their edges.
Grid<float> synthetic_cloud_alpha(const SynthSpec& spec, int index);

/// Scene `index` of the corpus described by spec. Bit-reproducible.
Scene generate_synthetic_scene(const SynthSpec& spec, int index = 0);

std::vector<Scene> generate_synthetic_corpus(const SynthSpec& spec);

}  // namespace fcd
