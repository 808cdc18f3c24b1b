#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fcd/data.hpp"
#include "fcd/rng.hpp"
#include "fcd/synthetic.hpp"
#include "fcd/tensors.hpp"

namespace fcd::testing {

// Normalized patches of a few small synthetic scenes.
inline std::vector<Patch> synthetic_patches(int scenes, int size, int patch, std::uint64_t seed, int first = 0) {
  SynthSpec spec;
  spec.num_scenes = first + scenes;
  spec.height = size;
  spec.width = size;
  spec.seed = seed;
  std::vector<Scene> raw;
  for (int i = 0; i < scenes; ++i) raw.push_back(generate_synthetic_scene(spec, first + i));
  std::vector<const Scene*> ptrs;
  for (const auto& s : raw) ptrs.push_back(&s);
  const auto stats = compute_band_stats(ptrs, 1.0, 99.0);
  std::vector<Patch> out;
  for (const auto& s : raw) {
    auto tiled = tile_scene(normalize_bands(s, stats), patch);
    for (auto& p : tiled.patches) out.push_back(std::move(p));
  }
  return out;
}

inline Mask random_mask(int h, int w, Rng& rng, double p = 0.5) {
  Mask m(h, w);
  for (auto& v : m.values) v = rng.uniform() < p ? 1 : 0;
  return m;
}

inline ScoreMap random_scores(int h, int w, Rng& rng) {
  ScoreMap m(h, w);
  for (auto& v : m.values) v = static_cast<float>(rng.uniform());
  return m;
}

// A pipeline configuration small enough to run every stage in seconds.
inline std::string tiny_config_text() {
  return R"(seed = 5
[data]
patch_size = 16
[synth]
num_scenes = 12
height = 64
width = 64
[gan]
iterations = 12
batch_size = 4
checkpoint_every = 6
d_steps = 1
g_width = 8
g_down = 1
g_res = 1
d_width = 8
d_layers = 2
max_val_patches = 16
[cam]
epochs = 2
batch_size = 16
width = 8
[refine]
epochs = 2
batch_size = 16
width = 4
depth = 2
[finetune]
epochs = 2
label_fraction = 0.1
[report]
panels = 2
thumbnail = 32
)";
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("fcd-test-" + tag + "-" + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace fcd::testing
