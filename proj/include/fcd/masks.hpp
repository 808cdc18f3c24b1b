#pragma once

#include <functional>
#include <vector>

#include <torch/torch.h>

#include "fcd/data.hpp"
#include "fcd/metrics.hpp"
#include "fcd/networks.hpp"
#include "fcd/tensors.hpp"

namespace fcd {

/// Any translator G(x, c) on batches: images [B, C, P, P], labels [B].
using GeneratorFn = std::function<torch::Tensor(const torch::Tensor& images, const torch::Tensor& labels)>;

/// Inference-mode wrapper (eval mode, no autograd) around a trained generator.
GeneratorFn inference(Generator generator);
GeneratorFn identity_generator();

/// y = G(x, 0).
Image translate_to_clear(const GeneratorFn& g, const Image& x);
torch::Tensor translate_to_clear(const GeneratorFn& g, const torch::Tensor& images);

/// Per-pixel mean over channels of |x - y|.
ScoreMap difference_map(const Image& x, const Image& y);
/// Batched form: [B, C, H, W] x2 -> [B, H, W].
torch::Tensor difference_map(const torch::Tensor& x, const torch::Tensor& y);

std::vector<ScoreMap> difference_maps(const GeneratorFn& g, const PatchRefs& patches, int batch_size = 64);

/// mask = values > threshold.
Mask binarize(const ScoreMap& map, float threshold);

struct SweepPoint {
  float threshold = 0.0f;
  Confusion confusion;
  double f1 = 0.0;
};

struct ThresholdSelection {
  float threshold = 0.0f;
  double f1 = 0.0;
  std::vector<SweepPoint> sweep;
};

/// `points` evenly spaced values over [0, max_value].
std::vector<float> threshold_grid(float max_value, int points = 256);

/// Pixel-pooled F1 of binarize(map, t) for every grid point; the argmax is
/// returned, ties going to the smaller threshold. Grid must be ascending.
ThresholdSelection select_threshold(const std::vector<ScoreMap>& maps, const std::vector<const Mask*>& truths,
                                    const std::vector<float>& grid);

/// Cloudy-labelled patches of a validation set; each must carry ground truth.
PatchRefs cloudy_validation_patches(const PatchRefs& val_patches);

/// Sweep for score maps aligned with `patches`. An empty grid means
/// threshold_grid(max observed value, grid_points).
ThresholdSelection select_threshold_on_maps(const std::vector<ScoreMap>& maps, const PatchRefs& patches,
                                            const std::vector<float>& grid, int grid_points = 256);

/// Sweep over difference maps of the cloudy patches in `val_patches`.
/// An empty grid means threshold_grid(max observed value, grid_points).
ThresholdSelection select_threshold(const GeneratorFn& g, const PatchRefs& val_patches,
                                    const std::vector<float>& grid = {}, int grid_points = 256);

/// Clear-labelled patches get an all-zero mask when use_image_labels is set;
/// everything else goes through the difference map.
Mask predict_patch_mask(const GeneratorFn& g, const Patch& patch, float threshold, bool use_image_labels);
std::vector<Mask> predict_patch_masks(const GeneratorFn& g, const PatchRefs& patches, float threshold,
                                      bool use_image_labels, int batch_size = 64);

template <typename T>
struct Placed {
  PixelOrigin origin;
  Grid<T> tile;
};
using PlacedMask = Placed<std::uint8_t>;

/// Places tiles on the padded canvas and crops back to the scene extent.
/// Every grid origin must be supplied exactly once.
Mask stitch_masks(const std::vector<PlacedMask>& tiles, const TileGrid& grid);
ScoreMap stitch_scores(const std::vector<Placed<float>>& tiles, const TileGrid& grid);

}  // namespace fcd
