#pragma once

#include <vector>

#include <torch/torch.h>

#include "fcd/data.hpp"

namespace fcd {

using PatchRefs = std::vector<const Patch*>;

PatchRefs refs(const std::vector<Patch>& patches);

/// [B, C, P, P] float32.
torch::Tensor stack_images(const PatchRefs& patches);
/// [B] float32 image labels (0 clear, 1 cloudy).
torch::Tensor stack_labels(const PatchRefs& patches);
/// [B, 1, P, P] float32 pixel masks; every patch must carry one.
torch::Tensor stack_masks(const PatchRefs& patches);

torch::Tensor to_tensor(const Image& image);
Image image_from_tensor(const torch::Tensor& chw);
ScoreMap score_map_from_tensor(const torch::Tensor& hw);
Mask mask_from_tensor(const torch::Tensor& hw);

}  // namespace fcd
