#include "fcd/tensors.hpp"

#include <cstring>

namespace fcd {

PatchRefs refs(const std::vector<Patch>& patches) {
  PatchRefs out;
  out.reserve(patches.size());
  for (const auto& p : patches) out.push_back(&p);
  return out;
}

torch::Tensor to_tensor(const Image& image) {
  auto t = torch::empty({image.channels, image.height, image.width}, torch::kFloat32);
  std::memcpy(t.data_ptr<float>(), image.values.data(), image.values.size() * sizeof(float));
  return t;
}

torch::Tensor stack_images(const PatchRefs& patches) {
  if (patches.empty()) throw Error("stack_images: empty batch");
  const auto& first = patches.front()->data;
  auto out = torch::empty({static_cast<long>(patches.size()), first.channels, first.height, first.width}, torch::kFloat32);
  float* dst = out.data_ptr<float>();
  for (const Patch* p : patches) {
    if (p->data.channels != first.channels || p->data.height != first.height || p->data.width != first.width)
      throw Error("stack_images: patch " + p->id() + " has a different shape");
    std::memcpy(dst, p->data.values.data(), p->data.values.size() * sizeof(float));
    dst += p->data.values.size();
  }
  return out;
}

torch::Tensor stack_labels(const PatchRefs& patches) {
  auto out = torch::empty({static_cast<long>(patches.size())}, torch::kFloat32);
  auto acc = out.accessor<float, 1>();
  for (std::size_t i = 0; i < patches.size(); ++i) acc[static_cast<long>(i)] = static_cast<float>(to_int(patches[i]->image_label));
  return out;
}

torch::Tensor stack_masks(const PatchRefs& patches) {
  if (patches.empty()) throw Error("stack_masks: empty batch");
  const int p = patches.front()->patch_size();
  auto out = torch::empty({static_cast<long>(patches.size()), 1, p, p}, torch::kFloat32);
  float* dst = out.data_ptr<float>();
  for (const Patch* patch : patches) {
    if (!patch->pixel_mask) throw Error("stack_masks: patch " + patch->id() + " has no pixel mask");
    for (auto v : patch->pixel_mask->values) *dst++ = static_cast<float>(v);
  }
  return out;
}

Image image_from_tensor(const torch::Tensor& chw) {
  const auto t = chw.detach().to(torch::kFloat32).contiguous();
  if (t.dim() != 3) throw Error("image_from_tensor: expected [C, H, W]");
  Image img(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), static_cast<int>(t.size(2)));
  std::memcpy(img.values.data(), t.data_ptr<float>(), img.values.size() * sizeof(float));
  return img;
}

ScoreMap score_map_from_tensor(const torch::Tensor& hw) {
  const auto t = hw.detach().to(torch::kFloat32).contiguous();
  if (t.dim() != 2) throw Error("score_map_from_tensor: expected [H, W]");
  ScoreMap m(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)));
  std::memcpy(m.values.data(), t.data_ptr<float>(), m.values.size() * sizeof(float));
  return m;
}

Mask mask_from_tensor(const torch::Tensor& hw) {
  const auto t = hw.detach().to(torch::kUInt8).contiguous();
  if (t.dim() != 2) throw Error("mask_from_tensor: expected [H, W]");
  Mask m(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)));
  std::memcpy(m.values.data(), t.data_ptr<std::uint8_t>(), m.values.size());
  return m;
}

}  // namespace fcd
