#pragma once

#include <torch/torch.h>

#include <array>
#include <filesystem>

#include "scenegen/pose.hpp"

namespace scenegen {

// RGB raster: float32 [3, H, W], values in [0, 1].
struct Image {
  torch::Tensor tensor;

  Image() = default;
  explicit Image(torch::Tensor t) : tensor(std::move(t)) {}
  Image(int height, int width, std::array<float, 3> fill = {0, 0, 0});

  int height() const { return static_cast<int>(tensor.size(1)); }
  int width() const { return static_cast<int>(tensor.size(2)); }
};

// 8-bit PNG I/O. Grayscale and alpha inputs are folded to plain RGB.
Image load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const Image& image);

Image resize_bilinear(const Image& image, int out_h, int out_w);

// Solid thick segment (capsule) and filled disk; coordinates in pixels,
// clipped to the frame.
void draw_segment(Image& image, double x0, double y0, double x1, double y1,
                  double thickness, std::array<float, 3> rgb);
void draw_disk(Image& image, double cx, double cy, double radius,
               std::array<float, 3> rgb);

// Per-person palette used by the synthetic renderer; index selects a fixed
// set of limb/torso/head colors so appearance is a deterministic identity.
struct FigureStyle {
  std::array<float, 3> torso{0.8f, 0.2f, 0.2f};
  std::array<float, 3> limbs{0.2f, 0.4f, 0.9f};
  std::array<float, 3> head{0.95f, 0.8f, 0.6f};
  double thickness = 3.0;
};

FigureStyle palette_style(int index);

// Stick-figure rendering of a skeleton into an existing image, in the
// image's own pixel frame (the skeleton is rescaled from its frame).
void render_figure(Image& image, const PoseSkeleton& skeleton,
                   const FigureStyle& style);

// Bone list used by the renderer and overlay plots.
const std::vector<std::pair<Joint, Joint>>& skeleton_bones();

// [-1,1] network range <-> [0,1] raster range.
torch::Tensor to_unit_range(const torch::Tensor& pm1);
torch::Tensor to_pm1_range(const torch::Tensor& unit);

}  // namespace scenegen
