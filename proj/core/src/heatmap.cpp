#include "scenegen/heatmap.hpp"

#include <algorithm>
#include <cmath>

#include "scenegen/errors.hpp"

namespace scenegen {

int to_grid(double coord, int frame_extent, int grid_extent) {
  const double v = coord * double(grid_extent) / double(frame_extent);
  int cell = static_cast<int>(std::floor(v));
  return std::clamp(cell, 0, grid_extent - 1);
}

double to_frame(int cell, int frame_extent, int grid_extent) {
  return (cell + 0.5) * double(frame_extent) / double(grid_extent);
}

namespace {

void check_out_size(int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0)
    throw InvalidArgument("encode: non-positive output size");
}

void render_joint(torch::TensorAccessor<float, 2> channel, int gx, int gy,
                  HeatmapMode mode, double sigma, int out_h, int out_w) {
  if (mode != HeatmapMode::kGaussian) {
    channel[gy][gx] = 1.0f;
    return;
  }
  const int radius = static_cast<int>(std::ceil(kGaussianTruncation * sigma));
  const double r2 = kGaussianTruncation * sigma * kGaussianTruncation * sigma;
  const double inv = 1.0 / (2.0 * sigma * sigma);
  const int y0 = std::max(0, gy - radius), y1 = std::min(out_h - 1, gy + radius);
  const int x0 = std::max(0, gx - radius), x1 = std::min(out_w - 1, gx + radius);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const double d2 = double(x - gx) * (x - gx) + double(y - gy) * (y - gy);
      if (d2 > r2) continue;
      const float v = static_cast<float>(std::exp(-d2 * inv));
      channel[y][x] = std::max(channel[y][x], v);
    }
  }
}

}  // namespace

ContextHeatmap encode_skeleton(const PoseSkeleton& skeleton, int out_h,
                               int out_w, HeatmapMode mode, double sigma) {
  check_out_size(out_h, out_w);
  if (mode == HeatmapMode::kGaussian && sigma <= 0.0)
    throw InvalidArgument("encode_skeleton: gaussian mode needs sigma > 0");
  if (skeleton.frame.width <= 0 || skeleton.frame.height <= 0)
    throw InvalidArgument("encode_skeleton: skeleton has no declared frame");
  if (!skeleton.in_frame())
    throw InvalidArgument("encode_skeleton: visible keypoint outside frame");

  auto tensor = torch::zeros({kNumJoints, out_h, out_w}, torch::kFloat32);
  auto acc = tensor.accessor<float, 3>();
  for (int j = 0; j < kNumJoints; ++j) {
    const auto& kp = skeleton.joints[j];
    if (!kp.visible) continue;
    const int gx = to_grid(kp.x, skeleton.frame.width, out_w);
    const int gy = to_grid(kp.y, skeleton.frame.height, out_h);
    render_joint(acc[j], gx, gy, mode, sigma, out_h, out_w);
  }
  return {tensor, mode, mode == HeatmapMode::kGaussian ? sigma : 0.0};
}

ContextHeatmap encode_scene_context(const std::vector<PoseSkeleton>& skeletons,
                                    int out_h, int out_w, double sigma) {
  if (skeletons.empty())
    throw InvalidArgument("encode_scene_context: empty skeleton list");
  check_out_size(out_h, out_w);
  const Frame frame = skeletons.front().frame;
  for (const auto& s : skeletons) {
    if (!(s.frame == frame))
      throw InvalidArgument("encode_scene_context: skeletons disagree on frame");
  }
  auto result = encode_skeleton(skeletons.front(), out_h, out_w,
                                HeatmapMode::kGaussian, sigma);
  for (size_t i = 1; i < skeletons.size(); ++i) {
    auto next = encode_skeleton(skeletons[i], out_h, out_w,
                                HeatmapMode::kGaussian, sigma);
    result.tensor = torch::maximum(result.tensor, next.tensor);
  }
  return result;
}

PoseSkeleton decode_heatmap(const ContextHeatmap& heatmap, Frame frame,
                            double threshold) {
  return decode_heatmap(heatmap.tensor, frame, threshold);
}

PoseSkeleton decode_heatmap(const torch::Tensor& tensor, Frame frame,
                            double threshold) {
  if (tensor.dim() != 3 || tensor.size(0) != kNumJoints)
    throw InvalidArgument("decode_heatmap: expected [18, H, W] tensor");
  if (frame.width <= 0 || frame.height <= 0)
    throw InvalidArgument("decode_heatmap: non-positive frame");

  const auto contiguous = tensor.to(torch::kFloat32).contiguous();
  const int out_h = static_cast<int>(contiguous.size(1));
  const int out_w = static_cast<int>(contiguous.size(2));
  auto acc = contiguous.accessor<float, 3>();

  PoseSkeleton skeleton;
  skeleton.frame = frame;
  for (int j = 0; j < kNumJoints; ++j) {
    float best = -std::numeric_limits<float>::infinity();
    int best_x = 0, best_y = 0;
    for (int y = 0; y < out_h; ++y) {
      for (int x = 0; x < out_w; ++x) {
        const float v = acc[j][y][x];
        if (v > best) {  // strict: first row-major max wins ties
          best = v;
          best_x = x;
          best_y = y;
        }
      }
    }
    if (best >= threshold) {
      skeleton.joints[j] = {to_frame(best_x, frame.width, out_w),
                            to_frame(best_y, frame.height, out_h), true};
    }
  }
  return skeleton;
}

}  // namespace scenegen
