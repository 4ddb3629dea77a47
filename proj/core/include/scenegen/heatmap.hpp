#pragma once

#include <torch/torch.h>

#include <vector>

#include "scenegen/pose.hpp"

namespace scenegen {

enum class HeatmapMode {
  kBinaryOnehot,   // single skeleton, {0,1} entries
  kBinaryManyhot,  // union of several skeletons, {0,1} entries
  kGaussian,       // isotropic Gaussian blobs, [0,1] entries, max 1 at joints
};

inline constexpr double kDefaultSigma = 1.5;       // px at 64x64
inline constexpr double kGaussianTruncation = 3.0; // support radius in sigmas
inline constexpr double kDecodeThreshold = 0.2;

// Per-joint spatial encoding of one or many skeletons.
// tensor is float32 [kNumJoints, H, W].
struct ContextHeatmap {
  torch::Tensor tensor;
  HeatmapMode mode = HeatmapMode::kBinaryOnehot;
  double sigma = 0.0;  // gaussian mode only
};

// Grid convention: the frame is partitioned into out_w x out_h equal cells;
// a coordinate maps to the cell containing it and decoding reports the cell
// center. This keeps the roundtrip error within half a cell per axis for
// every in-frame coordinate.
int to_grid(double coord, int frame_extent, int grid_extent);
double to_frame(int cell, int frame_extent, int grid_extent);

// One channel per joint; occluded joints give an all-zero channel.
// Gaussian mode renders exp(-d^2 / (2 sigma^2)) of the center-to-center cell
// distance, truncated at 3 sigma, with exactly 1.0 at the joint cell.
ContextHeatmap encode_skeleton(const PoseSkeleton& skeleton, int out_h,
                               int out_w, HeatmapMode mode,
                               double sigma = kDefaultSigma);

// Global scene context H_multi: per-channel element-wise max over the
// Gaussian encodings of all skeletons. Values stay in [0,1] for any n.
ContextHeatmap encode_scene_context(const std::vector<PoseSkeleton>& skeletons,
                                    int out_h, int out_w,
                                    double sigma = kDefaultSigma);

// Per channel, the max activation wins; a joint whose max falls below
// threshold is occluded. Ties break to the lowest row-major index.
PoseSkeleton decode_heatmap(const ContextHeatmap& heatmap, Frame frame,
                            double threshold = kDecodeThreshold);
PoseSkeleton decode_heatmap(const torch::Tensor& tensor, Frame frame,
                            double threshold = kDecodeThreshold);

}  // namespace scenegen
