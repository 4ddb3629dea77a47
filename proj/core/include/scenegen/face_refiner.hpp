#pragma once

#include <torch/torch.h>

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "scenegen/pose.hpp"

namespace scenegen {

inline constexpr int kFacialDims = 10;  // (x, y) per facial joint
inline constexpr double kDefaultPerturbMagnitude = 0.05;

// Facial keypoints in the nose-centered frame: coordinates translated by
// -nose and divided by the max-abs radius, so every entry sits in [-1, 1]
// and the nose entry is exactly (0, 0). Order follows kFacialJoints.
struct FacialVector {
  std::array<double, kFacialDims> v{};
  std::array<bool, 5> mask{};  // visibility per facial joint

  double x(int i) const { return v[2 * i]; }
  double y(int i) const { return v[2 * i + 1]; }
};

// What normalize_facial removed; feeds the inverse map.
struct NormContext {
  double nose_x = 0.0;
  double nose_y = 0.0;
  double scale = 1.0;
};

// Nose occluded -> CannotNormalize. Occluded entries are zero with a false
// mask; scale falls back to 1 when no other facial joint is visible or all
// coincide with the nose.
std::pair<FacialVector, NormContext> normalize_facial(
    const PoseSkeleton& skeleton);

// k = v * scale + nose, per visible entry; occluded entries come back
// invisible at (0, 0).
std::array<Keypoint, 5> denormalize_facial(const FacialVector& v,
                                           const NormContext& ctx);

// Uniform per-coordinate noise in [-magnitude, magnitude] on visible
// non-nose entries, clamped to [-1, 1]. Magnitude 0 is the identity.
FacialVector perturb(const FacialVector& v, double magnitude, uint64_t seed);

// 10 -> 128 -> 128 -> 128 (ReLU) -> 10 (tanh) regressor.
struct FaceRefinerImpl : torch::nn::Module {
  FaceRefinerImpl();
  torch::Tensor forward(torch::Tensor v);

  torch::nn::Linear fc1{nullptr}, fc2{nullptr}, fc3{nullptr}, out{nullptr};
};
TORCH_MODULE(FaceRefiner);

void init_stage2(FaceRefiner& net, uint64_t seed);

// One forward pass in the normalized frame. The output keeps the input's
// mask, zeros the masked entries, and pins the nose at (0, 0).
FacialVector refine(const FaceRefiner& net, const FacialVector& v);

// normalize -> refine -> denormalize on the five facial keypoints; all other
// joints pass through untouched. Nose occluded -> CannotNormalize.
PoseSkeleton refine_skeleton(const FaceRefiner& net,
                             const PoseSkeleton& skeleton);

// Squared error averaged over mask-selected coordinates only.
// mask holds one weight per coordinate ({0,1}); an all-zero mask gives 0.
torch::Tensor masked_mse(const torch::Tensor& pred,
                         const torch::Tensor& target,
                         const torch::Tensor& mask);

// Per-coordinate loss mask for a batch of facial vectors: visible non-nose
// coordinates get 1, everything else 0.
torch::Tensor loss_mask(const std::vector<FacialVector>& batch);

struct Stage2Config {
  int steps = 2000;
  int batch = 32;
  double lr = 1e-2;  // plain SGD
  double noise = kDefaultPerturbMagnitude;
  uint64_t seed = 0;
};

struct Stage2TrainResult {
  std::vector<double> loss;  // one masked-MSE value per step
};

// Self-supervised denoising: perturb a clean normalized face, regress back
// to it under the masked MSE.
Stage2TrainResult train_stage2(FaceRefiner& net,
                               const std::vector<FacialVector>& dataset,
                               const Stage2Config& config);

// Checkpoint entries refine/*; kind "stage2".
void save_stage2(const std::filesystem::path& path, const FaceRefiner& net,
                 int64_t step, const std::string& config_json);

struct Stage2Loaded {
  FaceRefiner net;
  int64_t step = 0;
  std::string config_json;
};

Stage2Loaded load_stage2(const std::filesystem::path& path);

uint64_t stage2_arch_hash(const FaceRefiner& net);

}  // namespace scenegen
