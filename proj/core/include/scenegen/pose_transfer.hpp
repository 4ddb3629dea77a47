#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scenegen/heatmap.hpp"
#include "scenegen/perceptual.hpp"
#include "scenegen/pose.hpp"

namespace scenegen {

inline constexpr int kRenderRes = 256;                  // person crop side
inline constexpr int kPosePairChannels = 2 * kNumJoints;  // H_A ++ H_B

// Depth/resolution of the renderer. full() is the real model; tiny() is a
// 2-level 64x64 variant for fast property tests, not a fidelity claim.
struct RenderArch {
  int levels = 4;
  int res = kRenderRes;

  static RenderArch full() { return {4, kRenderRes}; }
  static RenderArch tiny() { return {2, 64}; }

  int channels_at(int level) const { return 64 << level; }  // level 0 = stem
  bool operator==(const RenderArch&) const = default;
};

// Two 3x3 convs with batch norm and an identity shortcut.
struct ResBlockImpl : torch::nn::Module {
  explicit ResBlockImpl(int channels);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
};
TORCH_MODULE(ResBlock);

// One branch of the renderer encoder: 3x3 stem to 64 channels, then
// `levels` blocks of [4x4/s2 conv + BN + ReLU + ResBlock], doubling
// channels each level.
struct EncoderBranchImpl : torch::nn::Module {
  EncoderBranchImpl(int in_channels, int levels);
  // Returns features at levels 1..levels (post-ResBlock).
  std::vector<torch::Tensor> forward(torch::Tensor x);

  torch::nn::Conv2d stem{nullptr};
  std::vector<torch::nn::Conv2d> downs;
  std::vector<torch::nn::BatchNorm2d> bns;
  std::vector<ResBlock> blocks;
};
TORCH_MODULE(EncoderBranch);

// Dual-branch attention-gated encoder-decoder. The image branch encodes
// the reference appearance, the pose branch encodes the concatenated
// source/target heatmaps, and at every level the image features are gated
// by sigmoid(pose features) before feeding the decoder.
struct RenderGeneratorImpl : torch::nn::Module {
  explicit RenderGeneratorImpl(RenderArch arch = RenderArch::full());

  torch::Tensor forward(const torch::Tensor& image,
                        const torch::Tensor& poses);

  // Intermediate tensors for gating and shape diagnostics.
  struct Trace {
    std::vector<torch::Tensor> image_levels;  // index l-1 => level l
    std::vector<torch::Tensor> pose_levels;
    std::vector<torch::Tensor> gated;
    torch::Tensor output;
  };
  Trace forward_traced(const torch::Tensor& image,
                       const torch::Tensor& poses);

  RenderArch arch;
  EncoderBranch image_branch{nullptr}, pose_branch{nullptr};
  std::vector<torch::nn::ConvTranspose2d> ups;
  std::vector<torch::nn::BatchNorm2d> up_bns;
  std::vector<ResBlock> up_blocks;
  std::vector<ResBlock> tail;
  torch::nn::Conv2d head{nullptr};
};
TORCH_MODULE(RenderGenerator);

// Patch discriminator over the channel-concat of two images (6 channels):
// 64/128/256/512 filters, 4x4 kernels, strides 2,2,2,1, then a stride-1
// single-channel head with sigmoid. 70x70 receptive field; 30x30 patch map
// at 256x256 input.
struct PatchDiscriminatorImpl : torch::nn::Module {
  PatchDiscriminatorImpl();
  torch::Tensor forward(const torch::Tensor& a, const torch::Tensor& b);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr},
      conv4{nullptr}, head{nullptr};
  torch::nn::BatchNorm2d bn2{nullptr}, bn3{nullptr}, bn4{nullptr};
};
TORCH_MODULE(PatchDiscriminator);

struct StageThreeModel {
  RenderGenerator generator;
  PatchDiscriminator discriminator;

  explicit StageThreeModel(RenderArch arch = RenderArch::full());
  // N(0, 0.02) init from the run's "init" substream.
  void init_params(uint64_t seed);
  void train(bool on = true);
  void eval() { train(false); }
};

// [36, res, res] pose conditioning: source heatmap channels then target
// heatmap channels, gaussian mode.
torch::Tensor make_pose_pair(const PoseSkeleton& source,
                             const PoseSkeleton& target, int res = kRenderRes,
                             double sigma = kDefaultSigma);

// Heatmap width that keeps the blob-to-canvas ratio of the 64 px default
// (1.5 px at 64 -> 6 px at 256).
inline double scaled_sigma(int res) { return kDefaultSigma * res / 64.0; }

// Renders the person from `image` in the pose described by `poses`.
// Accepts [3,R,R] / [36,R,R] or batched [B,...]; output matches, in [-1,1].
torch::Tensor gr_forward(StageThreeModel& model, const torch::Tensor& image,
                         const torch::Tensor& poses);

// Patch probability map in (0,1); [30,30] per sample at 256x256 input.
torch::Tensor dr_forward(StageThreeModel& model, const torch::Tensor& a,
                         const torch::Tensor& b);

// Mean binary cross-entropy of `probs` against a constant 0/1 target,
// with 1e-7 clamping against log(0).
torch::Tensor bce_against(const torch::Tensor& probs, double target);

// Sum over `layers` of the mean absolute feature difference (each layer
// normalized by its own feature volume).
torch::Tensor perceptual_loss(const FeatureExtractor& extractor,
                              const torch::Tensor& gen,
                              const torch::Tensor& real,
                              const std::vector<int>& layers = {4, 9});

struct LossWeights {
  double lambda_l1 = 5.0;
  double lambda_gan = 1.0;
  double lambda_perc = 5.0;
};

// lambda_l1 * l1 + lambda_gan * gan + lambda_perc * perceptual.
torch::Tensor generator_objective(const torch::Tensor& l1,
                                  const torch::Tensor& gan,
                                  const torch::Tensor& perceptual,
                                  const LossWeights& weights = {});

// (BCE(real vs 1) + BCE(fake vs 0)) / 2.
torch::Tensor discriminator_objective(const torch::Tensor& d_real,
                                      const torch::Tensor& d_fake);

struct TransferSample {
  torch::Tensor image_a;  // [3,res,res] in [-1,1]
  PoseSkeleton pose_a;
  torch::Tensor image_b;
  PoseSkeleton pose_b;
};

struct Stage3Config {
  int steps = 2000;
  int batch = 4;
  double lr = 1e-3;  // Adam, beta1 = 0.5, beta2 = 0.999
  double beta1 = 0.5;
  double beta2 = 0.999;
  LossWeights weights;
  double sigma = kDefaultSigma;
  uint64_t seed = 0;
  RenderArch arch = RenderArch::full();
  // Perceptual feature extractor; a fixed-seed random trunk is built from
  // `seed` when absent. Frozen either way.
  std::shared_ptr<FeatureExtractor> extractor;
};

struct Stage3StepLog {
  int step = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  double l1 = 0.0;
};

struct Stage3TrainResult {
  std::vector<Stage3StepLog> log;
};

// Alternating single discriminator / single generator step per batch.
Stage3TrainResult train_stage3(StageThreeModel& model,
                               const std::vector<TransferSample>& dataset,
                               const Stage3Config& config);

// Checkpoint entries g_r/*, d_r/* (+ optimizer/* when given).
void save_stage3(const std::filesystem::path& path,
                 const StageThreeModel& model, int64_t step,
                 const std::string& config_json,
                 const torch::optim::Adam* gen_opt = nullptr,
                 const torch::optim::Adam* disc_opt = nullptr);

struct Stage3Loaded {
  StageThreeModel model;
  int64_t step = 0;
  std::string config_json;
};

Stage3Loaded load_stage3(const std::filesystem::path& path);

uint64_t stage3_arch_hash(const StageThreeModel& model);

}  // namespace scenegen
