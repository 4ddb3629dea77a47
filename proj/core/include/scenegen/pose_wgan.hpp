#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "scenegen/heatmap.hpp"
#include "scenegen/pose.hpp"

namespace scenegen {

inline constexpr int kContextRes = 64;   // stage-1 heatmap side
inline constexpr int kEmbedDim = 512;    // context embedding v_B
inline constexpr int kNoiseDim = 512;    // z ~ N(0, I)

// H_multi [B,18,64,64] -> v_B [B,512] via four stride-2 convs
// (32/64/128/256 filters, leaky ReLU 0.2) and a linear head.
struct ContextEncoderImpl : torch::nn::Module {
  ContextEncoderImpl();
  torch::Tensor forward(torch::Tensor h_multi);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr},
      conv4{nullptr};
  torch::nn::Linear fc{nullptr};
};
TORCH_MODULE(ContextEncoder);

// concat(v_B, z) -> seed projection to 512x2x2 -> four up-conv blocks
// (256/128/64/32 filters, each transposed conv + batch norm + ReLU)
// -> final 18-filter transposed conv + tanh -> [B,18,64,64] in [-1,1].
struct PoseGeneratorImpl : torch::nn::Module {
  PoseGeneratorImpl();
  torch::Tensor forward(torch::Tensor v_b, torch::Tensor z);

  torch::nn::Linear seed{nullptr};
  torch::nn::ConvTranspose2d up1{nullptr}, up2{nullptr}, up3{nullptr},
      up4{nullptr}, head{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr}, bn3{nullptr},
      bn4{nullptr};
};
TORCH_MODULE(PoseGenerator);

// Conditional critic: v_B is projected to one 64x64 plane and channel-
// concatenated with the heatmap (19 input channels), then four stride-2
// convs (32/64/128/256, leaky ReLU, no batch norm) and a single-channel
// stride-4 conv produce one unbounded score per sample.
struct PoseCriticImpl : torch::nn::Module {
  PoseCriticImpl();
  torch::Tensor forward(torch::Tensor x, torch::Tensor v_b);

  torch::nn::Linear cond{nullptr};
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr}, conv3{nullptr},
      conv4{nullptr}, head{nullptr};
};
TORCH_MODULE(PoseCritic);

struct StageOneModel {
  ContextEncoder encoder;
  PoseGenerator generator;
  PoseCritic critic;

  StageOneModel();
  // N(0, 0.02) init from the run's "init" substream.
  void init_params(uint64_t seed);
  void train(bool on = true);
  void eval() { train(false); }
};

// v_B for a gaussian 64x64 context heatmap ([18,64,64] or [B,18,64,64]).
// Wrong channel count or resolution -> InvalidArgument.
torch::Tensor encode_context(StageOneModel& model, const torch::Tensor& h_multi);

// Raw tanh-range heatmap batch [B,18,64,64]. Map with (x+1)/2 before
// decoding or critic scoring.
torch::Tensor generate_pose(StageOneModel& model, const torch::Tensor& v_b,
                            const torch::Tensor& z);

// One finite score per sample, [B].
torch::Tensor critic_score(StageOneModel& model, const torch::Tensor& x,
                           const torch::Tensor& v_b);

// mean(fake) - mean(real). Empty batches -> InvalidArgument.
torch::Tensor critic_loss(const torch::Tensor& real_scores,
                          const torch::Tensor& fake_scores);

using CriticFn =
    std::function<torch::Tensor(const torch::Tensor&, const torch::Tensor&)>;

struct GradientPenaltyOptions {
  // Per-sample interpolation weights [B]; sampled from `generator`
  // when absent. Tests may pin alpha to remove sampling.
  std::optional<torch::Tensor> alpha;
  std::optional<at::Generator> generator;
};

// mean over the batch of (||grad_{x_tilde, v_B} critic(x_tilde, v_B)||_2 - 1)^2
// where x_tilde = alpha * x_fake + (1 - alpha) * x_real. The graph is kept
// differentiable so the penalty can train the critic.
torch::Tensor gradient_penalty(const CriticFn& critic,
                               const torch::Tensor& x_real,
                               const torch::Tensor& x_fake,
                               const torch::Tensor& v_b,
                               GradientPenaltyOptions opts = {});

struct SceneSample {
  std::vector<PoseSkeleton> context;
  PoseSkeleton target;
};

// Blob width for the sampler's heatmaps. Wider than the codec default on
// purpose: at sigma 1.5 a 64x64 target heatmap is ~99.5% zeros and short
// adversarial runs stall in the all-empty basin with per-channel peaks
// stuck below the 0.2 decode threshold; sigma 3 keeps neighbouring blobs'
// gradients overlapping so placement can move. Training and sampling must
// agree on this value.
inline constexpr double kSamplerSigma = 3.0;

struct Stage1Config {
  int steps = 2000;       // critic updates
  int batch = 16;
  double lr = 1e-4;       // Adam, beta1 = 0, beta2 = 0.9
  double beta1 = 0.0;
  double beta2 = 0.9;
  double lambda_gp = 10.0;
  int n_critic = 5;       // generator updates once per n_critic critic updates
  double sigma = kSamplerSigma;
  uint64_t seed = 0;
};

struct Stage1StepLog {
  int step = 0;                     // 1-based critic update index
  double critic_loss = 0.0;         // L_D + lambda * P_T
  double wasserstein = 0.0;         // mean(fake) - mean(real)
  double penalty = 0.0;
  std::optional<double> gen_loss;   // present on generator-update steps
};

struct Stage1TrainResult {
  std::vector<Stage1StepLog> log;
  int critic_updates = 0;
  int generator_updates = 0;
};

Stage1TrainResult train_stage1(StageOneModel& model,
                               const std::vector<SceneSample>& dataset,
                               const Stage1Config& config);

struct SampleTargetResult {
  PoseSkeleton skeleton;       // in the 64x64 context frame
  torch::Tensor heatmap01;     // [18,64,64] in [0,1]
  int visible_joints = 0;
  bool all_occluded = false;
};

// encode_scene_context -> encode_context -> generate_pose with fresh z
// -> rescale to [0,1] -> decode at the 0.2 threshold.
SampleTargetResult sample_target(StageOneModel& model,
                                 const std::vector<PoseSkeleton>& scene,
                                 uint64_t seed,
                                 double sigma = kSamplerSigma);

// Checkpoint entries g_t/*, d_t/* (+ optimizer/* when given).
void save_stage1(const std::filesystem::path& path, const StageOneModel& model,
                 int64_t step, const std::string& config_json,
                 const torch::optim::Adam* gen_opt = nullptr,
                 const torch::optim::Adam* critic_opt = nullptr);

struct Stage1Loaded {
  StageOneModel model;
  int64_t step = 0;
  std::string config_json;
};

Stage1Loaded load_stage1(const std::filesystem::path& path);

uint64_t stage1_arch_hash(const StageOneModel& model);

}  // namespace scenegen
