#pragma once

#include <torch/torch.h>

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "scenegen/pose.hpp"

namespace scenegen {

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Mean local SSIM over Gaussian-weighted windows of the ITU-R 601 luminance
// of two same-shape RGB tensors in [-1, 1].
double ssim(const torch::Tensor& a, const torch::Tensor& b,
            const SsimOptions& opts = {});

struct PckhOptions {
  double alpha = 0.5;
  // Reference head size override. When absent it is derived from the truth
  // skeleton as 2 * ||nose - neck||, which must then both be visible.
  std::optional<double> head_size;
};

// Fraction of truth-visible keypoints predicted within alpha * head_size.
// Truth-occluded joints are excluded from the denominator; a joint the
// prediction marks occluded counts as a miss.
double pckh(const PoseSkeleton& pred, const PoseSkeleton& truth,
            const PckhOptions& opts = {});

// Backbone-dependent scores (IS, DS, LPIPS) plug in through this seam; no
// weights ship with the library.
class ScoreBackbone {
 public:
  virtual ~ScoreBackbone() = default;
  virtual std::string name() const = 0;
  // Both lists hold [-1,1] RGB tensors, pairwise aligned.
  virtual double score(const std::vector<torch::Tensor>& generated,
                       const std::vector<torch::Tensor>& reference) const = 0;
};

struct BackboneSet {
  std::shared_ptr<const ScoreBackbone> inception;  // IS
  std::shared_ptr<const ScoreBackbone> detection;  // DS
  std::shared_ptr<const ScoreBackbone> lpips;
};

struct BackboneScore {
  double value = 0.0;
  std::string backbone;
};

struct MetricReport {
  double ssim = 0.0;
  double pckh = 0.0;
  std::optional<BackboneScore> is_score;
  std::optional<BackboneScore> ds_score;
  std::optional<BackboneScore> lpips_score;
  int sample_count = 0;
};

struct ImagePair {
  torch::Tensor generated;
  torch::Tensor reference;
};

struct SkeletonPair {
  PoseSkeleton pred;
  PoseSkeleton truth;
};

// Per-sample ssim/pckh averaged over the (equal-length, nonempty) lists;
// registered backbones contribute their optional scores.
MetricReport batch_evaluate(const std::vector<ImagePair>& image_pairs,
                            const std::vector<SkeletonPair>& keypoint_pairs,
                            const BackboneSet& backbones = {},
                            const SsimOptions& ssim_opts = {},
                            const PckhOptions& pckh_opts = {});

std::string metric_report_to_json(const MetricReport& report);

}  // namespace scenegen
