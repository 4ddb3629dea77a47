#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <memory>
#include <vector>

namespace scenegen {

// Per-layer feature maps of a deep conv stack. Layer indices count
// convolution layers from 1; features are taken after the ReLU that
// follows the indexed convolution.
class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual int depth() const = 0;  // number of conv layers
  // input: [-1,1] RGB, [3,H,W] or [B,3,H,W]. Returns the requested layers'
  // post-ReLU features in the given order. Gradients flow to the input;
  // the weights themselves stay frozen.
  virtual std::vector<torch::Tensor> features(
      const torch::Tensor& input, const std::vector<int>& layers) const = 0;
};

// 16-conv VGG-19 trunk (64,64 | 128,128 | 256x4 | 512x4 | 512x4 with 2x2
// max-pool between groups). Weights come from a tensor archive when one is
// supplied, or from a fixed seed for fully offline runs; either way they
// are frozen after construction.
class VggFeatures : public FeatureExtractor {
 public:
  static std::shared_ptr<VggFeatures> seeded(uint64_t seed);
  static std::shared_ptr<VggFeatures> from_file(
      const std::filesystem::path& path);

  int depth() const override;
  std::vector<torch::Tensor> features(
      const torch::Tensor& input,
      const std::vector<int>& layers) const override;

  // Frozen-weight snapshot, for freeze-invariance checks and export.
  std::vector<torch::Tensor> weights() const;
  void save(const std::filesystem::path& path) const;

 private:
  VggFeatures();
  struct Impl;
  std::shared_ptr<Impl> impl_;
};

}  // namespace scenegen
