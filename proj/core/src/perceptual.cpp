#include "scenegen/perceptual.hpp"

#include <algorithm>
#include <cmath>

#include "scenegen/archive.hpp"
#include "scenegen/errors.hpp"
#include "scenegen/nn_util.hpp"
#include "scenegen/rng.hpp"

namespace scenegen {

namespace {

// VGG-19 conv trunk layout: channel width per conv, pool after convs
// 2, 4, 8 and 12 (the trailing pool adds nothing for feature taps).
constexpr int kConvChannels[] = {64,  64,  128, 128, 256, 256, 256, 256,
                                 512, 512, 512, 512, 512, 512, 512, 512};
constexpr int kNumConvs = 16;
constexpr bool kPoolAfter[] = {false, true, false, true, false, false,
                               false, true, false, false, false, true,
                               false, false, false, false};

constexpr char kArchiveKind[] = "vgg";

struct TrunkImpl : torch::nn::Module {
  std::vector<torch::nn::Conv2d> convs;

  TrunkImpl() {
    int in_ch = 3;
    for (int i = 0; i < kNumConvs; ++i) {
      auto conv = torch::nn::Conv2d(
          torch::nn::Conv2dOptions(in_ch, kConvChannels[i], 3).padding(1));
      convs.push_back(register_module("conv" + std::to_string(i + 1), conv));
      in_ch = kConvChannels[i];
    }
  }
};

}  // namespace

struct VggFeatures::Impl {
  std::shared_ptr<TrunkImpl> trunk = std::make_shared<TrunkImpl>();

  void freeze() {
    for (auto& p : trunk->parameters()) p.set_requires_grad(false);
    trunk->eval();
  }
};

VggFeatures::VggFeatures() : impl_(std::make_shared<Impl>()) {}

std::shared_ptr<VggFeatures> VggFeatures::seeded(uint64_t seed) {
  auto self = std::shared_ptr<VggFeatures>(new VggFeatures());
  auto gen = make_generator(seed, "init");
  torch::NoGradGuard no_grad;
  // Fan-in-scaled init keeps activation magnitudes stable through all 16
  // layers, so random features still separate inputs instead of collapsing.
  for (auto& conv : self->impl_->trunk->convs) {
    const auto& w = conv->weight;
    const double fan_in =
        static_cast<double>(w.size(1) * w.size(2) * w.size(3));
    w.normal_(0.0, std::sqrt(2.0 / fan_in), gen);
    conv->bias.zero_();
  }
  self->impl_->freeze();
  return self;
}

std::shared_ptr<VggFeatures> VggFeatures::from_file(
    const std::filesystem::path& path) {
  auto self = std::shared_ptr<VggFeatures>(new VggFeatures());
  auto loaded = load_archive(path);
  if (loaded.meta.kind != kArchiveKind) {
    throw IncompatibleCheckpoint("feature archive has kind '" +
                                 loaded.meta.kind + "', expected '" +
                                 kArchiveKind + "'");
  }
  load_model_tensors(*self->impl_->trunk, "vgg/", loaded.tensors);
  self->impl_->freeze();
  return self;
}

void VggFeatures::save(const std::filesystem::path& path) const {
  auto tensors = named_model_tensors(*impl_->trunk, "vgg/");
  ArchiveMetadata meta;
  meta.kind = kArchiveKind;
  meta.arch_hash = architecture_hash(kArchiveKind, tensors);
  save_archive(path, meta, tensors);
}

int VggFeatures::depth() const { return kNumConvs; }

std::vector<torch::Tensor> VggFeatures::weights() const {
  std::vector<torch::Tensor> out;
  for (const auto& p : impl_->trunk->parameters()) {
    out.push_back(p.detach().clone());
  }
  return out;
}

std::vector<torch::Tensor> VggFeatures::features(
    const torch::Tensor& input, const std::vector<int>& layers) const {
  if (!input.defined() ||
      (input.dim() != 3 && input.dim() != 4) ||
      input.size(input.dim() - 3) != 3) {
    throw InvalidArgument("features: expected [3,H,W] or [B,3,H,W] input");
  }
  if (layers.empty()) return {};
  int deepest = 0;
  for (int l : layers) {
    if (l < 1 || l > kNumConvs) {
      throw InvalidArgument("features: layer index " + std::to_string(l) +
                            " outside 1.." + std::to_string(kNumConvs));
    }
    deepest = std::max(deepest, l);
  }

  const bool batched = input.dim() == 4;
  auto x = batched ? input : input.unsqueeze(0);
  // [-1,1] -> [0,1], then the usual channel standardization so pretrained
  // weights see the statistics they were trained on.
  x = (x + 1.0) / 2.0;
  auto mean = torch::tensor({0.485f, 0.456f, 0.406f}).view({1, 3, 1, 1});
  auto std = torch::tensor({0.229f, 0.224f, 0.225f}).view({1, 3, 1, 1});
  x = (x - mean) / std;

  std::vector<torch::Tensor> taps(layers.size());
  for (int i = 0; i < deepest; ++i) {
    x = torch::relu(impl_->trunk->convs[i]->forward(x));
    for (size_t k = 0; k < layers.size(); ++k) {
      if (layers[k] == i + 1) taps[k] = batched ? x : x.squeeze(0);
    }
    if (kPoolAfter[i] && i + 1 < deepest) {
      x = torch::max_pool2d(x, 2);
    }
  }
  return taps;
}

}  // namespace scenegen
