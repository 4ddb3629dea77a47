#include "scenegen/pose_transfer.hpp"

#include <cmath>

#include "json.hpp"
#include "scenegen/archive.hpp"
#include "scenegen/errors.hpp"
#include "scenegen/nn_util.hpp"
#include "scenegen/rng.hpp"

namespace scenegen {

namespace {

constexpr double kBceEps = 1e-7;

torch::nn::Conv2d conv3x3(int in, int out) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1));
}

torch::nn::Conv2d conv4x4(int in, int out, int stride) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, 4).stride(stride).padding(1));
}

}  // namespace

ResBlockImpl::ResBlockImpl(int channels) {
  conv1 = register_module("conv1", conv3x3(channels, channels));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(channels));
  conv2 = register_module("conv2", conv3x3(channels, channels));
  bn2 = register_module("bn2", torch::nn::BatchNorm2d(channels));
}

torch::Tensor ResBlockImpl::forward(torch::Tensor x) {
  auto y = torch::relu(bn1->forward(conv1->forward(x)));
  y = bn2->forward(conv2->forward(y));
  return torch::relu(y + x);
}

EncoderBranchImpl::EncoderBranchImpl(int in_channels, int levels) {
  stem = register_module("stem", conv3x3(in_channels, 64));
  for (int l = 1; l <= levels; ++l) {
    const int in = 64 << (l - 1);
    const int out = 64 << l;
    downs.push_back(
        register_module("down" + std::to_string(l), conv4x4(in, out, 2)));
    bns.push_back(register_module("bn" + std::to_string(l),
                                  torch::nn::BatchNorm2d(out)));
    blocks.push_back(
        register_module("res" + std::to_string(l), ResBlock(out)));
  }
}

std::vector<torch::Tensor> EncoderBranchImpl::forward(torch::Tensor x) {
  x = torch::relu(stem->forward(x));
  std::vector<torch::Tensor> levels;
  levels.reserve(downs.size());
  for (size_t i = 0; i < downs.size(); ++i) {
    x = torch::relu(bns[i]->forward(downs[i]->forward(x)));
    x = blocks[i]->forward(x);
    levels.push_back(x);
  }
  return levels;
}

RenderGeneratorImpl::RenderGeneratorImpl(RenderArch a) : arch(a) {
  if (arch.levels < 1 || arch.res < (1 << arch.levels)) {
    throw InvalidArgument("RenderGenerator: unusable depth/resolution");
  }
  image_branch =
      register_module("image_branch", EncoderBranch(3, arch.levels));
  pose_branch = register_module(
      "pose_branch", EncoderBranch(kPosePairChannels, arch.levels));
  for (int l = arch.levels; l >= 1; --l) {
    const int in = arch.channels_at(l);
    const int out = arch.channels_at(l - 1);
    auto up = torch::nn::ConvTranspose2d(
        torch::nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1));
    ups.push_back(register_module("up" + std::to_string(l), up));
    up_bns.push_back(register_module("up_bn" + std::to_string(l),
                                     torch::nn::BatchNorm2d(out)));
    up_blocks.push_back(
        register_module("up_res" + std::to_string(l), ResBlock(out)));
  }
  for (int i = 0; i < 4; ++i) {
    tail.push_back(
        register_module("tail" + std::to_string(i + 1), ResBlock(64)));
  }
  head = register_module(
      "head", torch::nn::Conv2d(torch::nn::Conv2dOptions(64, 3, 1)));
}

RenderGeneratorImpl::Trace RenderGeneratorImpl::forward_traced(
    const torch::Tensor& image, const torch::Tensor& poses) {
  Trace trace;
  trace.image_levels = image_branch->forward(image);
  trace.pose_levels = pose_branch->forward(poses);

  // Feature-ladder invariant: level l is [64*2^l, res/2^l, res/2^l].
  for (int l = 1; l <= arch.levels; ++l) {
    const auto& t = trace.image_levels[l - 1];
    const int64_t side = arch.res >> l;
    if (t.size(-3) != arch.channels_at(l) || t.size(-2) != side ||
        t.size(-1) != side) {
      throw Error("encoder level " + std::to_string(l) +
                  " produced an off-ladder feature shape");
    }
  }

  trace.gated.reserve(arch.levels);
  for (int l = 1; l <= arch.levels; ++l) {
    trace.gated.push_back(trace.image_levels[l - 1] *
                          torch::sigmoid(trace.pose_levels[l - 1]));
  }

  // Deepest gated features seed the decoder; every shallower level joins
  // as an additive gated skip.
  auto x = trace.gated[arch.levels - 1];
  for (int i = 0; i < arch.levels; ++i) {
    x = torch::relu(up_bns[i]->forward(ups[i]->forward(x)));
    x = up_blocks[i]->forward(x);
    const int skip_level = arch.levels - 1 - i;
    if (skip_level >= 1) x = x + trace.gated[skip_level - 1];
  }
  for (auto& block : tail) x = block->forward(x);
  trace.output = torch::tanh(head->forward(x));
  return trace;
}

torch::Tensor RenderGeneratorImpl::forward(const torch::Tensor& image,
                                           const torch::Tensor& poses) {
  return forward_traced(image, poses).output;
}

PatchDiscriminatorImpl::PatchDiscriminatorImpl() {
  conv1 = register_module("conv1", conv4x4(6, 64, 2));
  conv2 = register_module("conv2", conv4x4(64, 128, 2));
  bn2 = register_module("bn2", torch::nn::BatchNorm2d(128));
  conv3 = register_module("conv3", conv4x4(128, 256, 2));
  bn3 = register_module("bn3", torch::nn::BatchNorm2d(256));
  conv4 = register_module("conv4", conv4x4(256, 512, 1));
  bn4 = register_module("bn4", torch::nn::BatchNorm2d(512));
  head = register_module("head", conv4x4(512, 1, 1));
}

torch::Tensor PatchDiscriminatorImpl::forward(const torch::Tensor& a,
                                              const torch::Tensor& b) {
  auto x = torch::cat({a, b}, /*dim=*/-3);
  x = torch::leaky_relu(conv1->forward(x), 0.2);
  x = torch::leaky_relu(bn2->forward(conv2->forward(x)), 0.2);
  x = torch::leaky_relu(bn3->forward(conv3->forward(x)), 0.2);
  x = torch::leaky_relu(bn4->forward(conv4->forward(x)), 0.2);
  return torch::sigmoid(head->forward(x));
}

StageThreeModel::StageThreeModel(RenderArch arch)
    : generator(arch), discriminator() {}

void StageThreeModel::init_params(uint64_t seed) {
  auto gen = make_generator(seed, "init");
  init_weights(*generator, gen);
  init_weights(*discriminator, gen);
}

void StageThreeModel::train(bool on) {
  generator->train(on);
  discriminator->train(on);
}

torch::Tensor make_pose_pair(const PoseSkeleton& source,
                             const PoseSkeleton& target, int res,
                             double sigma) {
  auto h_a = encode_skeleton(source, res, res, HeatmapMode::kGaussian, sigma);
  auto h_b = encode_skeleton(target, res, res, HeatmapMode::kGaussian, sigma);
  return torch::cat({h_a.tensor, h_b.tensor}, 0);
}

namespace {

// Promotes [C,H,W] to [1,C,H,W]; remembers whether to squeeze the result.
torch::Tensor as_batch(const torch::Tensor& t, int channels, int res,
                       const char* what, bool& was_unbatched) {
  if (!t.defined()) throw InvalidArgument(std::string(what) + ": undefined");
  auto x = t;
  was_unbatched = x.dim() == 3;
  if (was_unbatched) x = x.unsqueeze(0);
  if (x.dim() != 4 || x.size(1) != channels ||
      (res > 0 && (x.size(2) != res || x.size(3) != res))) {
    throw InvalidArgument(std::string(what) + ": expected [" +
                          std::to_string(channels) + "," +
                          std::to_string(res) + "," + std::to_string(res) +
                          "] (optionally batched)");
  }
  return x;
}

}  // namespace

torch::Tensor gr_forward(StageThreeModel& model, const torch::Tensor& image,
                         const torch::Tensor& poses) {
  const int res = model.generator->arch.res;
  bool img_unbatched = false, pose_unbatched = false;
  auto i = as_batch(image, 3, res, "gr_forward image", img_unbatched);
  auto p = as_batch(poses, kPosePairChannels, res, "gr_forward poses",
                    pose_unbatched);
  if (i.size(0) != p.size(0)) {
    throw InvalidArgument("gr_forward: batch size mismatch");
  }
  auto out = model.generator->forward(i, p);
  return img_unbatched && pose_unbatched ? out.squeeze(0) : out;
}

torch::Tensor dr_forward(StageThreeModel& model, const torch::Tensor& a,
                         const torch::Tensor& b) {
  bool a_unbatched = false, b_unbatched = false;
  auto xa = as_batch(a, 3, 0, "dr_forward", a_unbatched);
  auto xb = as_batch(b, 3, 0, "dr_forward", b_unbatched);
  if (xa.sizes() != xb.sizes()) {
    throw InvalidArgument("dr_forward: shape mismatch");
  }
  if (xa.size(2) < 16 || xa.size(3) < 16) {
    throw InvalidArgument("dr_forward: input too small for the patch stack");
  }
  auto out = model.discriminator->forward(xa, xb).squeeze(1);
  return a_unbatched && b_unbatched ? out.squeeze(0) : out;
}

torch::Tensor bce_against(const torch::Tensor& probs, double target) {
  if (!probs.defined() || probs.numel() == 0) {
    throw InvalidArgument("bce_against: empty input");
  }
  if (target != 0.0 && target != 1.0) {
    throw InvalidArgument("bce_against: target must be 0 or 1");
  }
  auto p = probs.clamp(kBceEps, 1.0 - kBceEps);
  return target == 1.0 ? -torch::log(p).mean()
                       : -torch::log1p(-p).mean();
}

torch::Tensor perceptual_loss(const FeatureExtractor& extractor,
                              const torch::Tensor& gen,
                              const torch::Tensor& real,
                              const std::vector<int>& layers) {
  if (!gen.defined() || !real.defined() || gen.sizes() != real.sizes()) {
    throw InvalidArgument("perceptual_loss: shape mismatch");
  }
  auto f_gen = extractor.features(gen, layers);
  auto f_real = extractor.features(real, layers);
  auto total = torch::zeros({}, torch::kFloat32);
  for (size_t i = 0; i < layers.size(); ++i) {
    total = total + (f_gen[i] - f_real[i]).abs().mean();
  }
  return total;
}

torch::Tensor generator_objective(const torch::Tensor& l1,
                                  const torch::Tensor& gan,
                                  const torch::Tensor& perceptual,
                                  const LossWeights& weights) {
  return weights.lambda_l1 * l1 + weights.lambda_gan * gan +
         weights.lambda_perc * perceptual;
}

torch::Tensor discriminator_objective(const torch::Tensor& d_real,
                                      const torch::Tensor& d_fake) {
  return (bce_against(d_real, 1.0) + bce_against(d_fake, 0.0)) / 2.0;
}

Stage3TrainResult train_stage3(StageThreeModel& model,
                               const std::vector<TransferSample>& dataset,
                               const Stage3Config& config) {
  if (dataset.empty()) throw InvalidArgument("train_stage3: empty dataset");
  if (config.steps < 0 || config.batch < 1) {
    throw InvalidArgument("train_stage3: bad steps/batch");
  }
  const int res = config.arch.res;
  if (model.generator->arch != config.arch) {
    throw InvalidArgument("train_stage3: model/config architecture mismatch");
  }
  for (const auto& s : dataset) {
    if (!s.image_a.defined() || !s.image_b.defined() ||
        s.image_a.sizes() != torch::IntArrayRef({3, res, res}) ||
        s.image_b.sizes() != torch::IntArrayRef({3, res, res})) {
      throw InvalidArgument("train_stage3: sample images must be [3," +
                            std::to_string(res) + "," + std::to_string(res) +
                            "]");
    }
  }

  auto extractor = config.extractor
                       ? config.extractor
                       : std::static_pointer_cast<FeatureExtractor>(
                             VggFeatures::seeded(config.seed));

  model.train();
  auto g_opts = torch::optim::AdamOptions(config.lr).eps(1e-8).weight_decay(0);
  g_opts.betas({config.beta1, config.beta2});
  auto d_opts = g_opts;
  torch::optim::Adam g_opt(model.generator->parameters(), g_opts);
  torch::optim::Adam d_opt(model.discriminator->parameters(), d_opts);

  auto data_gen = make_generator(config.seed, "data");
  const int64_t n = static_cast<int64_t>(dataset.size());

  Stage3TrainResult result;
  result.log.reserve(config.steps);
  for (int step = 1; step <= config.steps; ++step) {
    auto idx = torch::randint(0, n, {config.batch}, data_gen,
                              torch::TensorOptions().dtype(torch::kInt64));
    std::vector<torch::Tensor> ia, ib, pp;
    ia.reserve(config.batch);
    ib.reserve(config.batch);
    pp.reserve(config.batch);
    for (int k = 0; k < config.batch; ++k) {
      const auto& s = dataset[idx[k].item<int64_t>()];
      ia.push_back(s.image_a);
      ib.push_back(s.image_b);
      pp.push_back(make_pose_pair(s.pose_a, s.pose_b, res, config.sigma));
    }
    auto i_a = torch::stack(ia);
    auto i_b = torch::stack(ib);
    auto poses = torch::stack(pp);

    auto fake = model.generator->forward(i_a, poses);

    auto d_real = model.discriminator->forward(i_a, i_b);
    auto d_fake = model.discriminator->forward(i_a, fake.detach());
    auto loss_d = discriminator_objective(d_real, d_fake);
    d_opt.zero_grad();
    loss_d.backward();
    d_opt.step();

    auto l1 = (fake - i_b).abs().mean();
    auto gan = bce_against(model.discriminator->forward(i_a, fake), 1.0);
    auto perc = perceptual_loss(*extractor, fake, i_b);
    auto loss_g = generator_objective(l1, gan, perc, config.weights);
    g_opt.zero_grad();
    loss_g.backward();
    g_opt.step();

    result.log.push_back({step, loss_d.item<double>(), loss_g.item<double>(),
                          l1.item<double>()});
  }
  return result;
}

namespace {

NamedTensors stage3_model_tensors(const StageThreeModel& model) {
  NamedTensors out = named_model_tensors(*model.generator, "g_r/");
  auto d = named_model_tensors(*model.discriminator, "d_r/");
  out.insert(out.end(), d.begin(), d.end());
  return out;
}

}  // namespace

uint64_t stage3_arch_hash(const StageThreeModel& model) {
  return architecture_hash("stage3", stage3_model_tensors(model));
}

void save_stage3(const std::filesystem::path& path,
                 const StageThreeModel& model, int64_t step,
                 const std::string& config_json,
                 const torch::optim::Adam* gen_opt,
                 const torch::optim::Adam* disc_opt) {
  NamedTensors tensors = stage3_model_tensors(model);
  if (gen_opt) {
    auto g = adam_state_tensors(*gen_opt, *model.generator, "optimizer/g_r/");
    tensors.insert(tensors.end(), g.begin(), g.end());
  }
  if (disc_opt) {
    auto d = adam_state_tensors(*disc_opt, *model.discriminator,
                                "optimizer/d_r/");
    tensors.insert(tensors.end(), d.begin(), d.end());
  }
  // The archive must carry enough to rebuild the module before loading
  // weights, so the architecture rides along with the caller's config.
  nlohmann::json wrapper;
  wrapper["levels"] = model.generator->arch.levels;
  wrapper["res"] = model.generator->arch.res;
  wrapper["config"] = config_json;
  ArchiveMetadata meta{"stage3", stage3_arch_hash(model), step,
                       wrapper.dump()};
  save_archive(path, meta, tensors);
}

Stage3Loaded load_stage3(const std::filesystem::path& path) {
  auto archive = load_archive(path);
  if (archive.meta.kind != "stage3") {
    throw IncompatibleCheckpoint("checkpoint kind '" + archive.meta.kind +
                                 "' is not a stage-3 archive");
  }
  RenderArch arch;
  std::string config;
  try {
    auto wrapper = nlohmann::json::parse(archive.meta.config_json);
    arch.levels = wrapper.at("levels").get<int>();
    arch.res = wrapper.at("res").get<int>();
    config = wrapper.value("config", "");
  } catch (const nlohmann::json::exception&) {
    throw CorruptArchive("stage-3 archive header lacks architecture fields");
  }
  Stage3Loaded loaded{StageThreeModel(arch), 0, config};
  if (archive.meta.arch_hash != stage3_arch_hash(loaded.model)) {
    throw IncompatibleCheckpoint("stage-3 architecture hash mismatch");
  }
  load_model_tensors(*loaded.model.generator, "g_r/", archive.tensors);
  load_model_tensors(*loaded.model.discriminator, "d_r/", archive.tensors);
  loaded.step = archive.meta.step;
  return loaded;
}

}  // namespace scenegen
