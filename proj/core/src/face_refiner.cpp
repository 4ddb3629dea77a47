#include "scenegen/face_refiner.hpp"

#include <algorithm>
#include <cmath>

#include "scenegen/archive.hpp"
#include "scenegen/errors.hpp"
#include "scenegen/nn_util.hpp"
#include "scenegen/rng.hpp"

namespace scenegen {

std::pair<FacialVector, NormContext> normalize_facial(
    const PoseSkeleton& skeleton) {
  const auto& nose = skeleton.at(Joint::kNose);
  if (!nose.visible)
    throw CannotNormalize("normalize_facial: nose is occluded");

  NormContext ctx;
  ctx.nose_x = nose.x;
  ctx.nose_y = nose.y;

  FacialVector out;
  std::array<double, kFacialDims> delta{};
  double radius = 0.0;
  for (int i = 0; i < 5; ++i) {
    const auto& kp = skeleton.at(kFacialJoints[i]);
    out.mask[i] = kp.visible;
    if (!kp.visible) continue;
    delta[2 * i] = kp.x - ctx.nose_x;
    delta[2 * i + 1] = kp.y - ctx.nose_y;
    radius = std::max({radius, std::abs(delta[2 * i]),
                       std::abs(delta[2 * i + 1])});
  }
  ctx.scale = radius > 0.0 ? radius : 1.0;
  for (int i = 0; i < 5; ++i) {
    if (!out.mask[i]) continue;
    out.v[2 * i] = delta[2 * i] / ctx.scale;
    out.v[2 * i + 1] = delta[2 * i + 1] / ctx.scale;
  }
  return {out, ctx};
}

std::array<Keypoint, 5> denormalize_facial(const FacialVector& v,
                                           const NormContext& ctx) {
  std::array<Keypoint, 5> out{};
  for (int i = 0; i < 5; ++i) {
    if (!v.mask[i]) continue;
    out[i] = {v.x(i) * ctx.scale + ctx.nose_x,
              v.y(i) * ctx.scale + ctx.nose_y, true};
  }
  return out;
}

FacialVector perturb(const FacialVector& v, double magnitude, uint64_t seed) {
  if (magnitude < 0.0)
    throw InvalidArgument("perturb: negative magnitude");
  FacialVector out = v;
  if (magnitude == 0.0) return out;
  auto gen = make_generator(seed);
  auto noise = torch::empty({kFacialDims}, torch::kFloat64);
  noise.uniform_(-magnitude, magnitude, gen);
  auto acc = noise.accessor<double, 1>();
  for (int i = 1; i < 5; ++i) {  // the nose stays pinned at the origin
    if (!out.mask[i]) continue;
    out.v[2 * i] = std::clamp(out.v[2 * i] + acc[2 * i], -1.0, 1.0);
    out.v[2 * i + 1] = std::clamp(out.v[2 * i + 1] + acc[2 * i + 1], -1.0, 1.0);
  }
  return out;
}

FaceRefinerImpl::FaceRefinerImpl() {
  fc1 = register_module("fc1", torch::nn::Linear(kFacialDims, 128));
  fc2 = register_module("fc2", torch::nn::Linear(128, 128));
  fc3 = register_module("fc3", torch::nn::Linear(128, 128));
  out = register_module("out", torch::nn::Linear(128, kFacialDims));
}

torch::Tensor FaceRefinerImpl::forward(torch::Tensor v) {
  auto h = torch::relu(fc1(v));
  h = torch::relu(fc2(h));
  h = torch::relu(fc3(h));
  return torch::tanh(out(h));
}

// The N(0, 0.02) convention is reserved for the adversarial nets; the
// regressor keeps the standard fan-in-scaled uniform init (seeded).
void init_stage2(FaceRefiner& net, uint64_t seed) {
  auto gen = make_generator(seed, "init");
  torch::NoGradGuard no_grad;
  for (auto& child : net->modules(/*include_self=*/false)) {
    if (auto* linear = child->as<torch::nn::Linear>()) {
      const double bound = 1.0 / std::sqrt(double(linear->weight.size(1)));
      linear->weight.uniform_(-bound, bound, gen);
      linear->bias.uniform_(-bound, bound, gen);
    }
  }
}

namespace {

torch::Tensor to_tensor(const FacialVector& v) {
  auto t = torch::zeros({1, kFacialDims});
  auto acc = t.accessor<float, 2>();
  for (int i = 0; i < 5; ++i) {
    if (!v.mask[i]) continue;
    acc[0][2 * i] = static_cast<float>(v.x(i));
    acc[0][2 * i + 1] = static_cast<float>(v.y(i));
  }
  return t;
}

}  // namespace

FacialVector refine(const FaceRefiner& net, const FacialVector& v) {
  torch::NoGradGuard no_grad;
  auto& module = const_cast<FaceRefinerImpl&>(*net);
  const bool was_training = module.is_training();
  module.eval();
  auto pred = module.forward(to_tensor(v));
  module.train(was_training);

  auto acc = pred.accessor<float, 2>();
  FacialVector out;
  out.mask = v.mask;
  for (int i = 1; i < 5; ++i) {
    if (!out.mask[i]) continue;
    out.v[2 * i] = acc[0][2 * i];
    out.v[2 * i + 1] = acc[0][2 * i + 1];
  }
  // nose stays exactly at the origin of the normalized frame
  return out;
}

PoseSkeleton refine_skeleton(const FaceRefiner& net,
                             const PoseSkeleton& skeleton) {
  auto [v, ctx] = normalize_facial(skeleton);
  auto refined = denormalize_facial(refine(net, v), ctx);
  PoseSkeleton out = skeleton;
  for (int i = 0; i < 5; ++i) {
    if (refined[i].visible) out.at(kFacialJoints[i]) = refined[i];
  }
  return out;
}

torch::Tensor masked_mse(const torch::Tensor& pred,
                         const torch::Tensor& target,
                         const torch::Tensor& mask) {
  if (pred.sizes() != target.sizes() || pred.sizes() != mask.sizes())
    throw InvalidArgument("masked_mse: shape mismatch");
  auto count = mask.sum().clamp_min(1.0);
  return ((pred - target).pow(2) * mask).sum() / count;
}

torch::Tensor loss_mask(const std::vector<FacialVector>& batch) {
  auto m = torch::zeros({int64_t(batch.size()), kFacialDims});
  auto acc = m.accessor<float, 2>();
  for (size_t b = 0; b < batch.size(); ++b) {
    for (int i = 1; i < 5; ++i) {
      if (!batch[b].mask[i]) continue;
      acc[b][2 * i] = 1.0f;
      acc[b][2 * i + 1] = 1.0f;
    }
  }
  return m;
}

Stage2TrainResult train_stage2(FaceRefiner& net,
                               const std::vector<FacialVector>& dataset,
                               const Stage2Config& config) {
  if (dataset.empty()) throw InvalidArgument("train_stage2: empty dataset");
  if (config.steps < 0 || config.batch <= 0)
    throw InvalidArgument("train_stage2: bad steps/batch");

  const int64_t n = static_cast<int64_t>(dataset.size());
  auto clean = torch::zeros({n, kFacialDims});
  auto masks = torch::zeros({n, kFacialDims});
  {
    auto cacc = clean.accessor<float, 2>();
    auto macc = masks.accessor<float, 2>();
    for (int64_t s = 0; s < n; ++s) {
      for (int i = 0; i < 5; ++i) {
        if (!dataset[s].mask[i]) continue;
        cacc[s][2 * i] = static_cast<float>(dataset[s].x(i));
        cacc[s][2 * i + 1] = static_cast<float>(dataset[s].y(i));
        if (i > 0) {  // nose coordinates carry no loss
          macc[s][2 * i] = 1.0f;
          macc[s][2 * i + 1] = 1.0f;
        }
      }
    }
  }

  auto data_gen = make_generator(config.seed, "data");
  auto noise_gen = make_generator(config.seed, "noise");
  torch::optim::SGD opt(net->parameters(), torch::optim::SGDOptions(config.lr));

  net->train();
  Stage2TrainResult result;
  result.loss.reserve(config.steps);
  for (int step = 0; step < config.steps; ++step) {
    auto idx = torch::randint(0, n, {config.batch}, data_gen,
                              torch::TensorOptions().dtype(torch::kInt64));
    auto target = clean.index_select(0, idx);
    auto mask = masks.index_select(0, idx);
    auto noise = torch::empty_like(target);
    noise.uniform_(-config.noise, config.noise, noise_gen);
    auto input = (target + noise * mask).clamp(-1.0, 1.0);

    auto loss = masked_mse(net->forward(input), target, mask);
    opt.zero_grad();
    loss.backward();
    opt.step();
    result.loss.push_back(loss.item<double>());
  }
  return result;
}

uint64_t stage2_arch_hash(const FaceRefiner& net) {
  return architecture_hash("stage2", named_model_tensors(*net, "refine/"));
}

void save_stage2(const std::filesystem::path& path, const FaceRefiner& net,
                 int64_t step, const std::string& config_json) {
  ArchiveMetadata meta{"stage2", stage2_arch_hash(net), step, config_json};
  save_archive(path, meta, named_model_tensors(*net, "refine/"));
}

Stage2Loaded load_stage2(const std::filesystem::path& path) {
  auto archive = load_archive(path);
  if (archive.meta.kind != "stage2")
    throw IncompatibleCheckpoint("checkpoint kind '" + archive.meta.kind +
                                 "' is not a stage-2 archive");
  Stage2Loaded loaded;
  if (archive.meta.arch_hash != stage2_arch_hash(loaded.net))
    throw IncompatibleCheckpoint("stage-2 architecture hash mismatch");
  load_model_tensors(*loaded.net, "refine/", archive.tensors);
  loaded.step = archive.meta.step;
  loaded.config_json = archive.meta.config_json;
  return loaded;
}

}  // namespace scenegen
