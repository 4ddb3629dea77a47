#include "scenegen/pose_wgan.hpp"

#include "scenegen/archive.hpp"
#include "scenegen/errors.hpp"
#include "scenegen/nn_util.hpp"
#include "scenegen/rng.hpp"

namespace scenegen {

namespace {

constexpr double kLeakySlope = 0.2;

torch::nn::Conv2d down(int in, int out) {
  return torch::nn::Conv2d(
      torch::nn::Conv2dOptions(in, out, 4).stride(2).padding(1));
}

torch::Tensor lrelu(torch::Tensor x) {
  return torch::leaky_relu(x, kLeakySlope);
}

// Accepts [C,H,W] or [B,C,H,W]; returns a batched view.
torch::Tensor ensure_batched(const torch::Tensor& x, const char* what) {
  if (x.dim() == 3) return x.unsqueeze(0);
  if (x.dim() == 4) return x;
  throw InvalidArgument(std::string(what) + ": expected 3- or 4-d tensor");
}

void check_heatmap_shape(const torch::Tensor& x, const char* what) {
  if (x.size(1) != kNumJoints)
    throw InvalidArgument(std::string(what) + ": expected 18 channels, got " +
                          std::to_string(x.size(1)));
  if (x.size(2) != kContextRes || x.size(3) != kContextRes)
    throw InvalidArgument(std::string(what) + ": expected 64x64 input");
}

}  // namespace

ContextEncoderImpl::ContextEncoderImpl() {
  conv1 = register_module("conv1", down(kNumJoints, 32));
  conv2 = register_module("conv2", down(32, 64));
  conv3 = register_module("conv3", down(64, 128));
  conv4 = register_module("conv4", down(128, 256));
  fc = register_module("fc", torch::nn::Linear(256 * 4 * 4, kEmbedDim));
}

torch::Tensor ContextEncoderImpl::forward(torch::Tensor h_multi) {
  auto x = lrelu(conv1(h_multi));
  x = lrelu(conv2(x));
  x = lrelu(conv3(x));
  x = lrelu(conv4(x));
  return fc(x.flatten(1));
}

PoseGeneratorImpl::PoseGeneratorImpl() {
  seed = register_module(
      "seed", torch::nn::Linear(kEmbedDim + kNoiseDim, 512 * 2 * 2));
  auto up = [](int in, int out) {
    return torch::nn::ConvTranspose2d(
        torch::nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1));
  };
  up1 = register_module("up1", up(512, 256));
  up2 = register_module("up2", up(256, 128));
  up3 = register_module("up3", up(128, 64));
  up4 = register_module("up4", up(64, 32));
  head = register_module("head", up(32, kNumJoints));
  bn1 = register_module("bn1", torch::nn::BatchNorm2d(256));
  bn2 = register_module("bn2", torch::nn::BatchNorm2d(128));
  bn3 = register_module("bn3", torch::nn::BatchNorm2d(64));
  bn4 = register_module("bn4", torch::nn::BatchNorm2d(32));
}

torch::Tensor PoseGeneratorImpl::forward(torch::Tensor v_b, torch::Tensor z) {
  if (v_b.dim() != 2 || v_b.size(1) != kEmbedDim)
    throw InvalidArgument("generate_pose: v_B must be [B,512]");
  if (z.dim() != 2 || z.size(1) != kNoiseDim)
    throw InvalidArgument("generate_pose: z must be [B,512]");
  if (v_b.size(0) != z.size(0))
    throw InvalidArgument("generate_pose: batch mismatch between v_B and z");

  auto x = seed(torch::cat({v_b, z}, 1)).view({-1, 512, 2, 2});
  x = torch::relu(bn1(up1(x)));
  x = torch::relu(bn2(up2(x)));
  x = torch::relu(bn3(up3(x)));
  x = torch::relu(bn4(up4(x)));
  return torch::tanh(head(x));
}

PoseCriticImpl::PoseCriticImpl() {
  cond = register_module(
      "cond", torch::nn::Linear(kEmbedDim, kContextRes * kContextRes));
  conv1 = register_module("conv1", down(kNumJoints + 1, 32));
  conv2 = register_module("conv2", down(32, 64));
  conv3 = register_module("conv3", down(64, 128));
  conv4 = register_module("conv4", down(128, 256));
  head = register_module(
      "head", torch::nn::Conv2d(torch::nn::Conv2dOptions(256, 1, 4).stride(4)));
}

torch::Tensor PoseCriticImpl::forward(torch::Tensor x, torch::Tensor v_b) {
  auto plane = cond(v_b).view({-1, 1, kContextRes, kContextRes});
  auto h = torch::cat({x, plane}, 1);
  h = lrelu(conv1(h));
  h = lrelu(conv2(h));
  h = lrelu(conv3(h));
  h = lrelu(conv4(h));
  return head(h).flatten(1).squeeze(1);
}

StageOneModel::StageOneModel()
    : encoder(ContextEncoder()), generator(PoseGenerator()),
      critic(PoseCritic()) {}

void StageOneModel::init_params(uint64_t seed) {
  auto gen = make_generator(seed, "init");
  init_weights(*encoder, gen);
  init_weights(*generator, gen);
  init_weights(*critic, gen);
}

void StageOneModel::train(bool on) {
  encoder->train(on);
  generator->train(on);
  critic->train(on);
}

torch::Tensor encode_context(StageOneModel& model,
                             const torch::Tensor& h_multi) {
  auto x = ensure_batched(h_multi, "encode_context");
  check_heatmap_shape(x, "encode_context");
  return model.encoder(x);
}

torch::Tensor generate_pose(StageOneModel& model, const torch::Tensor& v_b,
                            const torch::Tensor& z) {
  return model.generator(v_b, z);
}

torch::Tensor critic_score(StageOneModel& model, const torch::Tensor& x,
                           const torch::Tensor& v_b) {
  auto xb = ensure_batched(x, "critic_score");
  check_heatmap_shape(xb, "critic_score");
  auto vb = v_b.dim() == 1 ? v_b.unsqueeze(0) : v_b;
  if (vb.dim() != 2 || vb.size(1) != kEmbedDim)
    throw InvalidArgument("critic_score: v_B must be [B,512]");
  if (vb.size(0) != xb.size(0))
    throw InvalidArgument("critic_score: batch mismatch");
  return model.critic(xb, vb);
}

torch::Tensor critic_loss(const torch::Tensor& real_scores,
                          const torch::Tensor& fake_scores) {
  if (real_scores.numel() == 0 || fake_scores.numel() == 0)
    throw InvalidArgument("critic_loss: empty batch");
  if (real_scores.numel() != fake_scores.numel())
    throw InvalidArgument("critic_loss: batch size mismatch");
  return fake_scores.mean() - real_scores.mean();
}

torch::Tensor gradient_penalty(const CriticFn& critic,
                               const torch::Tensor& x_real,
                               const torch::Tensor& x_fake,
                               const torch::Tensor& v_b,
                               GradientPenaltyOptions opts) {
  if (x_real.sizes() != x_fake.sizes())
    throw InvalidArgument("gradient_penalty: real/fake shape mismatch");
  const int64_t batch = x_real.size(0);
  if (v_b.size(0) != batch)
    throw InvalidArgument("gradient_penalty: v_B batch mismatch");

  torch::Tensor alpha;
  if (opts.alpha) {
    alpha = opts.alpha->to(x_real.dtype());
    if (alpha.numel() != batch)
      throw InvalidArgument("gradient_penalty: alpha must have one entry per sample");
  } else {
    alpha = torch::empty({batch}, x_real.options());
    if (opts.generator) {
      alpha.uniform_(0.0, 1.0, *opts.generator);
    } else {
      alpha.uniform_(0.0, 1.0);
    }
  }
  auto a = alpha.view({batch, 1, 1, 1});

  auto x_tilde = (a * x_fake.detach() + (1.0 - a) * x_real.detach())
                     .requires_grad_(true);
  auto v_in = v_b.detach().clone().requires_grad_(true);

  torch::Tensor scores;
  std::vector<torch::Tensor> grads;
  try {
    scores = critic(x_tilde, v_in);
    grads = torch::autograd::grad(
        {scores}, {x_tilde, v_in}, {torch::ones_like(scores)},
        /*retain_graph=*/true, /*create_graph=*/true, /*allow_unused=*/true);
  } catch (const c10::Error& e) {
    throw Error(std::string("gradient_penalty: critic is not differentiable: ") +
                e.what_without_backtrace());
  }

  auto grad_or_zero = [&](const torch::Tensor& g, const torch::Tensor& like) {
    return g.defined() ? g.reshape({batch, -1})
                       : torch::zeros({batch, like.numel() / batch},
                                      like.options());
  };
  auto flat = torch::cat({grad_or_zero(grads[0], x_tilde),
                          grad_or_zero(grads[1], v_in)},
                         1);
  auto norms = flat.norm(2, /*dim=*/1);
  return (norms - 1.0).pow(2).mean();
}

Stage1TrainResult train_stage1(StageOneModel& model,
                               const std::vector<SceneSample>& dataset,
                               const Stage1Config& config) {
  if (dataset.empty()) throw InvalidArgument("train_stage1: empty dataset");
  if (config.steps < 0 || config.batch <= 0)
    throw InvalidArgument("train_stage1: bad steps/batch");

  // Heatmap encodings are fixed per sample; render them once up front.
  const int64_t n = static_cast<int64_t>(dataset.size());
  auto contexts = torch::empty({n, kNumJoints, kContextRes, kContextRes});
  auto targets = torch::empty({n, kNumJoints, kContextRes, kContextRes});
  for (int64_t i = 0; i < n; ++i) {
    contexts[i] = encode_scene_context(dataset[i].context, kContextRes,
                                       kContextRes, config.sigma)
                      .tensor;
    targets[i] = encode_skeleton(dataset[i].target, kContextRes, kContextRes,
                                 HeatmapMode::kGaussian, config.sigma)
                     .tensor;
  }

  auto data_gen = make_generator(config.seed, "data");
  auto noise_gen = make_generator(config.seed, "noise");

  auto opts = [&](double b1, double b2) {
    return torch::optim::AdamOptions(config.lr)
        .betas(std::make_tuple(b1, b2))
        .eps(1e-8)
        .weight_decay(0.0);
  };
  std::vector<torch::Tensor> gen_params = model.encoder->parameters();
  for (auto& p : model.generator->parameters()) gen_params.push_back(p);
  torch::optim::Adam gen_opt(gen_params, opts(config.beta1, config.beta2));
  torch::optim::Adam critic_opt(model.critic->parameters(),
                                opts(config.beta1, config.beta2));

  model.train();
  Stage1TrainResult result;
  result.log.reserve(config.steps);

  auto sample_batch = [&](torch::Tensor& real, torch::Tensor& ctx) {
    auto idx = torch::randint(0, n, {config.batch}, data_gen,
                              torch::TensorOptions().dtype(torch::kInt64));
    real = targets.index_select(0, idx);
    ctx = contexts.index_select(0, idx);
  };
  auto fresh_z = [&]() {
    auto z = torch::empty({config.batch, kNoiseDim});
    z.normal_(0.0, 1.0, noise_gen);
    return z;
  };
  CriticFn critic_fn = [&](const torch::Tensor& x, const torch::Tensor& v) {
    return model.critic(x, v);
  };

  for (int step = 1; step <= config.steps; ++step) {
    Stage1StepLog entry;
    entry.step = step;

    // Critic update: conditioning and fakes are treated as data.
    torch::Tensor real, ctx;
    sample_batch(real, ctx);
    torch::Tensor v_b;
    {
      torch::NoGradGuard no_grad;
      v_b = model.encoder(ctx);
    }
    torch::Tensor fake;
    {
      torch::NoGradGuard no_grad;
      fake = (model.generator(v_b, fresh_z()) + 1.0) / 2.0;
    }
    auto loss_d = critic_loss(model.critic(real, v_b), model.critic(fake, v_b));
    GradientPenaltyOptions gp_opts;
    gp_opts.generator = noise_gen;
    auto penalty = gradient_penalty(critic_fn, real, fake, v_b, gp_opts);
    auto total = loss_d + config.lambda_gp * penalty;
    critic_opt.zero_grad();
    total.backward();
    critic_opt.step();
    ++result.critic_updates;
    entry.wasserstein = loss_d.item<double>();
    entry.penalty = penalty.item<double>();
    entry.critic_loss = total.item<double>();

    // One generator update per n_critic critic updates.
    if (step % config.n_critic == 0) {
      torch::Tensor real2, ctx2;
      sample_batch(real2, ctx2);
      auto v_b_g = model.encoder(ctx2);
      auto fake_g = (model.generator(v_b_g, fresh_z()) + 1.0) / 2.0;
      auto loss_g = -model.critic(fake_g, v_b_g).mean();
      gen_opt.zero_grad();
      critic_opt.zero_grad();  // critic grads from this pass are discarded
      loss_g.backward();
      gen_opt.step();
      ++result.generator_updates;
      entry.gen_loss = loss_g.item<double>();
    }
    result.log.push_back(entry);
  }
  return result;
}

SampleTargetResult sample_target(StageOneModel& model,
                                 const std::vector<PoseSkeleton>& scene,
                                 uint64_t seed, double sigma) {
  auto context =
      encode_scene_context(scene, kContextRes, kContextRes, sigma).tensor;

  torch::NoGradGuard no_grad;
  model.eval();
  auto v_b = model.encoder(context.unsqueeze(0));
  auto z = torch::empty({1, kNoiseDim});
  auto gen = make_generator(seed, "noise");
  z.normal_(0.0, 1.0, gen);
  auto raw = model.generator(v_b, z);
  auto hm01 = ((raw + 1.0) / 2.0).squeeze(0);

  SampleTargetResult result;
  result.heatmap01 = hm01;
  result.skeleton =
      decode_heatmap(hm01, Frame{kContextRes, kContextRes}, kDecodeThreshold);
  result.visible_joints = result.skeleton.visible_count();
  result.all_occluded = result.visible_joints == 0;
  return result;
}

namespace {

NamedTensors stage1_model_tensors(const StageOneModel& model) {
  NamedTensors out = named_model_tensors(*model.encoder, "g_t/encoder.");
  auto gen = named_model_tensors(*model.generator, "g_t/gen.");
  auto critic = named_model_tensors(*model.critic, "d_t/");
  out.insert(out.end(), gen.begin(), gen.end());
  out.insert(out.end(), critic.begin(), critic.end());
  return out;
}

}  // namespace

uint64_t stage1_arch_hash(const StageOneModel& model) {
  return architecture_hash("stage1", stage1_model_tensors(model));
}

void save_stage1(const std::filesystem::path& path, const StageOneModel& model,
                 int64_t step, const std::string& config_json,
                 const torch::optim::Adam* gen_opt,
                 const torch::optim::Adam* critic_opt) {
  NamedTensors tensors = stage1_model_tensors(model);
  if (gen_opt) {
    auto enc = adam_state_tensors(*gen_opt, *model.encoder,
                                  "optimizer/g_t/encoder.");
    auto gen = adam_state_tensors(*gen_opt, *model.generator,
                                  "optimizer/g_t/gen.");
    tensors.insert(tensors.end(), enc.begin(), enc.end());
    tensors.insert(tensors.end(), gen.begin(), gen.end());
  }
  if (critic_opt) {
    auto cr = adam_state_tensors(*critic_opt, *model.critic, "optimizer/d_t/");
    tensors.insert(tensors.end(), cr.begin(), cr.end());
  }
  ArchiveMetadata meta{"stage1", stage1_arch_hash(model), step, config_json};
  save_archive(path, meta, tensors);
}

Stage1Loaded load_stage1(const std::filesystem::path& path) {
  auto archive = load_archive(path);
  if (archive.meta.kind != "stage1")
    throw IncompatibleCheckpoint("checkpoint kind '" + archive.meta.kind +
                                 "' is not a stage-1 archive");
  Stage1Loaded loaded;
  if (archive.meta.arch_hash != stage1_arch_hash(loaded.model))
    throw IncompatibleCheckpoint("stage-1 architecture hash mismatch");
  load_model_tensors(*loaded.model.encoder, "g_t/encoder.", archive.tensors);
  load_model_tensors(*loaded.model.generator, "g_t/gen.", archive.tensors);
  load_model_tensors(*loaded.model.critic, "d_t/", archive.tensors);
  loaded.step = archive.meta.step;
  loaded.config_json = archive.meta.config_json;
  return loaded;
}

}  // namespace scenegen
