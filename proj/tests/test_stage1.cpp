#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "test_support.hpp"

#include <cmath>

#include "scenegen/errors.hpp"
#include "scenegen/pose_wgan.hpp"
#include "scenegen/rng.hpp"

using namespace scenegen;

namespace {

PoseSkeleton random_skeleton(uint64_t seed, Frame frame = {64, 64}) {
  auto gen = make_generator(seed);
  auto xs = torch::rand({kNumJoints, 2}, gen);
  PoseSkeleton s;
  s.frame = frame;
  for (int j = 0; j < kNumJoints; ++j) {
    s.joints[j] = {xs[j][0].item<double>() * frame.width,
                   xs[j][1].item<double>() * frame.height, true};
  }
  return s;
}

}  // namespace

TEST_CASE("seed substreams are stable and independent") {
  CHECK(substream_seed(0, "data") == substream_seed(0, "data"));
  CHECK(substream_seed(0, "data") != substream_seed(0, "noise"));
  CHECK(substream_seed(0, "data") != substream_seed(1, "data"));
  CHECK(substream_seed(0, "init") != substream_seed(0, "noise"));
}

TEST_CASE("stage-1 model shapes") {
  StageOneModel model;
  model.init_params(3);
  model.eval();
  torch::NoGradGuard no_grad;

  auto ctx = torch::rand({2, kNumJoints, kContextRes, kContextRes},
                         make_generator(1));
  auto v = encode_context(model, ctx);
  CHECK(v.sizes() == torch::IntArrayRef({2, kEmbedDim}));
  CHECK(v.isfinite().all().item<bool>());

  auto z = torch::randn({2, kNoiseDim}, make_generator(2));
  auto pose = generate_pose(model, v, z);
  CHECK(pose.sizes() ==
        torch::IntArrayRef({2, kNumJoints, kContextRes, kContextRes}));
  CHECK(pose.max().item<float>() <= 1.0f);
  CHECK(pose.min().item<float>() >= -1.0f);

  auto scores = critic_score(model, (pose + 1.0) / 2.0, v);
  CHECK(scores.sizes() == torch::IntArrayRef({2}));
  CHECK(scores.isfinite().all().item<bool>());

  // unbatched input is promoted
  auto v1 = encode_context(model, ctx[0]);
  CHECK(v1.sizes() == torch::IntArrayRef({1, kEmbedDim}));
}

TEST_CASE("stage-1 input validation") {
  StageOneModel model;
  model.init_params(3);
  CHECK_THROWS_AS(
      encode_context(model, torch::rand({2, 17, kContextRes, kContextRes})),
      InvalidArgument);
  CHECK_THROWS_AS(encode_context(model, torch::rand({2, kNumJoints, 32, 32})),
                  InvalidArgument);
  CHECK_THROWS_AS(generate_pose(model, torch::rand({2, 100}),
                                torch::rand({2, kNoiseDim})),
                  InvalidArgument);
  CHECK_THROWS_AS(generate_pose(model, torch::rand({2, kEmbedDim}),
                                torch::rand({3, kNoiseDim})),
                  InvalidArgument);
  CHECK_THROWS_AS(
      critic_score(model, torch::rand({2, kNumJoints, kContextRes, kContextRes}),
                   torch::rand({3, kEmbedDim})),
      InvalidArgument);
}

TEST_CASE("critic loss is mean(fake) - mean(real)") {
  auto real = torch::tensor({1.0f, 3.0f});
  auto fake = torch::tensor({0.0f, 2.0f});
  CHECK(critic_loss(real, fake).item<double>() == doctest::Approx(-1.0));
  CHECK(critic_loss(fake, real).item<double>() == doctest::Approx(1.0));
  CHECK_THROWS_AS(critic_loss(torch::empty({0}), fake), InvalidArgument);
  CHECK_THROWS_AS(critic_loss(real, torch::tensor({1.0f})), InvalidArgument);
}

TEST_CASE("gradient penalty matches closed forms for linear critics") {
  auto real = torch::rand({3, 1, 4, 4});
  auto fake = torch::rand({3, 1, 4, 4});
  auto v = torch::rand({3, 5});
  GradientPenaltyOptions opts;
  opts.alpha = torch::full({3}, 0.5);

  SUBCASE("sum over x: gradient is all ones") {
    CriticFn critic = [](const torch::Tensor& x, const torch::Tensor&) {
      return x.flatten(1).sum(1);
    };
    // norm = sqrt(16) = 4 per sample -> (4 - 1)^2 = 9
    auto p = gradient_penalty(critic, real, fake, v, opts);
    CHECK(p.item<double>() == doctest::Approx(9.0).epsilon(1e-6));
  }
  SUBCASE("critic reading only the conditioning") {
    CriticFn critic = [](const torch::Tensor&, const torch::Tensor& vv) {
      return vv.sum(1) * 2.0;
    };
    // norm = 2 sqrt(5) -> (2 sqrt(5) - 1)^2
    const double n = 2.0 * std::sqrt(5.0);
    auto p = gradient_penalty(critic, real, fake, v, opts);
    CHECK(p.item<double>() == doctest::Approx((n - 1) * (n - 1)).epsilon(1e-6));
  }
  SUBCASE("both inputs contribute to one norm") {
    CriticFn critic = [](const torch::Tensor& x, const torch::Tensor& vv) {
      return 2.0 * x.flatten(1).sum(1) + 3.0 * vv.sum(1);
    };
    // norm = sqrt(4 * 16 + 9 * 5) = sqrt(109)
    const double n = std::sqrt(109.0);
    auto p = gradient_penalty(critic, real, fake, v, opts);
    CHECK(p.item<double>() == doctest::Approx((n - 1) * (n - 1)).epsilon(1e-6));
  }
}

TEST_CASE("interpolation weights place the probe point") {
  // critic = sum(x^2): gradient 2*x_tilde, so the penalty reveals x_tilde
  CriticFn critic = [](const torch::Tensor& x, const torch::Tensor&) {
    return (x * x).flatten(1).sum(1);
  };
  auto real = torch::full({1, 1, 2, 2}, 0.5);
  auto fake = torch::full({1, 1, 2, 2}, 1.0);
  auto v = torch::zeros({1, 2});

  GradientPenaltyOptions at_real;
  at_real.alpha = torch::zeros({1});
  // grad = 2*0.5 = 1 everywhere -> norm 2 -> (2-1)^2 = 1
  CHECK(gradient_penalty(critic, real, fake, v, at_real).item<double>() ==
        doctest::Approx(1.0).epsilon(1e-6));

  GradientPenaltyOptions at_fake;
  at_fake.alpha = torch::ones({1});
  // grad = 2 everywhere -> norm 4 -> (4-1)^2 = 9
  CHECK(gradient_penalty(critic, real, fake, v, at_fake).item<double>() ==
        doctest::Approx(9.0).epsilon(1e-6));
}

TEST_CASE("gradient penalty agrees with finite differences") {
  // Per-sample MLP critic in double precision.
  auto gen = make_generator(17);
  auto opts64 = torch::TensorOptions().dtype(torch::kFloat64);
  auto w1 = torch::randn({8, 13}, gen, opts64) * 0.5;
  auto b1 = torch::randn({8}, gen, opts64) * 0.1;
  auto w2 = torch::randn({1, 8}, gen, opts64) * 0.5;
  CriticFn critic = [&](const torch::Tensor& x, const torch::Tensor& v) {
    auto in = torch::cat({x.reshape({x.size(0), -1}), v}, 1);
    return torch::linear(torch::tanh(torch::linear(in, w1, b1)), w2).squeeze(1);
  };

  auto real = torch::randn({2, 1, 3, 3}, gen, opts64);
  auto fake = torch::randn({2, 1, 3, 3}, gen, opts64);
  auto v = torch::randn({2, 4}, gen, opts64);
  auto alpha = torch::full({2}, 0.37, opts64);

  GradientPenaltyOptions opts;
  opts.alpha = alpha;
  const double penalty = gradient_penalty(critic, real, fake, v, opts)
                             .item<double>();

  // Rebuild the probe point and differentiate numerically. Scores are
  // per-sample, so d(sum)/d(element of sample i) = d(score_i).
  auto a = alpha.view({2, 1, 1, 1});
  auto x_tilde = a * fake + (1.0 - a) * real;
  const double h = 1e-6;
  auto sum_score = [&](const torch::Tensor& x, const torch::Tensor& vv) {
    torch::NoGradGuard no_grad;
    return critic(x, vv).sum().item<double>();
  };

  double penalty_fd = 0.0;
  for (int i = 0; i < 2; ++i) {
    double sq = 0.0;
    for (int e = 0; e < 9; ++e) {
      auto xp = x_tilde.clone();
      auto xm = x_tilde.clone();
      xp.view({2, 9})[i][e] += h;
      xm.view({2, 9})[i][e] -= h;
      const double g = (sum_score(xp, v) - sum_score(xm, v)) / (2 * h);
      sq += g * g;
    }
    for (int e = 0; e < 4; ++e) {
      auto vp = v.clone();
      auto vm = v.clone();
      vp[i][e] += h;
      vm[i][e] -= h;
      const double g = (sum_score(x_tilde, vp) - sum_score(x_tilde, vm)) / (2 * h);
      sq += g * g;
    }
    const double n = std::sqrt(sq);
    penalty_fd += (n - 1.0) * (n - 1.0) / 2.0;
  }
  CHECK(penalty == doctest::Approx(penalty_fd).epsilon(1e-6));
}

TEST_CASE("gradient penalty validates shapes") {
  CriticFn critic = [](const torch::Tensor& x, const torch::Tensor&) {
    return x.flatten(1).sum(1);
  };
  CHECK_THROWS_AS(gradient_penalty(critic, torch::rand({2, 1, 4, 4}),
                                   torch::rand({3, 1, 4, 4}),
                                   torch::rand({2, 5})),
                  InvalidArgument);
  CHECK_THROWS_AS(gradient_penalty(critic, torch::rand({2, 1, 4, 4}),
                                   torch::rand({2, 1, 4, 4}),
                                   torch::rand({3, 5})),
                  InvalidArgument);
  GradientPenaltyOptions bad_alpha;
  bad_alpha.alpha = torch::rand({5});
  CHECK_THROWS_AS(gradient_penalty(critic, torch::rand({2, 1, 4, 4}),
                                   torch::rand({2, 1, 4, 4}),
                                   torch::rand({2, 5}), bad_alpha),
                  InvalidArgument);
}

TEST_CASE("initialization is seeded and reproducible") {
  StageOneModel a, b, c;
  a.init_params(42);
  b.init_params(42);
  c.init_params(43);

  auto wa = a.generator->named_parameters()["seed.weight"];
  auto wb = b.generator->named_parameters()["seed.weight"];
  auto wc = c.generator->named_parameters()["seed.weight"];
  CHECK(torch::equal(wa, wb));
  CHECK(!torch::equal(wa, wc));

  // weight statistics near N(0, 0.02); biases exactly zero
  auto fcw = a.encoder->named_parameters()["fc.weight"];
  CHECK(fcw.std().item<double>() == doctest::Approx(0.02).epsilon(0.05));
  CHECK(std::abs(fcw.mean().item<double>()) < 1e-3);
  CHECK(a.encoder->named_parameters()["fc.bias"].abs().sum().item<double>() ==
        0.0);
  auto bnw = a.generator->named_parameters()["bn1.weight"];
  CHECK(bnw.mean().item<double>() == doctest::Approx(1.0).epsilon(0.02));

  a.eval();
  b.eval();
  torch::NoGradGuard no_grad;
  auto v = torch::randn({1, kEmbedDim}, make_generator(9));
  auto z = torch::randn({1, kNoiseDim}, make_generator(10));
  CHECK(torch::equal(a.generator(v, z), b.generator(v, z)));
}

TEST_CASE("target sampling is deterministic in the seed") {
  StageOneModel model;
  model.init_params(7);
  std::vector<PoseSkeleton> scene = {random_skeleton(100),
                                     random_skeleton(101)};

  auto r1 = sample_target(model, scene, 99);
  auto r2 = sample_target(model, scene, 99);
  auto r3 = sample_target(model, scene, 100);

  CHECK(torch::equal(r1.heatmap01, r2.heatmap01));
  CHECK(!torch::equal(r1.heatmap01, r3.heatmap01));
  CHECK(r1.heatmap01.min().item<float>() >= 0.0f);
  CHECK(r1.heatmap01.max().item<float>() <= 1.0f);
  CHECK(r1.skeleton.frame == (Frame{kContextRes, kContextRes}));
  CHECK(r1.visible_joints == r1.skeleton.visible_count());
  CHECK(r1.all_occluded == (r1.visible_joints == 0));
  for (int j = 0; j < kNumJoints; ++j) {
    CHECK(r1.skeleton.joints[j].visible == r2.skeleton.joints[j].visible);
    if (r1.skeleton.joints[j].visible) {
      CHECK(r1.skeleton.joints[j].x == r2.skeleton.joints[j].x);
    }
  }
}

TEST_CASE("short training run keeps the advertised update schedule") {
  StageOneModel model;
  model.init_params(5);

  std::vector<SceneSample> dataset;
  for (uint64_t i = 0; i < 3; ++i) {
    SceneSample sample;
    sample.context = {random_skeleton(200 + i), random_skeleton(300 + i)};
    sample.target = random_skeleton(400 + i);
    dataset.push_back(sample);
  }

  Stage1Config cfg;
  cfg.steps = 10;
  cfg.batch = 4;
  cfg.seed = 1;
  auto result = train_stage1(model, dataset, cfg);

  CHECK(result.critic_updates == 10);
  CHECK(result.generator_updates == 2);  // every n_critic = 5 steps
  REQUIRE(result.log.size() == 10);
  for (const auto& entry : result.log) {
    CHECK(std::isfinite(entry.critic_loss));
    CHECK(std::isfinite(entry.wasserstein));
    CHECK(std::isfinite(entry.penalty));
    CHECK(entry.penalty >= 0.0);
    CHECK(entry.gen_loss.has_value() == (entry.step % 5 == 0));
    if (entry.gen_loss) CHECK(std::isfinite(*entry.gen_loss));
  }

  CHECK_THROWS_AS(train_stage1(model, {}, cfg), InvalidArgument);
}
