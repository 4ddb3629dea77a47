#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "test_support.hpp"

#include <cmath>
#include <random>

#include "scenegen/archive.hpp"
#include "scenegen/errors.hpp"
#include "scenegen/face_refiner.hpp"
#include "scenegen/rng.hpp"

using namespace scenegen;

namespace {

// Facial keypoints on the integer lattice with a power-of-two max-abs
// radius. Every arithmetic step of normalize/denormalize is then exact in
// IEEE doubles, so transform equivariance can be checked bit-for-bit.
PoseSkeleton lattice_face(std::mt19937_64& rng, int radius) {
  std::uniform_int_distribution<int> nose_pos(-100, 100);
  std::uniform_int_distribution<int> offset(-radius, radius);
  std::uniform_int_distribution<int> coin(0, 9);

  PoseSkeleton s;
  s.frame = {4096, 4096};
  const double nx = nose_pos(rng), ny = nose_pos(rng);
  s.at(Joint::kNose) = {nx, ny, true};
  // r_eye pins the radius so the scale is exactly `radius`
  s.at(Joint::kREye) = {nx + radius, ny - radius, true};
  s.at(Joint::kLEye) = {nx + offset(rng), ny + offset(rng), true};
  s.at(Joint::kREar) = {nx + offset(rng), ny + offset(rng), coin(rng) > 1};
  s.at(Joint::kLEar) = {nx + offset(rng), ny + offset(rng), coin(rng) > 1};
  return s;
}

// Scale about the nose, then translate; applied to every visible joint.
PoseSkeleton transform_about_nose(const PoseSkeleton& in, double s, double tx,
                                  double ty) {
  const auto nose = in.at(Joint::kNose);
  PoseSkeleton out = in;
  for (auto& k : out.joints) {
    if (!k.visible) continue;
    k.x = (k.x - nose.x) * s + nose.x + tx;
    k.y = (k.y - nose.y) * s + nose.y + ty;
  }
  return out;
}

double face_mse(const FacialVector& a, const FacialVector& b) {
  double sum = 0.0;
  int n = 0;
  for (int i = 1; i < 5; ++i) {
    if (!a.mask[i] || !b.mask[i]) continue;
    for (int c : {2 * i, 2 * i + 1}) {
      const double d = a.v[c] - b.v[c];
      sum += d * d;
      ++n;
    }
  }
  return n ? sum / n : 0.0;
}

// Two-latent face family with small jitter: eye height and eye spread move
// together, ears sit at the +-1 radius. Gives the denoiser a low-dimensional
// manifold to project onto.
FacialVector synthetic_face(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> eye_h(0.5, 0.9);
  std::uniform_real_distribution<double> eye_w(0.55, 0.8);
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);

  const double h = eye_h(rng), w = eye_w(rng);
  FacialVector f;
  f.mask = {true, true, true, true, true};
  f.v = {0.0,  0.0,                         // nose
         -w,   -h,                          // r_eye
         w + jitter(rng), -h + jitter(rng), // l_eye
         -1.0, -0.2 + jitter(rng),          // r_ear
         1.0,  -0.2 + jitter(rng)};         // l_ear
  return f;
}

}  // namespace

TEST_CASE("normalization matches the hand-worked example") {
  PoseSkeleton s;
  s.frame = {256, 256};
  s.at(Joint::kNose) = {50.0, 50.0, true};
  s.at(Joint::kREye) = {54.0, 46.0, true};

  auto [v, ctx] = normalize_facial(s);
  CHECK(ctx.scale == 4.0);
  CHECK(ctx.nose_x == 50.0);
  CHECK(ctx.nose_y == 50.0);
  CHECK(v.v[0] == 0.0);  // nose exactly at the origin
  CHECK(v.v[1] == 0.0);
  CHECK(v.x(1) == 1.0);  // r_eye
  CHECK(v.y(1) == -1.0);
  CHECK(v.mask[0]);
  CHECK(v.mask[1]);
  CHECK(!v.mask[2]);
  CHECK(v.x(2) == 0.0);  // occluded entries zero-filled
}

TEST_CASE("degenerate faces normalize with unit scale") {
  PoseSkeleton s;
  s.frame = {256, 256};
  for (auto j : kFacialJoints) s.at(j) = {77.0, 33.0, true};
  auto [v, ctx] = normalize_facial(s);
  CHECK(ctx.scale == 1.0);
  for (double c : v.v) CHECK(c == 0.0);

  PoseSkeleton only_nose;
  only_nose.frame = {256, 256};
  only_nose.at(Joint::kNose) = {10.0, 10.0, true};
  auto [v2, ctx2] = normalize_facial(only_nose);
  CHECK(ctx2.scale == 1.0);
  CHECK(v2.mask[0]);
  CHECK(!v2.mask[1]);
}

TEST_CASE("normalized entries stay in the unit box") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> pos(0.0, 255.0);
  for (int trial = 0; trial < 200; ++trial) {
    PoseSkeleton s;
    s.frame = {256, 256};
    for (auto j : kFacialJoints) s.at(j) = {pos(rng), pos(rng), true};
    auto [v, ctx] = normalize_facial(s);
    for (double c : v.v) {
      CHECK(c <= 1.0);
      CHECK(c >= -1.0);
    }
    CHECK(ctx.scale > 0.0);
  }
}

TEST_CASE("occluded nose cannot be normalized") {
  PoseSkeleton s;
  s.frame = {256, 256};
  s.at(Joint::kREye) = {10.0, 10.0, true};
  CHECK_THROWS_AS(normalize_facial(s), CannotNormalize);

  FaceRefiner net;
  init_stage2(net, 1);
  CHECK_THROWS_AS(refine_skeleton(net, s), CannotNormalize);
}

TEST_CASE("denormalize inverts normalize") {
  SUBCASE("bit-exact on power-of-two-radius lattice faces") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 100; ++trial) {
      auto s = lattice_face(rng, 1 << (trial % 4));
      auto [v, ctx] = normalize_facial(s);
      auto back = denormalize_facial(v, ctx);
      for (int i = 0; i < 5; ++i) {
        const auto& orig = s.at(kFacialJoints[i]);
        CHECK(back[i].visible == orig.visible);
        if (!orig.visible) continue;
        CHECK(back[i].x == orig.x);
        CHECK(back[i].y == orig.y);
      }
    }
  }
  SUBCASE("within rounding for arbitrary faces") {
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> pos(0.0, 255.0);
    for (int trial = 0; trial < 100; ++trial) {
      PoseSkeleton s;
      s.frame = {256, 256};
      for (auto j : kFacialJoints) s.at(j) = {pos(rng), pos(rng), true};
      auto [v, ctx] = normalize_facial(s);
      auto back = denormalize_facial(v, ctx);
      for (int i = 0; i < 5; ++i) {
        const auto& orig = s.at(kFacialJoints[i]);
        CHECK(back[i].x == doctest::Approx(orig.x).epsilon(1e-12));
        CHECK(back[i].y == doctest::Approx(orig.y).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("normalize is idempotent across its own inverse") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = lattice_face(rng, 4);
    auto [v, ctx] = normalize_facial(s);

    PoseSkeleton rebuilt;
    rebuilt.frame = s.frame;
    auto kps = denormalize_facial(v, ctx);
    for (int i = 0; i < 5; ++i) rebuilt.at(kFacialJoints[i]) = kps[i];

    auto [v2, ctx2] = normalize_facial(rebuilt);
    CHECK(ctx2.scale == ctx.scale);
    CHECK(ctx2.nose_x == ctx.nose_x);
    CHECK(ctx2.nose_y == ctx.nose_y);
    for (int c = 0; c < kFacialDims; ++c) CHECK(v2.v[c] == v.v[c]);
  }
}

TEST_CASE("perturbation is seeded, bounded and nose-preserving") {
  std::mt19937_64 rng(13);
  auto clean = synthetic_face(rng);

  auto same1 = perturb(clean, 0.05, 42);
  auto same2 = perturb(clean, 0.05, 42);
  auto other = perturb(clean, 0.05, 43);
  for (int c = 0; c < kFacialDims; ++c) CHECK(same1.v[c] == same2.v[c]);

  // every visible non-nose coordinate moves
  int moved = 0, moved_other = 0;
  for (int i = 1; i < 5; ++i) {
    for (int c : {2 * i, 2 * i + 1}) {
      if (same1.v[c] != clean.v[c]) ++moved;
      if (same1.v[c] != other.v[c]) ++moved_other;
    }
  }
  CHECK(moved == 8);
  CHECK(moved_other > 0);

  CHECK(same1.v[0] == 0.0);  // nose pinned
  CHECK(same1.v[1] == 0.0);

  // clamped into the unit box even at saturation
  auto big = perturb(clean, 5.0, 7);
  for (double c : big.v) {
    CHECK(c <= 1.0);
    CHECK(c >= -1.0);
  }

  auto ident = perturb(clean, 0.0, 1);
  for (int c = 0; c < kFacialDims; ++c) CHECK(ident.v[c] == clean.v[c]);

  CHECK_THROWS_AS(perturb(clean, -0.1, 1), InvalidArgument);

  // displacement never exceeds the magnitude before clamping
  for (int c = 0; c < kFacialDims; ++c)
    CHECK(std::abs(same1.v[c] - clean.v[c]) <= 0.05);
}

TEST_CASE("refine keeps the output inside the normalized frame") {
  FaceRefiner net;
  init_stage2(net, 3);
  std::mt19937_64 rng(17);
  auto v = synthetic_face(rng);
  v.mask[4] = false;
  v.v[8] = v.v[9] = 0.0;

  auto out1 = refine(net, v);
  auto out2 = refine(net, v);
  for (int c = 0; c < kFacialDims; ++c) {
    CHECK(out1.v[c] == out2.v[c]);  // deterministic
    CHECK(out1.v[c] <= 1.0);
    CHECK(out1.v[c] >= -1.0);
  }
  CHECK(out1.v[0] == 0.0);        // nose exactly at the origin
  CHECK(out1.v[1] == 0.0);
  CHECK(out1.mask == v.mask);     // occlusion flags pass through
  CHECK(out1.v[8] == 0.0);        // masked entries stay zero
  CHECK(out1.v[9] == 0.0);
}

TEST_CASE("refine_skeleton touches only visible facial joints") {
  FaceRefiner net;
  init_stage2(net, 3);
  std::mt19937_64 rng(19);
  auto s = lattice_face(rng, 4);
  s.at(Joint::kNeck) = {10.0, 200.0, true};
  s.at(Joint::kRWrist) = {30.0, 220.0, true};
  s.at(Joint::kLEar).visible = false;

  auto out = refine_skeleton(net, s);
  CHECK(out.at(Joint::kNeck).x == 10.0);
  CHECK(out.at(Joint::kNeck).y == 200.0);
  CHECK(out.at(Joint::kRWrist).x == 30.0);
  CHECK(!out.at(Joint::kLEar).visible);
  // the nose anchors the normalized frame and comes back untouched
  CHECK(out.at(Joint::kNose).x == s.at(Joint::kNose).x);
  CHECK(out.at(Joint::kNose).y == s.at(Joint::kNose).y);
  CHECK(out.frame == s.frame);
}

TEST_CASE("refinement commutes with translation and scaling, bit for bit") {
  FaceRefiner net;
  init_stage2(net, 9);

  std::mt19937_64 rng(23);
  std::uniform_int_distribution<int> shift(-200, 200);
  const double scales[] = {0.25, 0.5, 1.0, 2.0, 4.0};

  for (int trial = 0; trial < 100; ++trial) {
    auto s = lattice_face(rng, 1 << (trial % 4));
    const double sc = scales[trial % 5];
    const double tx = shift(rng), ty = shift(rng);

    auto expected = transform_about_nose(refine_skeleton(net, s), sc, tx, ty);
    auto actual = refine_skeleton(net, transform_about_nose(s, sc, tx, ty));

    for (int j = 0; j < kNumJoints; ++j) {
      CHECK(actual.joints[j].visible == expected.joints[j].visible);
      if (!expected.joints[j].visible) continue;
      CHECK(actual.joints[j].x == expected.joints[j].x);
      CHECK(actual.joints[j].y == expected.joints[j].y);
    }
  }
}

TEST_CASE("masked mse selects coordinates and matches finite differences") {
  auto pred = torch::tensor({{1.0, 2.0, 3.0, 4.0}});
  auto target = torch::zeros({1, 4});
  auto mask = torch::tensor({{1.0, 0.0, 1.0, 0.0}});
  // (1 + 9) / 2 = 5
  CHECK(masked_mse(pred, target, mask).item<double>() == doctest::Approx(5.0));
  CHECK(masked_mse(pred, target, torch::zeros({1, 4})).item<double>() == 0.0);
  CHECK_THROWS_AS(masked_mse(pred, torch::zeros({2, 4}), mask),
                  InvalidArgument);

  auto gen = make_generator(31);
  auto opts64 = torch::TensorOptions().dtype(torch::kFloat64);
  auto p = torch::randn({3, kFacialDims}, gen, opts64).requires_grad_(true);
  auto t = torch::randn({3, kFacialDims}, gen, opts64);
  auto m = (torch::rand({3, kFacialDims}, gen, opts64) > 0.4).to(torch::kFloat64);

  auto loss = masked_mse(p, t, m);
  loss.backward();
  auto grad = p.grad();

  const double h = 1e-6;
  for (int i = 0; i < 3; ++i) {
    for (int c = 0; c < kFacialDims; ++c) {
      torch::NoGradGuard no_grad;
      auto pp = p.detach().clone();
      auto pm = p.detach().clone();
      pp[i][c] += h;
      pm[i][c] -= h;
      const double fd = (masked_mse(pp, t, m).item<double>() -
                         masked_mse(pm, t, m).item<double>()) /
                        (2 * h);
      const double ag = grad[i][c].item<double>();
      CHECK(std::abs(fd - ag) <= 1e-3 * std::max(1.0, std::abs(ag)));
    }
  }
}

TEST_CASE("training denoises held-out faces") {
  std::mt19937_64 rng(37);
  std::vector<FacialVector> train_set, held_out;
  for (int i = 0; i < 1000; ++i) train_set.push_back(synthetic_face(rng));
  for (int i = 0; i < 50; ++i) held_out.push_back(synthetic_face(rng));

  FaceRefiner net;
  init_stage2(net, 21);

  // Plain SGD at 1e-2 needs a long run before the regressor beats the raw
  // perturbation error; 100k steps lands comfortably past the break-even.
  Stage2Config cfg;
  cfg.steps = 100000;
  cfg.batch = 256;
  cfg.seed = 4;
  auto result = train_stage2(net, train_set, cfg);
  REQUIRE(result.loss.size() == size_t(cfg.steps));

  const double first = result.loss.front();
  double tail = 0.0;
  for (size_t i = result.loss.size() - 20; i < result.loss.size(); ++i)
    tail += result.loss[i];
  tail /= 20.0;
  CHECK(tail < first);

  double before = 0.0, after = 0.0;
  uint64_t seed = 1000;
  for (const auto& clean : held_out) {
    auto noisy = perturb(clean, 0.05, seed++);
    auto denoised = refine(net, noisy);
    before += face_mse(noisy, clean);
    after += face_mse(denoised, clean);
  }
  CHECK(after < before);

  CHECK_THROWS_AS(train_stage2(net, {}, cfg), InvalidArgument);
}

TEST_CASE("stage-2 checkpoints roundtrip") {
  FaceRefiner net;
  init_stage2(net, 55);
  auto path = std::filesystem::temp_directory_path() / "scenegen_stage2.bin";
  save_stage2(path, net, 77, R"({"noise":0.05})");

  auto loaded = load_stage2(path);
  CHECK(loaded.step == 77);
  CHECK(loaded.config_json == R"({"noise":0.05})");
  auto in = torch::rand({3, kFacialDims}, make_generator(2)) * 2.0 - 1.0;
  torch::NoGradGuard no_grad;
  net->eval();
  loaded.net->eval();
  CHECK(torch::equal(net->forward(in), loaded.net->forward(in)));

  save_archive(path, {"stage1", 1, 0, "{}"}, {});
  CHECK_THROWS_AS(load_stage2(path), IncompatibleCheckpoint);
  std::filesystem::remove(path);
}
