#include "scenegen/synth.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "scenegen/errors.hpp"
#include "scenegen/rng.hpp"

namespace scenegen {

namespace {

double draw(torch::Generator& gen, double lo, double hi) {
  return lo + (hi - lo) * torch::rand({1}, gen).item<double>();
}

int draw_int(torch::Generator& gen, int n) {
  return static_cast<int>(
      torch::randint(0, n, {1}, gen,
                     torch::TensorOptions().dtype(torch::kInt64))
          .item<int64_t>());
}

// Everything that stays fixed across poses of the same person.
struct FigureIdentity {
  double height;    // nose-to-ankle span, pixels
  double eye_span;  // eye x offset as a fraction of height
  double eye_rise;  // eye y rise as a fraction of height
};

// One articulation: where the figure stands and how the limbs fall.
struct FigurePose {
  double nose_x = 0;
  double nose_y = 0;
  double lean = 0;              // x drift per unit drop below the nose
  double arm[8] = {0};          // per side: elbow dx, dy, wrist dx, dy
  double leg[4] = {0};          // per side: knee dx, ankle dx
};

FigureIdentity draw_identity(torch::Generator& gen, double h_lo, double h_hi) {
  FigureIdentity id;
  id.height = draw(gen, h_lo, h_hi);
  id.eye_span = draw(gen, 0.030, 0.050);
  id.eye_rise = draw(gen, 0.020, 0.035);
  return id;
}

FigurePose draw_pose(torch::Generator& gen, double nose_x, double nose_y) {
  FigurePose p;
  p.nose_x = nose_x;
  p.nose_y = nose_y;
  p.lean = draw(gen, -0.06, 0.06);
  for (int s = 0; s < 2; ++s) {
    p.arm[4 * s + 0] = draw(gen, 0.01, 0.10);  // elbow out
    p.arm[4 * s + 1] = draw(gen, 0.08, 0.18);  // elbow down
    p.arm[4 * s + 2] = draw(gen, -0.04, 0.10);  // wrist out
    p.arm[4 * s + 3] = draw(gen, 0.04, 0.16);  // wrist down
    p.leg[2 * s + 0] = draw(gen, -0.02, 0.02);
    p.leg[2 * s + 1] = draw(gen, -0.03, 0.03);
  }
  return p;
}

PoseSkeleton build_figure(const FigureIdentity& id, const FigurePose& pose,
                          const Frame& frame) {
  const double h = id.height;
  PoseSkeleton s;
  s.frame = frame;

  auto put = [&](Joint j, double dx, double dy) {
    // dx, dy are offsets from the nose in height fractions; lean tilts
    // everything below the nose.
    double x = pose.nose_x + dx * h + pose.lean * std::max(0.0, dy) * h;
    double y = pose.nose_y + dy * h;
    x = std::clamp(x, 0.0, frame.width - 1.0);
    y = std::clamp(y, 0.0, frame.height - 1.0);
    s.at(j) = {x, y, true};
  };

  put(Joint::kNose, 0.0, 0.0);
  put(Joint::kNeck, 0.0, 0.18);
  const double side[2] = {-1.0, 1.0};  // right joints first, then left
  for (int i = 0; i < 2; ++i) {
    const double sg = side[i];
    const double sh_x = sg * 0.11;
    const double el_x = sh_x + sg * pose.arm[4 * i + 0];
    const double el_y = 0.18 + pose.arm[4 * i + 1];
    const double wr_x = el_x + sg * pose.arm[4 * i + 2];
    const double wr_y = el_y + pose.arm[4 * i + 3];
    const double hip_x = sg * 0.075;
    const double kn_x = hip_x + pose.leg[2 * i + 0];
    const double an_x = kn_x + pose.leg[2 * i + 1];
    put(i == 0 ? Joint::kRShoulder : Joint::kLShoulder, sh_x, 0.18);
    put(i == 0 ? Joint::kRElbow : Joint::kLElbow, el_x, el_y);
    put(i == 0 ? Joint::kRWrist : Joint::kLWrist, wr_x, wr_y);
    put(i == 0 ? Joint::kRHip : Joint::kLHip, hip_x, 0.52);
    put(i == 0 ? Joint::kRKnee : Joint::kLKnee, kn_x, 0.76);
    put(i == 0 ? Joint::kRAnkle : Joint::kLAnkle, an_x, 1.0);
    put(i == 0 ? Joint::kREye : Joint::kLEye, sg * id.eye_span, -id.eye_rise);
    put(i == 0 ? Joint::kREar : Joint::kLEar, sg * (id.eye_span + 0.028),
        -0.4 * id.eye_rise);
  }
  return s;
}

constexpr Frame kSceneFrame{192, 128};

SceneRecord right_of_record(torch::Generator& gen) {
  const double w = kSceneFrame.width;
  SceneRecord rec;
  rec.scene.frame = kSceneFrame;
  rec.rule = to_string(SceneRule::kRightOf);

  auto ctx_id = draw_identity(gen, 48, 68);
  auto tgt_id = draw_identity(gen, 48, 68);
  const double ctx_x = draw(gen, 0.08 * w, 0.40 * w);
  const double gap = draw(gen, 0.12 * w, 0.91 * w - ctx_x);
  auto ctx = build_figure(ctx_id, draw_pose(gen, ctx_x, draw(gen, 14, 26)),
                          kSceneFrame);
  auto tgt = build_figure(
      tgt_id, draw_pose(gen, ctx_x + gap, draw(gen, 14, 26)), kSceneFrame);

  rec.target_index = draw_int(gen, 2);
  rec.scene.people.resize(2);
  rec.scene.people[rec.target_index] = tgt;
  rec.scene.people[1 - rec.target_index] = ctx;
  rec.rule_params = nlohmann::json{{"context_nose_x", ctx_x}, {"gap", gap}}
                        .dump();
  return rec;
}

SceneRecord between_record(torch::Generator& gen) {
  const double w = kSceneFrame.width;
  SceneRecord rec;
  rec.scene.frame = kSceneFrame;
  rec.rule = to_string(SceneRule::kBetween);

  const double left_x = draw(gen, 0.06 * w, 0.21 * w);
  const double right_x = draw(gen, 0.73 * w, 0.94 * w);
  const double t = draw(gen, 0.15, 0.85);
  const double tgt_x = left_x + t * (right_x - left_x);

  std::vector<PoseSkeleton> figures;
  for (double x : {left_x, right_x, tgt_x}) {
    figures.push_back(build_figure(draw_identity(gen, 48, 68),
                                   draw_pose(gen, x, draw(gen, 14, 26)),
                                   kSceneFrame));
  }

  rec.target_index = draw_int(gen, 3);
  rec.scene.people.resize(3);
  rec.scene.people[rec.target_index] = figures[2];
  int slot = 0;
  for (int i = 0; i < 3; ++i) {
    if (i == rec.target_index) continue;
    rec.scene.people[i] = figures[slot++];
  }
  rec.rule_params =
      nlohmann::json{{"left_x", left_x}, {"right_x", right_x}}.dump();
  return rec;
}

SceneRecord scaled_row_record(torch::Generator& gen) {
  const double w = kSceneFrame.width;
  constexpr double kTaper = 0.45;
  SceneRecord rec;
  rec.scene.frame = kSceneFrame;
  rec.rule = to_string(SceneRule::kScaledRow);

  const double ground_y = draw(gen, 108, 122);
  const double base_height = draw(gen, 64, 84);
  const double xs[3] = {draw(gen, 0.08 * w, 0.21 * w),
                        draw(gen, 0.42 * w, 0.55 * w),
                        draw(gen, 0.76 * w, 0.91 * w)};

  rec.target_index = draw_int(gen, 3);
  rec.scene.people.resize(3);
  for (int i = 0; i < 3; ++i) {
    const double h = base_height * (1.0 - kTaper * xs[i] / w);
    auto id = draw_identity(gen, h, h);
    auto pose = draw_pose(gen, xs[i], ground_y - h);
    rec.scene.people[i] = build_figure(id, pose, kSceneFrame);
  }
  rec.rule_params = nlohmann::json{{"ground_y", ground_y},
                                   {"base_height", base_height},
                                   {"taper", kTaper}}
                        .dump();
  return rec;
}

}  // namespace

std::string to_string(SceneRule rule) {
  switch (rule) {
    case SceneRule::kRightOf:
      return "right_of";
    case SceneRule::kBetween:
      return "between";
    case SceneRule::kScaledRow:
      return "scaled_row";
  }
  throw InvalidArgument("unknown scene rule");
}

SceneRule scene_rule_from_string(const std::string& name) {
  if (name == "right_of") return SceneRule::kRightOf;
  if (name == "between") return SceneRule::kBetween;
  if (name == "scaled_row") return SceneRule::kScaledRow;
  throw InvalidArgument("unknown scene rule: " + name);
}

std::vector<SceneRecord> synth_scene_dataset(int n, SceneRule rule,
                                             uint64_t seed) {
  if (n < 1) {
    throw InvalidArgument("scene dataset needs n >= 1");
  }
  auto gen = make_generator(seed, "data");
  std::vector<SceneRecord> records;
  records.reserve(n);
  for (int i = 0; i < n; ++i) {
    switch (rule) {
      case SceneRule::kRightOf:
        records.push_back(right_of_record(gen));
        break;
      case SceneRule::kBetween:
        records.push_back(between_record(gen));
        break;
      case SceneRule::kScaledRow:
        records.push_back(scaled_row_record(gen));
        break;
    }
  }
  return records;
}

SceneSample scene_sample_of(const SceneRecord& record) {
  const int n = static_cast<int>(record.scene.people.size());
  if (record.target_index < 0 || record.target_index >= n) {
    throw InvalidArgument("target index " +
                          std::to_string(record.target_index) +
                          " outside a scene of " + std::to_string(n) +
                          " people");
  }
  SceneSample sample;
  sample.target = record.scene.people[record.target_index];
  for (int i = 0; i < n; ++i) {
    if (i != record.target_index) {
      sample.context.push_back(record.scene.people[i]);
    }
  }
  return sample;
}

Image render_scene(const SceneAnnotation& scene) {
  Image img(scene.frame.height, scene.frame.width);
  // Graded backdrop so the scene is not a flat void.
  auto rows = torch::linspace(0.10, 0.22, scene.frame.height)
                  .view({1, scene.frame.height, 1});
  img.tensor = rows.expand({3, scene.frame.height, scene.frame.width})
                   .contiguous();
  for (size_t i = 0; i < scene.people.size(); ++i) {
    auto style = palette_style(static_cast<int>(i));
    style.thickness = 2.0;
    render_figure(img, scene.people[i], style);
  }
  return img;
}

std::vector<TransferSample> synth_pair_dataset(int n, uint64_t seed, int res) {
  if (n < 1) {
    throw InvalidArgument("pair dataset needs n >= 1");
  }
  if (res < 32) {
    throw InvalidArgument("pair canvas below 32 px");
  }
  auto gen = make_generator(seed, "data");
  const Frame frame{res, res};

  std::vector<TransferSample> samples;
  samples.reserve(n);
  for (int i = 0; i < n; ++i) {
    auto id = draw_identity(gen, 0.55 * res, 0.78 * res);
    auto style = palette_style(draw_int(gen, 8));
    style.thickness = std::max(1.5, res / 85.0);

    TransferSample sample;
    for (int half = 0; half < 2; ++half) {
      auto pose = draw_pose(gen, draw(gen, 0.38 * res, 0.62 * res),
                            draw(gen, 0.06 * res, 0.16 * res));
      auto skel = build_figure(id, pose, frame);
      Image canvas(res, res, {0.12f, 0.12f, 0.14f});
      render_figure(canvas, skel, style);
      (half == 0 ? sample.image_a : sample.image_b) =
          to_pm1_range(canvas.tensor);
      (half == 0 ? sample.pose_a : sample.pose_b) = skel;
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

}  // namespace scenegen
