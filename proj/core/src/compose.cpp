#include "scenegen/compose.hpp"

#include <algorithm>
#include <cmath>

#include "json.hpp"
#include "scenegen/errors.hpp"

namespace scenegen {

namespace {

using torch::indexing::Slice;

struct PixelRect {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // half-open, clipped
  int rx = 0, ry = 0, rw = 0, rh = 0;  // rounded box before clipping
};

PixelRect paste_rect(const PlacementBox& box, const Frame& frame) {
  if (!(box.w > 0.0) || !(box.h > 0.0)) {
    throw InvalidArgument("degenerate placement box");
  }
  PixelRect r;
  r.rx = static_cast<int>(std::llround(box.x));
  r.ry = static_cast<int>(std::llround(box.y));
  r.rw = std::max<int>(1, static_cast<int>(std::llround(box.w)));
  r.rh = std::max<int>(1, static_cast<int>(std::llround(box.h)));
  r.x0 = std::max(r.rx, 0);
  r.y0 = std::max(r.ry, 0);
  r.x1 = std::min(r.rx + r.rw, frame.width);
  r.y1 = std::min(r.ry + r.rh, frame.height);
  if (r.x0 >= r.x1 || r.y0 >= r.y1) {
    throw InvalidArgument("placement box entirely outside the scene frame");
  }
  return r;
}

}  // namespace

PlacementBox derive_box(const PoseSkeleton& skeleton, double margin,
                        int canvas) {
  if (margin < 0.0) {
    throw InvalidArgument("negative box margin");
  }
  if (canvas < 1) {
    throw InvalidArgument("canvas size must be positive");
  }
  double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
  int visible = 0;
  for (const auto& k : skeleton.joints) {
    if (!k.visible) continue;
    if (visible == 0) {
      min_x = max_x = k.x;
      min_y = max_y = k.y;
    } else {
      min_x = std::min(min_x, k.x);
      max_x = std::max(max_x, k.x);
      min_y = std::min(min_y, k.y);
      max_y = std::max(max_y, k.y);
    }
    ++visible;
  }
  if (visible < 2) {
    throw InsufficientPose(
        "box derivation needs at least two visible keypoints");
  }
  const double span_x = max_x - min_x;
  const double span_y = max_y - min_y;
  if (span_x <= 0.0 || span_y <= 0.0) {
    throw InsufficientPose("visible keypoints have no 2D extent");
  }

  double x0 = min_x - margin * span_x;
  double x1 = max_x + margin * span_x;
  double y0 = min_y - margin * span_y;
  double y1 = max_y + margin * span_y;
  x0 = std::max(x0, 0.0);
  y0 = std::max(y0, 0.0);
  x1 = std::min(x1, static_cast<double>(skeleton.frame.width));
  y1 = std::min(y1, static_cast<double>(skeleton.frame.height));
  if (x1 <= x0 || y1 <= y0) {
    throw InvalidArgument("skeleton lies outside its frame");
  }

  PlacementBox box;
  box.x = x0;
  box.y = y0;
  box.w = x1 - x0;
  box.h = y1 - y0;
  box.scale = std::max(box.w, box.h) / canvas;
  return box;
}

PoseSkeleton skeleton_to_canvas(const PoseSkeleton& skeleton,
                                const PlacementBox& box, int canvas) {
  if (!(box.w > 0.0) || !(box.h > 0.0)) {
    throw InvalidArgument("degenerate placement box");
  }
  if (canvas < 1) {
    throw InvalidArgument("canvas size must be positive");
  }
  const double s = canvas / std::max(box.w, box.h);
  const double pad_x = (canvas - box.w * s) / 2.0;
  const double pad_y = (canvas - box.h * s) / 2.0;

  PoseSkeleton out;
  out.frame = {canvas, canvas};
  for (int i = 0; i < kNumJoints; ++i) {
    const auto& k = skeleton.joints[i];
    if (!k.visible) continue;
    out.joints[i] = {(k.x - box.x) * s + pad_x, (k.y - box.y) * s + pad_y,
                     true};
  }
  return out;
}

PoseSkeleton canvas_to_scene(const PoseSkeleton& canvas_skeleton,
                             const PlacementBox& box, Frame scene) {
  if (!(box.w > 0.0) || !(box.h > 0.0)) {
    throw InvalidArgument("degenerate placement box");
  }
  const int canvas = canvas_skeleton.frame.width;
  if (canvas < 1 || canvas_skeleton.frame.height != canvas) {
    throw InvalidArgument("canvas skeleton frame must be square");
  }
  const double s = canvas / std::max(box.w, box.h);
  const double pad_x = (canvas - box.w * s) / 2.0;
  const double pad_y = (canvas - box.h * s) / 2.0;

  PoseSkeleton out;
  out.frame = scene;
  for (int i = 0; i < kNumJoints; ++i) {
    const auto& k = canvas_skeleton.joints[i];
    if (!k.visible) continue;
    out.joints[i] = {(k.x - pad_x) / s + box.x, (k.y - pad_y) / s + box.y,
                     true};
  }
  return out;
}

Image composite(const Image& scene, const Image& person,
                const PlacementBox& box) {
  if (!scene.tensor.defined() || !person.tensor.defined()) {
    throw InvalidArgument("composite needs two images");
  }
  const Frame frame{scene.width(), scene.height()};
  const PixelRect r = paste_rect(box, frame);

  auto resized = resize_bilinear(person, r.rh, r.rw);
  auto out = scene.tensor.clone();
  out.index_put_(
      {Slice(), Slice(r.y0, r.y1), Slice(r.x0, r.x1)},
      resized.tensor.index({Slice(), Slice(r.y0 - r.ry, r.y1 - r.ry),
                            Slice(r.x0 - r.rx, r.x1 - r.rx)}));
  return Image(out);
}

namespace {

// Scene pixels inside the paste rectangle that also fall in some context
// person's tight visible-keypoint bbox.
int64_t paste_overlap(const SceneAnnotation& scene, const PixelRect& r) {
  auto mask = torch::zeros({scene.frame.height, scene.frame.width},
                           torch::TensorOptions().dtype(torch::kBool));
  for (const auto& person : scene.people) {
    double min_x = 0, min_y = 0, max_x = 0, max_y = 0;
    int visible = 0;
    for (const auto& k : person.joints) {
      if (!k.visible) continue;
      if (visible == 0) {
        min_x = max_x = k.x;
        min_y = max_y = k.y;
      } else {
        min_x = std::min(min_x, k.x);
        max_x = std::max(max_x, k.x);
        min_y = std::min(min_y, k.y);
        max_y = std::max(max_y, k.y);
      }
      ++visible;
    }
    if (visible == 0) continue;
    const int x0 = std::clamp(static_cast<int>(std::floor(min_x)), 0,
                              scene.frame.width);
    const int x1 = std::clamp(static_cast<int>(std::floor(max_x)) + 1, 0,
                              scene.frame.width);
    const int y0 = std::clamp(static_cast<int>(std::floor(min_y)), 0,
                              scene.frame.height);
    const int y1 = std::clamp(static_cast<int>(std::floor(max_y)) + 1, 0,
                              scene.frame.height);
    if (x0 < x1 && y0 < y1) {
      mask.index_put_({Slice(y0, y1), Slice(x0, x1)}, true);
    }
  }
  return mask.index({Slice(r.y0, r.y1), Slice(r.x0, r.x1)})
      .sum()
      .item<int64_t>();
}

}  // namespace

GenerationResult generate_scene(const Image& scene_image,
                                const SceneAnnotation& scene_poses,
                                const Image& ref_image,
                                const PoseSkeleton& ref_pose,
                                PipelineModels& models, uint64_t seed) {
  if (!scene_image.tensor.defined() ||
      scene_image.width() != scene_poses.frame.width ||
      scene_image.height() != scene_poses.frame.height) {
    throw InvalidArgument("scene image size does not match the annotation");
  }
  models.stage1.eval();
  models.refiner->eval();
  models.stage3.eval();
  torch::NoGradGuard no_grad;
  const int res = models.stage3.generator->arch.res;

  GenerationResult out;

  // Pose sampling conditioned on the scene context.
  auto sampled = sample_target(models.stage1, scene_poses.people, seed);
  out.heatmap = sampled.heatmap01;
  if (sampled.all_occluded) {
    throw PipelineFailure(1, "sampled pose decodes with every joint occluded");
  }
  if (sampled.visible_joints < 2) {
    throw PipelineFailure(
        1, "sampled pose decodes with fewer than two visible keypoints");
  }
  out.target_raw = rescale_to_frame(sampled.skeleton, scene_poses.frame);

  // Facial refinement requires a nose to anchor the normalized frame.
  const bool refine_face = out.target_raw.at(Joint::kNose).visible;
  out.target =
      refine_face ? refine_skeleton(models.refiner, out.target_raw)
                  : out.target_raw;

  try {
    out.box = derive_box(out.target, 0.2, res);
  } catch (const InsufficientPose& e) {
    throw PipelineFailure(1, e.what());
  }
  out.canvas_pose = skeleton_to_canvas(out.target, out.box, res);

  // Render the reference person in the sampled pose.
  Image ref = ref_image;
  if (ref.height() != res || ref.width() != res) {
    ref = resize_bilinear(ref, res, res);
  }
  auto ref_sk = rescale_to_frame(ref_pose, Frame{res, res});
  auto poses = make_pose_pair(ref_sk, out.canvas_pose, res, scaled_sigma(res));
  auto rendered = gr_forward(models.stage3, to_pm1_range(ref.tensor), poses);
  out.person = Image(to_unit_range(rendered));

  out.scene = composite(scene_image, out.person, out.box);

  const PixelRect r = paste_rect(out.box, scene_poses.frame);
  out.provenance =
      nlohmann::json{
          {"seed", seed},
          {"canvas", res},
          {"sampled_visible", sampled.visible_joints},
          {"face_refined", refine_face},
          {"box",
           {{"x", out.box.x},
            {"y", out.box.y},
            {"w", out.box.w},
            {"h", out.box.h},
            {"scale", out.box.scale}}},
          {"paste", {{"x", r.x0}, {"y", r.y0}, {"w", r.x1 - r.x0},
                     {"h", r.y1 - r.y0}}},
          {"overlap_px", paste_overlap(scene_poses, r)},
      }
          .dump(2);
  return out;
}

}  // namespace scenegen
