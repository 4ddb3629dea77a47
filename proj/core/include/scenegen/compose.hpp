#pragma once

#include <cstdint>
#include <string>

#include "scenegen/face_refiner.hpp"
#include "scenegen/image.hpp"
#include "scenegen/pose.hpp"
#include "scenegen/pose_transfer.hpp"
#include "scenegen/pose_wgan.hpp"

namespace scenegen {

// Where the generated person lands in the scene, and how big the person
// canvas is relative to it.
struct PlacementBox {
  double x = 0.0;  // scene pixels, top-left corner
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  double scale = 1.0;  // canvas -> scene factor (long box side / canvas)
};

// Tight bbox over visible keypoints, expanded by `margin` of the
// respective axis span per side, clipped to the skeleton's frame. Fewer
// than two visible keypoints or zero extent on either axis ->
// InsufficientPose. `canvas` only fixes the reported scale factor.
PlacementBox derive_box(const PoseSkeleton& skeleton, double margin = 0.2,
                        int canvas = kRenderRes);

// Aspect-preserving map of the box interior onto a canvas-sized square
// frame: one uniform scale, short axis centered with symmetric padding.
PoseSkeleton skeleton_to_canvas(const PoseSkeleton& skeleton,
                                const PlacementBox& box,
                                int canvas = kRenderRes);

// Inverse of skeleton_to_canvas; `scene` declares the output frame.
PoseSkeleton canvas_to_scene(const PoseSkeleton& canvas_skeleton,
                             const PlacementBox& box, Frame scene);

// Bilinear-resize `person` to the box (rounded to whole pixels) and paste
// the rectangle into a copy of `scene`; parts beyond the frame are
// cropped. Non-positive box -> InvalidArgument; box entirely outside the
// frame -> InvalidArgument. Pixels outside the pasted rectangle are
// bit-identical to the input.
Image composite(const Image& scene, const Image& person,
                const PlacementBox& box);

// The three trained stages, ready for inference.
struct PipelineModels {
  StageOneModel stage1;
  FaceRefiner refiner;
  StageThreeModel stage3;
};

struct GenerationResult {
  Image scene;                // composited output
  Image person;               // renderer output on its canvas
  torch::Tensor heatmap;      // sampled target heatmap, [18,64,64] in [0,1]
  PoseSkeleton target_raw;    // sampled target pose, scene frame
  PoseSkeleton target;        // after facial refinement (= raw when the
                              // nose came out occluded)
  PoseSkeleton canvas_pose;   // target mapped to the person canvas
  PlacementBox box;
  std::string provenance;     // JSON record of the run
};

// Full chain: sample a target pose from the scene context, refine the
// face, derive the placement, render the reference person in the new
// pose, composite. Deterministic in (models, inputs, seed). A sample with
// every joint occluded or fewer than two visible keypoints ->
// PipelineFailure tagged stage 1.
GenerationResult generate_scene(const Image& scene_image,
                                const SceneAnnotation& scene_poses,
                                const Image& ref_image,
                                const PoseSkeleton& ref_pose,
                                PipelineModels& models, uint64_t seed);

}  // namespace scenegen
