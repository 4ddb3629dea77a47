#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scenegen/image.hpp"
#include "scenegen/pose.hpp"
#include "scenegen/pose_transfer.hpp"
#include "scenegen/pose_wgan.hpp"

namespace scenegen {

// Spatial rule the held-out target figure obeys relative to the context
// figures of its scene.
enum class SceneRule {
  kRightOf,    // target nose strictly right of every context nose
  kBetween,    // target nose x strictly inside [min, max] of context noses
  kScaledRow,  // figures share a ground line; height tapers with x
};

std::string to_string(SceneRule rule);
SceneRule scene_rule_from_string(const std::string& name);

struct SceneRecord {
  SceneAnnotation scene;    // frame plus every figure, target included
  int target_index = 0;     // which person the rule constrains
  std::string rule;         // name, as in to_string(SceneRule)
  std::string rule_params;  // JSON: the sampled parameters the rule used
};

// Procedural stick-figure scenes obeying `rule`. Identical (n, rule, seed)
// give an identical dataset. n < 1 -> InvalidArgument.
std::vector<SceneRecord> synth_scene_dataset(int n, SceneRule rule,
                                             uint64_t seed);

// Context/target split of a record (context = everyone but the target).
// Out-of-range target index -> InvalidArgument.
SceneSample scene_sample_of(const SceneRecord& record);

// Rasterize the annotated figures over a graded backdrop at the
// annotation's own frame size.
Image render_scene(const SceneAnnotation& scene);

// Source/target pose pairs: one figure identity (proportions, face shape,
// palette) rendered on a res-by-res canvas in two independently drawn
// poses. Feeds the renderer trainer. res < 32 or n < 1 -> InvalidArgument.
std::vector<TransferSample> synth_pair_dataset(int n, uint64_t seed,
                                               int res = kRenderRes);

}  // namespace scenegen
