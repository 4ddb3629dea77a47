#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace scenegen {

// 18-joint body convention. Channel order of every heatmap tensor
// follows this enum.
enum class Joint : int {
  kNose = 0,
  kNeck,
  kRShoulder,
  kLShoulder,
  kRElbow,
  kLElbow,
  kRWrist,
  kLWrist,
  kRHip,
  kLHip,
  kRKnee,
  kLKnee,
  kRAnkle,
  kLAnkle,
  kREye,
  kLEye,
  kREar,
  kLEar,
};

inline constexpr int kNumJoints = 18;

// The five facial joints, in the order used by the refinement vector.
inline constexpr std::array<Joint, 5> kFacialJoints = {
    Joint::kNose, Joint::kREye, Joint::kLEye, Joint::kREar, Joint::kLEar};

std::string_view joint_name(Joint j);
std::optional<Joint> joint_from_name(std::string_view name);

struct Keypoint {
  double x = 0.0;
  double y = 0.0;
  bool visible = false;
};

struct Frame {
  int width = 0;
  int height = 0;
  bool operator==(const Frame&) const = default;
};

// Full 18-keypoint skeleton in a declared pixel frame. Origin top-left,
// x rightward, y downward. Entry i belongs to Joint(i).
struct PoseSkeleton {
  std::array<Keypoint, kNumJoints> joints{};
  Frame frame{};

  Keypoint& at(Joint j) { return joints[static_cast<int>(j)]; }
  const Keypoint& at(Joint j) const { return joints[static_cast<int>(j)]; }

  int visible_count() const;

  // True when every visible keypoint lies inside the frame.
  bool in_frame() const;
};

// Linear per-axis rescale of all keypoint coordinates into a new frame.
PoseSkeleton rescale_to_frame(const PoseSkeleton& skeleton, Frame target);

// One keypoint annotation file:
//   {"frame": [W, H], "people": [{"joints": {"nose": [x, y] | null, ...}}]}
// null (or a missing joint key) marks the joint occluded.
struct SceneAnnotation {
  Frame frame;
  std::vector<PoseSkeleton> people;
};

SceneAnnotation parse_scene_annotation(const std::string& json_text);
std::string scene_annotation_to_json(const SceneAnnotation& scene);

SceneAnnotation load_scene_annotation(const std::filesystem::path& path);
void save_scene_annotation(const std::filesystem::path& path,
                           const SceneAnnotation& scene);

}  // namespace scenegen
