#include "scenegen/pose.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "scenegen/errors.hpp"

namespace scenegen {

namespace {

constexpr std::array<std::string_view, kNumJoints> kJointNames = {
    "nose",    "neck",    "r_shoulder", "l_shoulder", "r_elbow", "l_elbow",
    "r_wrist", "l_wrist", "r_hip",      "l_hip",      "r_knee",  "l_knee",
    "r_ankle", "l_ankle", "r_eye",      "l_eye",      "r_ear",   "l_ear"};

}  // namespace

std::string_view joint_name(Joint j) {
  return kJointNames[static_cast<int>(j)];
}

std::optional<Joint> joint_from_name(std::string_view name) {
  for (int i = 0; i < kNumJoints; ++i) {
    if (kJointNames[i] == name) return Joint(i);
  }
  return std::nullopt;
}

int PoseSkeleton::visible_count() const {
  int n = 0;
  for (const auto& k : joints) n += k.visible ? 1 : 0;
  return n;
}

bool PoseSkeleton::in_frame() const {
  for (const auto& k : joints) {
    if (!k.visible) continue;
    if (k.x < 0.0 || k.x >= frame.width || k.y < 0.0 || k.y >= frame.height)
      return false;
  }
  return true;
}

PoseSkeleton rescale_to_frame(const PoseSkeleton& skeleton, Frame target) {
  if (target.width <= 0 || target.height <= 0)
    throw InvalidArgument("rescale_to_frame: non-positive target frame");
  if (skeleton.frame.width <= 0 || skeleton.frame.height <= 0)
    throw InvalidArgument("rescale_to_frame: skeleton has no declared frame");
  const double sx = double(target.width) / skeleton.frame.width;
  const double sy = double(target.height) / skeleton.frame.height;
  PoseSkeleton out = skeleton;
  out.frame = target;
  for (auto& k : out.joints) {
    if (!k.visible) continue;
    k.x *= sx;
    k.y *= sy;
  }
  return out;
}

SceneAnnotation parse_scene_annotation(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("keypoint JSON parse failure: ") + e.what());
  }

  SceneAnnotation scene;
  try {
    const auto& frame = doc.at("frame");
    scene.frame.width = frame.at(0).get<int>();
    scene.frame.height = frame.at(1).get<int>();
    if (scene.frame.width <= 0 || scene.frame.height <= 0)
      throw LoadError("keypoint JSON: non-positive frame");

    for (const auto& person : doc.at("people")) {
      PoseSkeleton s;
      s.frame = scene.frame;
      const auto& joints = person.at("joints");
      for (auto it = joints.begin(); it != joints.end(); ++it) {
        auto j = joint_from_name(it.key());
        if (!j) throw LoadError("keypoint JSON: unknown joint '" + it.key() + "'");
        if (it.value().is_null()) continue;
        Keypoint kp;
        kp.x = it.value().at(0).get<double>();
        kp.y = it.value().at(1).get<double>();
        kp.visible = true;
        s.at(*j) = kp;
      }
      if (!s.in_frame())
        throw LoadError("keypoint JSON: visible keypoint outside frame");
      scene.people.push_back(s);
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("keypoint JSON schema violation: ") + e.what());
  }
  return scene;
}

std::string scene_annotation_to_json(const SceneAnnotation& scene) {
  nlohmann::json doc;
  doc["frame"] = {scene.frame.width, scene.frame.height};
  doc["people"] = nlohmann::json::array();
  for (const auto& person : scene.people) {
    nlohmann::json joints = nlohmann::json::object();
    for (int i = 0; i < kNumJoints; ++i) {
      const auto& kp = person.joints[i];
      const std::string name{joint_name(Joint(i))};
      if (kp.visible) {
        joints[name] = {kp.x, kp.y};
      } else {
        joints[name] = nullptr;
      }
    }
    doc["people"].push_back({{"joints", joints}});
  }
  return doc.dump(2);
}

SceneAnnotation load_scene_annotation(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open keypoint JSON: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene_annotation(ss.str());
}

void save_scene_annotation(const std::filesystem::path& path,
                           const SceneAnnotation& scene) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write keypoint JSON: " + path.string());
  out << scene_annotation_to_json(scene) << "\n";
}

}  // namespace scenegen
