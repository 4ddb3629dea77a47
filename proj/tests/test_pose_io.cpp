#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "test_support.hpp"

#include <cstdio>
#include <filesystem>

#include "scenegen/errors.hpp"
#include "scenegen/pose.hpp"

using namespace scenegen;

TEST_CASE("joint names map both ways") {
  for (int i = 0; i < kNumJoints; ++i) {
    auto name = joint_name(Joint(i));
    auto back = joint_from_name(name);
    REQUIRE(back.has_value());
    CHECK(int(*back) == i);
  }
  CHECK(!joint_from_name("left_pinky").has_value());
  CHECK(joint_name(Joint::kNose) == "nose");
  CHECK(joint_name(Joint::kLEar) == "l_ear");
}

TEST_CASE("keypoint JSON parses nulls and missing joints as occluded") {
  const std::string text = R"({
    "frame": [256, 192],
    "people": [
      {"joints": {"nose": [100.5, 50.25], "neck": null, "r_eye": [110, 40]}},
      {"joints": {}}
    ]
  })";
  auto scene = parse_scene_annotation(text);
  CHECK(scene.frame.width == 256);
  CHECK(scene.frame.height == 192);
  REQUIRE(scene.people.size() == 2);

  const auto& p0 = scene.people[0];
  CHECK(p0.at(Joint::kNose).visible);
  CHECK(p0.at(Joint::kNose).x == doctest::Approx(100.5));
  CHECK(p0.at(Joint::kNose).y == doctest::Approx(50.25));
  CHECK(!p0.at(Joint::kNeck).visible);
  CHECK(p0.at(Joint::kREye).visible);
  CHECK(p0.visible_count() == 2);
  CHECK(p0.frame == scene.frame);
  CHECK(scene.people[1].visible_count() == 0);
}

TEST_CASE("serialization roundtrips") {
  SceneAnnotation scene;
  scene.frame = {640, 480};
  PoseSkeleton s;
  s.frame = scene.frame;
  s.at(Joint::kNose) = {320.5, 120.25, true};
  s.at(Joint::kRAnkle) = {100.0, 470.0, true};
  scene.people.push_back(s);

  auto text = scene_annotation_to_json(scene);
  auto back = parse_scene_annotation(text);
  CHECK(back.frame == scene.frame);
  REQUIRE(back.people.size() == 1);
  for (int j = 0; j < kNumJoints; ++j) {
    CHECK(back.people[0].joints[j].visible == s.joints[j].visible);
    if (s.joints[j].visible) {
      CHECK(back.people[0].joints[j].x == s.joints[j].x);
      CHECK(back.people[0].joints[j].y == s.joints[j].y);
    }
  }
}

TEST_CASE("malformed annotations are rejected") {
  CHECK_THROWS_AS(parse_scene_annotation("not json"), LoadError);
  CHECK_THROWS_AS(parse_scene_annotation("{}"), LoadError);
  CHECK_THROWS_AS(
      parse_scene_annotation(R"({"frame":[0,10],"people":[]})"), LoadError);
  CHECK_THROWS_AS(
      parse_scene_annotation(
          R"({"frame":[64,64],"people":[{"joints":{"third_eye":[1,1]}}]})"),
      LoadError);
  // visible keypoint outside the declared frame
  CHECK_THROWS_AS(
      parse_scene_annotation(
          R"({"frame":[64,64],"people":[{"joints":{"nose":[64.0,1]}}]})"),
      LoadError);
  CHECK_THROWS_AS(
      parse_scene_annotation(
          R"({"frame":[64,64],"people":[{"joints":{"nose":[-0.1,1]}}]})"),
      LoadError);
  // coordinates must be a two-element array
  CHECK_THROWS_AS(
      parse_scene_annotation(
          R"({"frame":[64,64],"people":[{"joints":{"nose":[1]}}]})"),
      LoadError);
}

TEST_CASE("file save/load roundtrip") {
  SceneAnnotation scene;
  scene.frame = {64, 64};
  PoseSkeleton s;
  s.frame = scene.frame;
  s.at(Joint::kNeck) = {32.0, 16.0, true};
  scene.people.push_back(s);

  auto path = std::filesystem::temp_directory_path() / "scenegen_pose_io.json";
  save_scene_annotation(path, scene);
  auto back = load_scene_annotation(path);
  CHECK(back.frame == scene.frame);
  REQUIRE(back.people.size() == 1);
  CHECK(back.people[0].at(Joint::kNeck).x == 32.0);
  std::filesystem::remove(path);

  CHECK_THROWS_AS(load_scene_annotation("/nonexistent/nope.json"), LoadError);
}

TEST_CASE("rescale maps coordinates linearly per axis") {
  PoseSkeleton s;
  s.frame = {100, 200};
  s.at(Joint::kNose) = {50.0, 100.0, true};
  s.at(Joint::kNeck) = {0.0, 0.0, true};

  auto out = rescale_to_frame(s, {200, 100});
  CHECK(out.frame == (Frame{200, 100}));
  CHECK(out.at(Joint::kNose).x == doctest::Approx(100.0));
  CHECK(out.at(Joint::kNose).y == doctest::Approx(50.0));
  CHECK(out.at(Joint::kNeck).x == 0.0);
  CHECK(!out.at(Joint::kRWrist).visible);  // occluded joints stay put

  CHECK_THROWS_AS(rescale_to_frame(s, {0, 100}), InvalidArgument);
  PoseSkeleton no_frame;
  CHECK_THROWS_AS(rescale_to_frame(no_frame, {10, 10}), InvalidArgument);
}

TEST_CASE("in_frame uses half-open bounds") {
  PoseSkeleton s;
  s.frame = {64, 64};
  s.at(Joint::kNose) = {0.0, 0.0, true};
  CHECK(s.in_frame());
  s.at(Joint::kNose) = {63.999, 63.999, true};
  CHECK(s.in_frame());
  s.at(Joint::kNose) = {64.0, 10.0, true};
  CHECK(!s.in_frame());
  s.at(Joint::kNose) = {10.0, -0.001, true};
  CHECK(!s.in_frame());
}
