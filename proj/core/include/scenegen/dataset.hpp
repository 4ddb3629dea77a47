#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scenegen/pose_transfer.hpp"
#include "scenegen/pose_wgan.hpp"
#include "scenegen/synth.hpp"

namespace scenegen {

enum class DatasetKind { kSceneMultiPerson, kPairSourceTarget };
enum class DatasetSplit { kTrain, kTest };

std::string to_string(DatasetKind kind);
std::string to_string(DatasetSplit split);
DatasetKind dataset_kind_from_string(const std::string& name);
DatasetSplit dataset_split_from_string(const std::string& name);

// One multi-person scene: an image, its keypoint annotation, and
// optionally which person is the held-out target (absent = trainer's
// choice).
struct SceneEntry {
  std::filesystem::path image;
  std::filesystem::path keypoints;
  std::optional<int> target;
};

// One source/target pair: two images of the same person with their
// keypoint annotations.
struct PairEntry {
  std::filesystem::path image_a;
  std::filesystem::path keypoints_a;
  std::filesystem::path image_b;
  std::filesystem::path keypoints_b;
};

struct DatasetManifest {
  std::filesystem::path root = ".";
  DatasetSplit split = DatasetSplit::kTrain;
  DatasetKind kind = DatasetKind::kSceneMultiPerson;
  std::vector<SceneEntry> scenes;  // kind == scene_multi_person
  std::vector<PairEntry> pairs;    // kind == pair_source_target
};

// Reads and validates a manifest. Entry paths in the result are resolved
// (root applied, root itself resolved against the manifest's directory).
// Malformed JSON, an empty entry list, or any referenced file missing ->
// LoadError; the message enumerates every missing file at once.
DatasetManifest load_manifest(const std::filesystem::path& path);

void save_manifest(const std::filesystem::path& path,
                   const DatasetManifest& manifest);

// Reads every scene entry's annotation into context/target splits. An
// entry without an explicit target gets a uniformly drawn person
// (substream "data" of `seed`). Annotations with no people or an
// out-of-range target index -> LoadError.
std::vector<SceneSample> load_scene_samples(const DatasetManifest& manifest,
                                            uint64_t seed);

// Reads every pair entry; images are resized to res x res ([-1,1] range)
// and skeletons rescaled to match. The first person of each annotation is
// the subject; empty annotations -> LoadError.
std::vector<TransferSample> load_pair_samples(const DatasetManifest& manifest,
                                              int res);

// Materialize synthetic records under `dir` (PNG + keypoint JSON per
// entry, manifest at dir/manifest.json) and return the loaded manifest.
DatasetManifest write_scene_dataset(const std::vector<SceneRecord>& records,
                                    const std::filesystem::path& dir,
                                    DatasetSplit split = DatasetSplit::kTrain);
DatasetManifest write_pair_dataset(const std::vector<TransferSample>& samples,
                                   const std::filesystem::path& dir,
                                   DatasetSplit split = DatasetSplit::kTrain);

}  // namespace scenegen
