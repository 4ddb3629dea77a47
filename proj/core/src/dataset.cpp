#include "scenegen/dataset.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"
#include "scenegen/errors.hpp"
#include "scenegen/image.hpp"
#include "scenegen/rng.hpp"

namespace scenegen {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string entry_path(const json& entry, const char* key, size_t index) {
  if (!entry.contains(key) || !entry[key].is_string()) {
    throw LoadError("manifest entry " + std::to_string(index) +
                    ": missing path field \"" + key + "\"");
  }
  return entry[key].get<std::string>();
}

std::string numbered(const char* stem, int i, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d%s", stem, i, suffix);
  return buf;
}

}  // namespace

std::string to_string(DatasetKind kind) {
  return kind == DatasetKind::kSceneMultiPerson ? "scene_multi_person"
                                                : "pair_source_target";
}

std::string to_string(DatasetSplit split) {
  return split == DatasetSplit::kTrain ? "train" : "test";
}

DatasetKind dataset_kind_from_string(const std::string& name) {
  if (name == "scene_multi_person") return DatasetKind::kSceneMultiPerson;
  if (name == "pair_source_target") return DatasetKind::kPairSourceTarget;
  throw LoadError("unknown dataset kind: " + name);
}

DatasetSplit dataset_split_from_string(const std::string& name) {
  if (name == "train") return DatasetSplit::kTrain;
  if (name == "test") return DatasetSplit::kTest;
  throw LoadError("unknown dataset split: " + name);
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw LoadError("cannot read manifest: " + path.string());
  }
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw LoadError("malformed manifest JSON (" + path.string() +
                    "): " + e.what());
  }
  if (!doc.is_object() || !doc.contains("kind") || !doc.contains("split") ||
      !doc.contains("entries") || !doc["entries"].is_array()) {
    throw LoadError("manifest needs kind, split and an entries array: " +
                    path.string());
  }

  DatasetManifest m;
  m.kind = dataset_kind_from_string(doc["kind"].get<std::string>());
  m.split = dataset_split_from_string(doc["split"].get<std::string>());
  m.root = doc.value("root", std::string("."));

  fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  fs::path root = m.root.is_absolute() ? m.root : base / m.root;

  const auto& entries = doc["entries"];
  if (entries.empty()) {
    throw LoadError("manifest has no entries: " + path.string());
  }

  std::vector<std::string> missing;
  auto resolve = [&](const std::string& rel) {
    fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : root / rel;
    if (!fs::exists(p)) {
      missing.push_back(p.string());
    }
    return p;
  };

  for (size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    if (m.kind == DatasetKind::kSceneMultiPerson) {
      SceneEntry se;
      se.image = resolve(entry_path(e, "image", i));
      se.keypoints = resolve(entry_path(e, "keypoints", i));
      if (e.contains("target") && !e["target"].is_null()) {
        if (!e["target"].is_number_integer() || e["target"].get<int>() < 0) {
          throw LoadError("manifest entry " + std::to_string(i) +
                          ": target must be a non-negative index");
        }
        se.target = e["target"].get<int>();
      }
      m.scenes.push_back(std::move(se));
    } else {
      PairEntry pe;
      pe.image_a = resolve(entry_path(e, "image_a", i));
      pe.keypoints_a = resolve(entry_path(e, "keypoints_a", i));
      pe.image_b = resolve(entry_path(e, "image_b", i));
      pe.keypoints_b = resolve(entry_path(e, "keypoints_b", i));
      m.pairs.push_back(std::move(pe));
    }
  }

  if (!missing.empty()) {
    std::ostringstream msg;
    msg << missing.size() << " referenced file(s) missing:";
    for (const auto& p : missing) {
      msg << "\n  " << p;
    }
    throw LoadError(msg.str());
  }
  return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  json entries = json::array();
  if (manifest.kind == DatasetKind::kSceneMultiPerson) {
    for (const auto& e : manifest.scenes) {
      json entry{{"image", e.image.string()},
                 {"keypoints", e.keypoints.string()}};
      if (e.target) {
        entry["target"] = *e.target;
      }
      entries.push_back(std::move(entry));
    }
  } else {
    for (const auto& e : manifest.pairs) {
      entries.push_back(json{{"image_a", e.image_a.string()},
                             {"keypoints_a", e.keypoints_a.string()},
                             {"image_b", e.image_b.string()},
                             {"keypoints_b", e.keypoints_b.string()}});
    }
  }
  json doc{{"root", manifest.root.string()},
           {"split", to_string(manifest.split)},
           {"kind", to_string(manifest.kind)},
           {"entries", std::move(entries)}};
  std::ofstream out(path);
  if (!out) {
    throw LoadError("cannot write manifest: " + path.string());
  }
  out << doc.dump(2) << "\n";
}

std::vector<SceneSample> load_scene_samples(const DatasetManifest& manifest,
                                            uint64_t seed) {
  if (manifest.kind != DatasetKind::kSceneMultiPerson) {
    throw InvalidArgument("scene samples need a scene_multi_person manifest");
  }
  auto gen = make_generator(seed, "data");
  std::vector<SceneSample> samples;
  samples.reserve(manifest.scenes.size());
  for (const auto& entry : manifest.scenes) {
    auto scene = load_scene_annotation(entry.keypoints);
    const int n = static_cast<int>(scene.people.size());
    if (n == 0) {
      throw LoadError("annotation has no people: " + entry.keypoints.string());
    }
    int target = entry.target
                     ? *entry.target
                     : static_cast<int>(torch::randint(
                                            0, n, {1}, gen,
                                            torch::TensorOptions().dtype(
                                                torch::kInt64))
                                            .item<int64_t>());
    if (target >= n) {
      throw LoadError("target index " + std::to_string(target) +
                      " outside a scene of " + std::to_string(n) +
                      " people: " + entry.keypoints.string());
    }
    SceneSample sample;
    sample.target = scene.people[target];
    for (int i = 0; i < n; ++i) {
      if (i != target) {
        sample.context.push_back(scene.people[i]);
      }
    }
    samples.push_back(std::move(sample));
  }
  return samples;
}

std::vector<TransferSample> load_pair_samples(const DatasetManifest& manifest,
                                              int res) {
  if (manifest.kind != DatasetKind::kPairSourceTarget) {
    throw InvalidArgument("pair samples need a pair_source_target manifest");
  }
  if (res < 32) {
    throw InvalidArgument("pair canvas below 32 px");
  }
  auto one = [&](const fs::path& image_path, const fs::path& kp_path,
                 torch::Tensor& image, PoseSkeleton& pose) {
    auto img = load_png(image_path);
    if (img.height() != res || img.width() != res) {
      img = resize_bilinear(img, res, res);
    }
    image = to_pm1_range(img.tensor);
    auto scene = load_scene_annotation(kp_path);
    if (scene.people.empty()) {
      throw LoadError("annotation has no people: " + kp_path.string());
    }
    pose = rescale_to_frame(scene.people.front(), Frame{res, res});
  };

  std::vector<TransferSample> samples;
  samples.reserve(manifest.pairs.size());
  for (const auto& entry : manifest.pairs) {
    TransferSample s;
    one(entry.image_a, entry.keypoints_a, s.image_a, s.pose_a);
    one(entry.image_b, entry.keypoints_b, s.image_b, s.pose_b);
    samples.push_back(std::move(s));
  }
  return samples;
}

DatasetManifest write_scene_dataset(const std::vector<SceneRecord>& records,
                                    const fs::path& dir, DatasetSplit split) {
  if (records.empty()) {
    throw InvalidArgument("nothing to write: no scene records");
  }
  fs::create_directories(dir);
  DatasetManifest m;
  m.kind = DatasetKind::kSceneMultiPerson;
  m.split = split;
  for (size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    auto image_name = numbered("scene", static_cast<int>(i), ".png");
    auto kp_name = numbered("scene", static_cast<int>(i), ".json");
    save_png(dir / image_name, render_scene(rec.scene));
    save_scene_annotation(dir / kp_name, rec.scene);
    m.scenes.push_back({image_name, kp_name, rec.target_index});
  }
  save_manifest(dir / "manifest.json", m);
  return load_manifest(dir / "manifest.json");
}

DatasetManifest write_pair_dataset(const std::vector<TransferSample>& samples,
                                   const fs::path& dir, DatasetSplit split) {
  if (samples.empty()) {
    throw InvalidArgument("nothing to write: no pair samples");
  }
  fs::create_directories(dir);
  DatasetManifest m;
  m.kind = DatasetKind::kPairSourceTarget;
  m.split = split;
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    PairEntry e{numbered("pair", static_cast<int>(i), "_a.png"),
                numbered("pair", static_cast<int>(i), "_a.json"),
                numbered("pair", static_cast<int>(i), "_b.png"),
                numbered("pair", static_cast<int>(i), "_b.json")};
    save_png(dir / e.image_a, Image(to_unit_range(s.image_a)));
    save_png(dir / e.image_b, Image(to_unit_range(s.image_b)));
    save_scene_annotation(dir / e.keypoints_a,
                          SceneAnnotation{s.pose_a.frame, {s.pose_a}});
    save_scene_annotation(dir / e.keypoints_b,
                          SceneAnnotation{s.pose_b.frame, {s.pose_b}});
    m.pairs.push_back(std::move(e));
  }
  save_manifest(dir / "manifest.json", m);
  return load_manifest(dir / "manifest.json");
}

}  // namespace scenegen
