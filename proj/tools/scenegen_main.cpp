// Umbrella command line: dataset synthesis, the three training stages,
// standalone pose transfer, full scene generation, and evaluation.

#include <torch/torch.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "scenegen/compose.hpp"
#include "scenegen/dataset.hpp"
#include "scenegen/errors.hpp"
#include "scenegen/face_refiner.hpp"
#include "scenegen/image.hpp"
#include "scenegen/metrics.hpp"
#include "scenegen/perceptual.hpp"
#include "scenegen/pose.hpp"
#include "scenegen/pose_transfer.hpp"
#include "scenegen/pose_wgan.hpp"
#include "scenegen/run_config.hpp"
#include "scenegen/synth.hpp"

namespace fs = std::filesystem;
using namespace scenegen;

namespace {

// --data accepts either a manifest file or a dataset directory.
fs::path manifest_path(const fs::path& data) {
  if (fs::is_directory(data)) return data / "manifest.json";
  return data;
}

std::string config_snapshot(const RunConfig& cfg) {
  return nlohmann::json{{"stage", cfg.stage}, {"steps", cfg.steps},
                        {"batch", cfg.batch}, {"lr", cfg.lr},
                        {"beta1", cfg.beta1}, {"beta2", cfg.beta2},
                        {"seed", cfg.seed},   {"tiny", cfg.tiny}}
      .dump();
}

// Shared options of the train-stage* subcommands. Option pointers let the
// resolver distinguish "flag given" from "default value".
struct TrainCli {
  std::string data;
  std::string out;
  std::string config;
  int steps = 0;
  int batch = 0;
  double lr = 0.0;
  double beta1 = 0.0;
  double beta2 = 0.0;
  double noise = kDefaultPerturbMagnitude;
  std::uint64_t seed = 0;
  bool tiny = false;

  CLI::Option* o_data = nullptr;
  CLI::Option* o_out = nullptr;
  CLI::Option* o_steps = nullptr;
  CLI::Option* o_batch = nullptr;
  CLI::Option* o_lr = nullptr;
  CLI::Option* o_beta1 = nullptr;
  CLI::Option* o_beta2 = nullptr;
  CLI::Option* o_seed = nullptr;
  CLI::Option* o_tiny = nullptr;
};

void add_train_options(CLI::App* sub, TrainCli& t) {
  t.o_data = sub->add_option("--data", t.data,
                             "dataset manifest (or directory holding one)");
  t.o_out = sub->add_option("--out", t.out, "checkpoint file to write");
  sub->add_option("--config", t.config,
                  "JSON config file; command-line flags win over its keys");
  t.o_steps = sub->add_option("--steps", t.steps, "training steps");
  t.o_batch = sub->add_option("--batch", t.batch, "batch size");
  t.o_lr = sub->add_option("--lr", t.lr, "learning rate");
  t.o_beta1 = sub->add_option("--beta1", t.beta1, "Adam beta1");
  t.o_beta2 = sub->add_option("--beta2", t.beta2, "Adam beta2");
  t.o_seed = sub->add_option("--seed", t.seed, "run seed");
}

// Stage defaults < config file < command line, then require data/out.
RunConfig resolve_train(int stage, const TrainCli& t) {
  RunOverrides file;
  if (!t.config.empty()) file = load_run_overrides(t.config);
  RunOverrides cli;
  if (t.o_steps->count() > 0) cli.steps = t.steps;
  if (t.o_batch->count() > 0) cli.batch = t.batch;
  if (t.o_lr->count() > 0) cli.lr = t.lr;
  if (t.o_beta1->count() > 0) cli.beta1 = t.beta1;
  if (t.o_beta2->count() > 0) cli.beta2 = t.beta2;
  if (t.o_seed->count() > 0) cli.seed = t.seed;
  if (t.o_tiny != nullptr && t.o_tiny->count() > 0) cli.tiny = t.tiny;
  if (t.o_data->count() > 0) cli.data = t.data;
  if (t.o_out->count() > 0) cli.out = t.out;

  RunConfig cfg = resolve_run_config(stage, file, cli);
  if (cfg.data.empty()) {
    throw InvalidArgument(
        "no dataset given: pass --data or a config file with \"data\"");
  }
  if (cfg.out.empty()) {
    throw InvalidArgument(
        "no checkpoint path given: pass --out or a config file with \"out\"");
  }
  return cfg;
}

// Perceptual backbone for stage 3. With SCENE_SYNTH_CACHE set the seeded
// trunk is materialized there once and reloaded on later runs; otherwise
// the trainer derives it from the seed in memory.
std::shared_ptr<FeatureExtractor> backbone_for(std::uint64_t seed) {
  const char* cache = std::getenv("SCENE_SYNTH_CACHE");
  if (cache == nullptr || *cache == '\0') return nullptr;
  fs::path dir(cache);
  fs::create_directories(dir);
  fs::path file = dir / ("vgg_seed_" + std::to_string(seed) + ".tensors");
  if (fs::exists(file)) return VggFeatures::from_file(file);
  auto vgg = VggFeatures::seeded(seed);
  vgg->save(file);
  return vgg;
}

PoseSkeleton first_person(const fs::path& path) {
  auto scene = load_scene_annotation(path);
  if (scene.people.empty()) {
    throw LoadError("no people in " + path.string());
  }
  return scene.people.front();
}

void run_train_stage1(const TrainCli& t) {
  RunConfig cfg = resolve_train(1, t);
  auto manifest = load_manifest(manifest_path(cfg.data));
  auto samples = load_scene_samples(manifest, cfg.seed);

  Stage1Config c;
  c.steps = cfg.steps;
  c.batch = cfg.batch;
  c.lr = cfg.lr;
  c.beta1 = cfg.beta1;
  c.beta2 = cfg.beta2;
  c.seed = cfg.seed;

  StageOneModel model;
  model.init_params(cfg.seed);
  auto result = train_stage1(model, samples, c);

  save_stage1(cfg.out, model, c.steps, config_snapshot(cfg));
  const auto& last = result.log.back();
  std::cout << "stage 1: " << result.critic_updates << " critic / "
            << result.generator_updates << " generator updates on "
            << samples.size() << " scenes\n"
            << "final wasserstein " << last.wasserstein << ", critic loss "
            << last.critic_loss << "\n"
            << "saved " << cfg.out.string() << "\n";
}

void run_train_stage2(const TrainCli& t) {
  RunConfig cfg = resolve_train(2, t);
  auto manifest = load_manifest(manifest_path(cfg.data));
  if (manifest.kind != DatasetKind::kSceneMultiPerson) {
    throw InvalidArgument("face training needs a scene_multi_person dataset");
  }

  std::vector<FacialVector> faces;
  int skipped = 0;
  for (const auto& entry : manifest.scenes) {
    auto scene = load_scene_annotation(entry.keypoints);
    for (const auto& person : scene.people) {
      try {
        faces.push_back(normalize_facial(person).first);
      } catch (const CannotNormalize&) {
        ++skipped;  // occluded nose: nothing to anchor the face frame
      }
    }
  }
  if (faces.empty()) {
    throw LoadError("no usable faces in the dataset (every nose occluded)");
  }

  Stage2Config c;
  c.steps = cfg.steps;
  c.batch = cfg.batch;
  c.lr = cfg.lr;
  c.noise = t.noise;
  c.seed = cfg.seed;

  FaceRefiner net;
  init_stage2(net, cfg.seed);
  auto result = train_stage2(net, faces, c);

  save_stage2(cfg.out, net, c.steps, config_snapshot(cfg));
  std::cout << "stage 2: " << c.steps << " steps on " << faces.size()
            << " faces (" << skipped << " skipped), final loss "
            << result.loss.back() << "\n"
            << "saved " << cfg.out.string() << "\n";
}

void run_train_stage3(const TrainCli& t) {
  RunConfig cfg = resolve_train(3, t);
  const RenderArch arch = cfg.tiny ? RenderArch::tiny() : RenderArch::full();

  auto manifest = load_manifest(manifest_path(cfg.data));
  auto samples = load_pair_samples(manifest, arch.res);

  Stage3Config c;
  c.steps = cfg.steps;
  c.batch = cfg.batch;
  c.lr = cfg.lr;
  c.beta1 = cfg.beta1;
  c.beta2 = cfg.beta2;
  c.seed = cfg.seed;
  c.arch = arch;
  c.sigma = scaled_sigma(arch.res);
  c.extractor = backbone_for(cfg.seed);

  StageThreeModel model(arch);
  model.init_params(cfg.seed);
  auto result = train_stage3(model, samples, c);

  save_stage3(cfg.out, model, c.steps, config_snapshot(cfg));
  const auto& last = result.log.back();
  std::cout << "stage 3: " << c.steps << " steps on " << samples.size()
            << " pairs at " << arch.res << "px\n"
            << "final l1 " << last.l1 << ", g " << last.g_loss << ", d "
            << last.d_loss << "\n"
            << "saved " << cfg.out.string() << "\n";
}

struct TransferCli {
  std::string ckpt, source, source_pose, target_pose, out;
};

void run_transfer(const TransferCli& a) {
  auto loaded = load_stage3(a.ckpt);
  const int res = loaded.model.generator->arch.res;

  Image source = load_png(a.source);
  if (source.height() != res || source.width() != res) {
    source = resize_bilinear(source, res, res);
  }
  auto pose_a = rescale_to_frame(first_person(a.source_pose), Frame{res, res});
  auto pose_b = rescale_to_frame(first_person(a.target_pose), Frame{res, res});

  loaded.model.eval();
  torch::NoGradGuard no_grad;
  auto poses = make_pose_pair(pose_a, pose_b, res, scaled_sigma(res));
  auto rendered =
      gr_forward(loaded.model, to_pm1_range(source.tensor), poses);

  save_png(a.out, Image(to_unit_range(rendered)));
  std::cout << "wrote " << a.out << "\n";
}

struct GenerateCli {
  std::string scene, scene_poses, ref, ref_pose, ckpt_dir, out;
  std::uint64_t seed = 0;
};

// 6-wide tile sheet of the sampled heatmap channels.
Image heatmap_grid(const torch::Tensor& hm) {
  const auto n = hm.size(0);
  const auto side = hm.size(1);
  const int64_t cols = 6;
  const int64_t rows = (n + cols - 1) / cols;
  auto grid = torch::zeros({3, rows * side, cols * side});
  for (int64_t j = 0; j < n; ++j) {
    const int64_t r = j / cols;
    const int64_t c = j % cols;
    grid.slice(1, r * side, (r + 1) * side)
        .slice(2, c * side, (c + 1) * side) =
        hm[j].to(torch::kFloat32).unsqueeze(0).expand({3, side, side});
  }
  return Image(grid);
}

void run_generate(const GenerateCli& a) {
  const fs::path ckpt_dir(a.ckpt_dir);
  auto s1 = load_stage1(ckpt_dir / "stage1.ckpt");
  auto s2 = load_stage2(ckpt_dir / "stage2.ckpt");
  auto s3 = load_stage3(ckpt_dir / "stage3.ckpt");
  PipelineModels models{std::move(s1.model), std::move(s2.net),
                        std::move(s3.model)};

  Image scene = load_png(a.scene);
  auto poses = load_scene_annotation(a.scene_poses);
  Image ref = load_png(a.ref);
  auto ref_pose = first_person(a.ref_pose);

  auto result = generate_scene(scene, poses, ref, ref_pose, models, a.seed);

  const fs::path out(a.out);
  fs::create_directories(out);
  save_png(out / "composited.png", result.scene);
  save_png(out / "person.png", result.person);
  save_png(out / "heatmap.png", heatmap_grid(result.heatmap));

  Image overlay(scene.tensor.clone());
  FigureStyle context_style;
  context_style.torso = {0.7f, 0.7f, 0.7f};
  context_style.limbs = {0.55f, 0.55f, 0.6f};
  context_style.head = {0.8f, 0.8f, 0.8f};
  context_style.thickness = 1.5;
  for (const auto& person : poses.people) {
    render_figure(overlay, person, context_style);
  }
  FigureStyle target_style;
  target_style.torso = {1.0f, 0.85f, 0.1f};
  target_style.limbs = {1.0f, 0.35f, 0.1f};
  target_style.head = {1.0f, 1.0f, 1.0f};
  target_style.thickness = 2.5;
  render_figure(overlay, result.target, target_style);
  save_png(out / "overlay.png", overlay);

  std::ofstream(out / "provenance.json") << result.provenance << "\n";
  save_scene_annotation(out / "target_pose.json",
                        SceneAnnotation{poses.frame, {result.target}});

  std::cout << "wrote " << (out / "composited.png").string()
            << " (+ person, heatmap, overlay, provenance)\n";
}

struct EvaluateCli {
  std::string pred, truth, poses, out;
  double alpha = 0.5;
};

std::vector<fs::path> list_pngs(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw LoadError("not a directory: " + dir.string());
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") {
      files.push_back(e.path());
    }
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw LoadError("no .png files in " + dir.string());
  return files;
}

// {"pred": <keypoint annotation>, "truth": <keypoint annotation>} with the
// people lists pairwise aligned.
std::vector<SkeletonPair> load_pose_pairs(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("malformed JSON in " + path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("pred") || !doc.contains("truth")) {
    throw LoadError(path.string() + " needs \"pred\" and \"truth\" keys");
  }
  auto pred = parse_scene_annotation(doc["pred"].dump());
  auto truth = parse_scene_annotation(doc["truth"].dump());
  if (pred.people.size() != truth.people.size()) {
    throw LoadError("pred has " + std::to_string(pred.people.size()) +
                    " people but truth has " +
                    std::to_string(truth.people.size()));
  }
  std::vector<SkeletonPair> pairs;
  pairs.reserve(truth.people.size());
  for (size_t i = 0; i < truth.people.size(); ++i) {
    pairs.push_back({rescale_to_frame(pred.people[i], truth.frame),
                     truth.people[i]});
  }
  return pairs;
}

void run_evaluate(const EvaluateCli& a) {
  auto pred_files = list_pngs(a.pred);
  auto truth_files = list_pngs(a.truth);
  if (pred_files.size() != truth_files.size()) {
    throw LoadError("prediction dir has " +
                    std::to_string(pred_files.size()) + " images but truth " +
                    "dir has " + std::to_string(truth_files.size()));
  }
  for (size_t i = 0; i < pred_files.size(); ++i) {
    if (pred_files[i].filename() != truth_files[i].filename()) {
      throw LoadError("image sets differ: " +
                      pred_files[i].filename().string() + " vs " +
                      truth_files[i].filename().string());
    }
  }

  auto pose_pairs = load_pose_pairs(a.poses);
  if (pose_pairs.size() != pred_files.size()) {
    throw LoadError(std::to_string(pred_files.size()) + " image pairs but " +
                    std::to_string(pose_pairs.size()) + " pose pairs");
  }

  std::vector<ImagePair> image_pairs;
  image_pairs.reserve(pred_files.size());
  for (size_t i = 0; i < pred_files.size(); ++i) {
    image_pairs.push_back({to_pm1_range(load_png(pred_files[i]).tensor),
                           to_pm1_range(load_png(truth_files[i]).tensor)});
  }

  PckhOptions pckh_opts;
  pckh_opts.alpha = a.alpha;
  auto report = batch_evaluate(image_pairs, pose_pairs, {}, {}, pckh_opts);

  const std::string json = metric_report_to_json(report);
  std::ofstream(a.out) << json << "\n";
  std::cout << json << "\n";
}

struct SynthCli {
  std::string kind = "scenes";
  std::string rule = "right_of";
  std::string split = "train";
  std::string out;
  int n = 0;
  int res = kRenderRes;
  std::uint64_t seed = 0;
};

void run_synth_data(const SynthCli& a) {
  DatasetManifest manifest;
  const auto split = dataset_split_from_string(a.split);
  if (a.kind == "scenes") {
    auto records =
        synth_scene_dataset(a.n, scene_rule_from_string(a.rule), a.seed);
    manifest = write_scene_dataset(records, a.out, split);
  } else {
    auto samples = synth_pair_dataset(a.n, a.seed, a.res);
    manifest = write_pair_dataset(samples, a.out, split);
  }
  const size_t count = manifest.scenes.size() + manifest.pairs.size();
  std::cout << "wrote " << count << " " << a.kind << " to "
            << (fs::path(a.out) / "manifest.json").string() << "\n";
}

const CLI::App* deepest_parsed(const CLI::App* app) {
  while (!app->get_subcommands().empty()) {
    app = app->get_subcommands().front();
  }
  return app;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scene-aware person image generation pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "scenegen 0.1.0");

  TrainCli t1, t2, t3;
  auto* train1 = app.add_subcommand(
      "train-stage1", "train the pose-sampling WGAN on scene datasets");
  add_train_options(train1, t1);
  train1->callback([&t1] { run_train_stage1(t1); });

  auto* train2 = app.add_subcommand(
      "train-stage2", "train the facial keypoint refiner on scene datasets");
  add_train_options(train2, t2);
  train2->add_option("--noise", t2.noise,
                     "perturbation magnitude for the denoising objective");
  train2->callback([&t2] { run_train_stage2(t2); });

  auto* train3 = app.add_subcommand(
      "train-stage3", "train the pose-transfer renderer on pair datasets");
  add_train_options(train3, t3);
  t3.o_tiny = train3->add_flag("--tiny", t3.tiny,
                               "reduced 64px ladder for quick runs");
  train3->callback([&t3] { run_train_stage3(t3); });

  TransferCli tr;
  auto* transfer = app.add_subcommand(
      "transfer", "render a person from a source image in a target pose");
  transfer->add_option("--ckpt", tr.ckpt, "renderer checkpoint")->required();
  transfer->add_option("--source", tr.source, "source person image")
      ->required();
  transfer->add_option("--source-pose", tr.source_pose,
                       "keypoint JSON for the source image")
      ->required();
  transfer->add_option("--target-pose", tr.target_pose,
                       "keypoint JSON for the pose to render")
      ->required();
  transfer->add_option("--out", tr.out, "output PNG")->required();
  transfer->callback([&tr] { run_transfer(tr); });

  GenerateCli g;
  auto* generate = app.add_subcommand(
      "generate", "insert a new person into a scene (full pipeline)");
  generate->add_option("--scene", g.scene, "scene image")->required();
  generate->add_option("--scene-poses", g.scene_poses,
                       "keypoint JSON for the scene's people")
      ->required();
  generate->add_option("--ref", g.ref, "reference person image")->required();
  generate->add_option("--ref-pose", g.ref_pose,
                       "keypoint JSON for the reference image")
      ->required();
  generate
      ->add_option("--ckpt-dir", g.ckpt_dir,
                   "directory holding stage1.ckpt, stage2.ckpt, stage3.ckpt")
      ->required();
  generate->add_option("--seed", g.seed, "sampling seed");
  generate->add_option("--out", g.out, "output directory")->required();
  generate->callback([&g] { run_generate(g); });

  EvaluateCli ev;
  auto* evaluate = app.add_subcommand(
      "evaluate", "score generated images against ground truth");
  evaluate->add_option("--pred", ev.pred, "directory of generated PNGs")
      ->required();
  evaluate->add_option("--truth", ev.truth, "directory of reference PNGs")
      ->required();
  evaluate
      ->add_option("--poses", ev.poses,
                   "JSON with pred/truth keypoint annotations")
      ->required();
  evaluate->add_option("--out", ev.out, "report JSON to write")->required();
  evaluate->add_option("--alpha", ev.alpha, "PCKh threshold fraction");
  evaluate->callback([&ev] { run_evaluate(ev); });

  SynthCli sy;
  auto* synth = app.add_subcommand(
      "synth-data", "materialize a procedural stick-figure dataset");
  synth->add_option("--kind", sy.kind, "scenes or pairs")
      ->check(CLI::IsMember({"scenes", "pairs"}));
  synth
      ->add_option("--rule", sy.rule,
                   "spatial rule for scene datasets")
      ->check(CLI::IsMember({"right_of", "between", "scaled_row"}));
  synth->add_option("--n", sy.n, "number of records")->required();
  synth->add_option("--seed", sy.seed, "generation seed");
  synth->add_option("--res", sy.res, "canvas side for pair datasets");
  synth->add_option("--split", sy.split, "manifest split tag")
      ->check(CLI::IsMember({"train", "test"}));
  synth->add_option("--out", sy.out, "dataset directory")->required();
  synth->callback([&sy] { run_synth_data(sy); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const CLI::App* where = deepest_parsed(&app);
    if (e.get_exit_code() == static_cast<int>(CLI::ExitCodes::Success)) {
      return where->exit(e);  // --help / --version
    }
    std::cerr << "error: " << e.what() << "\n\n" << where->help();
    return 2;
  } catch (const PipelineFailure& e) {
    std::cerr << "pipeline failure at " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
