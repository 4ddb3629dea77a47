#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "test_support.hpp"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "json.hpp"
#include "scenegen/face_refiner.hpp"
#include "scenegen/pose_transfer.hpp"
#include "scenegen/pose_wgan.hpp"

using namespace scenegen;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const char* name) {
  auto dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out_file = dir / "cli_stdout.txt";
  const fs::path err_file = dir / "cli_stderr.txt";
  const std::string cmd = std::string(SCENEGEN_CLI) + " " + args + " > " +
                          out_file.string() + " 2> " + err_file.string();
  const int ret = std::system(cmd.c_str());
  RunResult r;
  r.code = WIFEXITED(ret) ? WEXITSTATUS(ret) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

}  // namespace

TEST_CASE("help and version exit 0 with usage text") {
  auto dir = fresh_dir("scenegen_cli_help");

  auto top = run_cli("--help", dir);
  CHECK(top.code == 0);
  CHECK(contains(top.out, "Usage"));
  CHECK(contains(top.out, "generate"));
  CHECK(contains(top.out, "synth-data"));

  auto sub = run_cli("train-stage1 --help", dir);
  CHECK(sub.code == 0);
  CHECK(contains(sub.out, "--steps"));
  CHECK(contains(sub.out, "--data"));

  auto version = run_cli("--version", dir);
  CHECK(version.code == 0);
  CHECK(contains(version.out, "scenegen"));
}

TEST_CASE("bad invocations exit 2 with usage") {
  auto dir = fresh_dir("scenegen_cli_bad");

  auto unknown_sub = run_cli("frobnicate", dir);
  CHECK(unknown_sub.code == 2);
  CHECK(contains(unknown_sub.err, "Usage"));

  auto unknown_flag = run_cli("generate --bogus 1", dir);
  CHECK(unknown_flag.code == 2);
  CHECK(contains(unknown_flag.err, "Usage"));

  auto bare = run_cli("", dir);
  CHECK(bare.code == 2);

  auto bad_rule = run_cli("synth-data --rule left_of --n 3 --out x", dir);
  CHECK(bad_rule.code == 2);
}

TEST_CASE("missing dataset and malformed config fail with a message") {
  auto dir = fresh_dir("scenegen_cli_missing");

  auto gone = run_cli("train-stage1 --data " + (dir / "nope").string() +
                          " --out " + (dir / "c.ckpt").string() + " --steps 1",
                      dir);
  CHECK(gone.code == 1);
  CHECK(contains(gone.err, "error"));

  std::ofstream(dir / "bad.json") << "{\"step_count\": 3}";
  auto bad_key = run_cli("train-stage1 --config " +
                             (dir / "bad.json").string() + " --data x --out y",
                         dir);
  CHECK(bad_key.code == 1);
  CHECK(contains(bad_key.err, "step_count"));
}

TEST_CASE("full toy pipeline: synth, train all stages, generate, evaluate") {
  auto dir = fresh_dir("scenegen_cli_pipeline");
  const std::string scenes = (dir / "scenes").string();
  const std::string pairs = (dir / "pairs").string();
  const std::string ckpts = (dir / "ckpts").string();
  fs::create_directories(ckpts);

  auto synth_scenes = run_cli(
      "synth-data --kind scenes --rule right_of --n 6 --seed 3 --out " +
          scenes,
      dir);
  CHECK(synth_scenes.code == 0);
  CHECK(fs::exists(dir / "scenes" / "manifest.json"));

  auto synth_pairs = run_cli(
      "synth-data --kind pairs --n 4 --seed 3 --res 64 --out " + pairs, dir);
  CHECK(synth_pairs.code == 0);

  auto t1 = run_cli("train-stage1 --data " + scenes + " --out " + ckpts +
                        "/stage1.ckpt --steps 10 --batch 4 --seed 7",
                    dir);
  CHECK(t1.code == 0);
  CHECK(contains(t1.out, "10 critic"));

  auto t2 = run_cli("train-stage2 --data " + scenes + " --out " + ckpts +
                        "/stage2.ckpt --steps 40 --batch 8 --seed 7",
                    dir);
  CHECK(t2.code == 0);

  auto t3 = run_cli("train-stage3 --data " + pairs + " --out " + ckpts +
                        "/stage3.ckpt --steps 6 --batch 2 --seed 7 --tiny",
                    dir);
  CHECK(t3.code == 0);
  CHECK(contains(t3.out, "64px"));

  const std::string gen_args =
      "generate --scene " + scenes + "/scene_0000.png --scene-poses " +
      scenes + "/scene_0000.json --ref " + pairs + "/pair_0000_a.png" +
      " --ref-pose " + pairs + "/pair_0000_a.json --ckpt-dir " + ckpts +
      " --seed 11 --out " + (dir / "gen").string();
  auto gen = run_cli(gen_args, dir);
  CHECK(gen.code == 0);
  CHECK(fs::exists(dir / "gen" / "composited.png"));
  CHECK(fs::exists(dir / "gen" / "person.png"));
  CHECK(fs::exists(dir / "gen" / "heatmap.png"));
  CHECK(fs::exists(dir / "gen" / "overlay.png"));
  CHECK(fs::exists(dir / "gen" / "provenance.json"));

  auto prov = nlohmann::json::parse(slurp(dir / "gen" / "provenance.json"));
  CHECK(prov["seed"].get<int>() == 11);
  CHECK(prov["canvas"].get<int>() == 64);
  CHECK(prov.contains("box"));

  // Same seed, fresh process: byte-identical output.
  auto gen2 = run_cli(
      "generate --scene " + scenes + "/scene_0000.png --scene-poses " +
          scenes + "/scene_0000.json --ref " + pairs + "/pair_0000_a.png" +
          " --ref-pose " + pairs + "/pair_0000_a.json --ckpt-dir " + ckpts +
          " --seed 11 --out " + (dir / "gen2").string(),
      dir);
  CHECK(gen2.code == 0);
  CHECK(slurp(dir / "gen" / "composited.png") ==
        slurp(dir / "gen2" / "composited.png"));

  auto transfer = run_cli(
      "transfer --ckpt " + ckpts + "/stage3.ckpt --source " + pairs +
          "/pair_0001_a.png --source-pose " + pairs + "/pair_0001_a.json" +
          " --target-pose " + pairs + "/pair_0001_b.json --out " +
          (dir / "transferred.png").string(),
      dir);
  CHECK(transfer.code == 0);
  CHECK(fs::exists(dir / "transferred.png"));

  // Evaluate the composited scene against the original.
  fs::create_directories(dir / "ev" / "pred");
  fs::create_directories(dir / "ev" / "truth");
  fs::copy_file(dir / "gen" / "composited.png", dir / "ev" / "pred" / "a.png");
  fs::copy_file(dir / "scenes" / "scene_0000.png",
                dir / "ev" / "truth" / "a.png");
  auto ann = nlohmann::json::parse(slurp(dir / "scenes" / "scene_0000.json"));
  nlohmann::json one{{"frame", ann["frame"]},
                     {"people", nlohmann::json::array({ann["people"][0]})}};
  std::ofstream(dir / "ev" / "poses.json")
      << nlohmann::json{{"pred", one}, {"truth", one}}.dump();

  auto ev = run_cli("evaluate --pred " + (dir / "ev" / "pred").string() +
                        " --truth " + (dir / "ev" / "truth").string() +
                        " --poses " + (dir / "ev" / "poses.json").string() +
                        " --out " + (dir / "ev" / "report.json").string(),
                    dir);
  CHECK(ev.code == 0);
  auto report = nlohmann::json::parse(slurp(dir / "ev" / "report.json"));
  CHECK(report["sample_count"].get<int>() == 1);
  CHECK(report["pckh"].get<double>() == doctest::Approx(1.0));
  CHECK(report["ssim"].get<double>() > 0.0);
}

TEST_CASE("config file keys yield to command-line flags") {
  auto dir = fresh_dir("scenegen_cli_config");
  auto synth = run_cli(
      "synth-data --kind scenes --rule right_of --n 4 --seed 2 --out " +
          (dir / "data").string(),
      dir);
  REQUIRE(synth.code == 0);

  std::ofstream(dir / "run.json")
      << R"({"steps": 3, "batch": 2, "lr": 0.5})";
  auto ckpt = (dir / "s2.ckpt").string();
  auto train = run_cli("train-stage2 --config " + (dir / "run.json").string() +
                           " --data " + (dir / "data").string() + " --out " +
                           ckpt + " --steps 5",
                       dir);
  REQUIRE(train.code == 0);

  auto loaded = load_stage2(ckpt);
  auto cfg = nlohmann::json::parse(loaded.config_json);
  CHECK(cfg["steps"].get<int>() == 5);      // flag beats file
  CHECK(cfg["batch"].get<int>() == 2);      // file beats default
  CHECK(cfg["lr"].get<double>() == doctest::Approx(0.5));
  CHECK(loaded.step == 5);
}

TEST_CASE("generation failure reports the failing stage and exits nonzero") {
  auto dir = fresh_dir("scenegen_cli_fail");
  auto synth = run_cli(
      "synth-data --kind scenes --rule right_of --n 2 --seed 5 --out " +
          (dir / "data").string(),
      dir);
  REQUIRE(synth.code == 0);
  auto pairs = run_cli(
      "synth-data --kind pairs --n 2 --seed 5 --res 64 --out " +
          (dir / "pairs").string(),
      dir);
  REQUIRE(pairs.code == 0);

  // A sampler that decodes every joint occluded: zero weights push the
  // post-tanh heatmap to 0.5, so force the head bias strongly negative.
  fs::create_directories(dir / "ckpts");
  StageOneModel broken;
  for (auto& p : broken.generator->parameters()) {
    torch::NoGradGuard g;
    p.zero_();
  }
  {
    torch::NoGradGuard g;
    broken.generator->head->bias.fill_(-10.0);
  }
  save_stage1(dir / "ckpts" / "stage1.ckpt", broken, 0, "{}");

  FaceRefiner refiner;
  init_stage2(refiner, 1);
  save_stage2(dir / "ckpts" / "stage2.ckpt", refiner, 0, "{}");

  StageThreeModel renderer{RenderArch::tiny()};
  renderer.init_params(1);
  save_stage3(dir / "ckpts" / "stage3.ckpt", renderer, 0, "{}");

  auto gen = run_cli(
      "generate --scene " + (dir / "data" / "scene_0000.png").string() +
          " --scene-poses " + (dir / "data" / "scene_0000.json").string() +
          " --ref " + (dir / "pairs" / "pair_0000_a.png").string() +
          " --ref-pose " + (dir / "pairs" / "pair_0000_a.json").string() +
          " --ckpt-dir " + (dir / "ckpts").string() + " --seed 3 --out " +
          (dir / "gen").string(),
      dir);
  CHECK(gen.code == 1);
  CHECK(contains(gen.err, "stage 1"));

  // Wrong-stage checkpoint in the stage-3 slot is rejected up front.
  fs::copy_file(dir / "ckpts" / "stage2.ckpt", dir / "ckpts" / "stage3.ckpt",
                fs::copy_options::overwrite_existing);
  auto mismatch = run_cli(
      "generate --scene " + (dir / "data" / "scene_0000.png").string() +
          " --scene-poses " + (dir / "data" / "scene_0000.json").string() +
          " --ref " + (dir / "pairs" / "pair_0000_a.png").string() +
          " --ref-pose " + (dir / "pairs" / "pair_0000_a.json").string() +
          " --ckpt-dir " + (dir / "ckpts").string() + " --seed 3 --out " +
          (dir / "gen").string(),
      dir);
  CHECK(mismatch.code == 1);
  CHECK(contains(mismatch.err, "error"));
}
