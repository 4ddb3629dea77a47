// Temporary diagnostic for the stage-1 sampler; not installed.
#include <torch/torch.h>

#include <cstdio>

#include "scenegen/heatmap.hpp"
#include "scenegen/pose.hpp"
#include "scenegen/pose_wgan.hpp"
#include "scenegen/synth.hpp"

using namespace scenegen;

int main(int argc, char** argv) {
  int steps = argc > 1 ? std::atoi(argv[1]) : 2000;
  int batch = argc > 2 ? std::atoi(argv[2]) : 16;
  double sigma = argc > 3 ? std::atof(argv[3]) : kDefaultSigma;

  auto records = synth_scene_dataset(500, SceneRule::kRightOf, 21);
  std::vector<SceneSample> dataset;
  for (const auto& r : records) dataset.push_back(scene_sample_of(r));

  StageOneModel model;
  model.init_params(21);
  Stage1Config config;
  config.steps = steps;
  config.batch = batch;
  config.sigma = sigma;
  config.seed = 21;
  auto result = train_stage1(model, dataset, config);
  std::printf("trained %d steps batch %d sigma %.2f: last W %.4f gp %.4f\n",
              steps, batch, sigma, result.log.back().wasserstein,
              result.log.back().penalty);

  auto held_out = synth_scene_dataset(200, SceneRule::kRightOf, 977);
  int occluded = 0, nose_hidden = 0, hits = 0, argmax_hits = 0;
  double sum_gmax = 0, sum_nose_max = 0, sum_visible = 0;
  double sum_ax = 0, sum_ctx = 0;
  std::vector<torch::Tensor> embeds;
  for (size_t i = 0; i < held_out.size(); ++i) {
    auto sample = scene_sample_of(held_out[i]);
    auto drawn = sample_target(model, sample.context, 5000 + i, sigma);

    {
      torch::NoGradGuard no_grad;
      auto ctx_hm = encode_scene_context(sample.context, kContextRes,
                                         kContextRes, sigma)
                        .tensor;
      embeds.push_back(model.encoder(ctx_hm.unsqueeze(0)).squeeze(0));
    }

    auto nose_ch = drawn.heatmap01[static_cast<int>(Joint::kNose)];
    sum_gmax += drawn.heatmap01.max().item<double>();
    sum_nose_max += nose_ch.max().item<double>();
    sum_visible += drawn.visible_joints;

    // threshold-free placement: nose channel argmax, cell units
    auto flat = nose_ch.argmax().item<int64_t>();
    double ax = (static_cast<double>(flat % kContextRes) + 0.5) / kContextRes;
    sum_ax += ax;

    double max_ctx = -1e9;
    for (const auto& p : sample.context)
      max_ctx = std::max(max_ctx, p.at(Joint::kNose).x / p.frame.width);
    sum_ctx += max_ctx;
    if (ax > max_ctx) ++argmax_hits;

    if (drawn.all_occluded) { ++occluded; continue; }
    auto sk = rescale_to_frame(drawn.skeleton, held_out[i].scene.frame);
    if (!sk.at(Joint::kNose).visible) { ++nose_hidden; continue; }
    if (sk.at(Joint::kNose).x / held_out[i].scene.frame.width > max_ctx)
      ++hits;
  }
  std::printf("hits %d/200  argmax_hits %d/200  all_occluded %d  "
              "nose_hidden %d\n", hits, argmax_hits, occluded, nose_hidden);
  std::printf("mean global max %.4f  mean nose max %.4f  mean visible %.2f\n",
              sum_gmax / 200, sum_nose_max / 200, sum_visible / 200);
  std::printf("mean argmax x %.3f  mean ctx x %.3f\n", sum_ax / 200,
              sum_ctx / 200);
  auto vb = torch::stack(embeds);
  std::printf("encoder v_b: per-dim std mean %.4f  overall mean %.4f\n",
              vb.std(0).mean().item<double>(), vb.mean().item<double>());
  return 0;
}
