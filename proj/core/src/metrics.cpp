#include "scenegen/metrics.hpp"

#include <cmath>

#include "json.hpp"
#include "scenegen/errors.hpp"

namespace scenegen {

namespace {

// ITU-R 601 luma of an RGB tensor already mapped to [0,1].
torch::Tensor luminance(const torch::Tensor& rgb01) {
  return 0.299 * rgb01[0] + 0.587 * rgb01[1] + 0.114 * rgb01[2];
}

torch::Tensor gaussian_window(int size, double sigma) {
  auto coords = torch::arange(size, torch::kFloat64) - (size - 1) / 2.0;
  auto g1 = torch::exp(-coords.pow(2) / (2.0 * sigma * sigma));
  g1 /= g1.sum();
  return torch::outer(g1, g1);
}

}  // namespace

double ssim(const torch::Tensor& a, const torch::Tensor& b,
            const SsimOptions& opts) {
  if (!a.defined() || !b.defined() || a.dim() != 3 || a.size(0) != 3) {
    throw InvalidArgument("ssim: expected [3, H, W] inputs");
  }
  if (a.sizes() != b.sizes()) {
    throw InvalidArgument("ssim: shape mismatch");
  }
  if (opts.window < 1 || opts.window % 2 == 0) {
    throw InvalidArgument("ssim: window must be odd and positive");
  }
  if (a.size(1) < opts.window || a.size(2) < opts.window) {
    throw InvalidArgument("ssim: image smaller than the window");
  }

  // [-1,1] -> [0,1] luminance, double precision throughout.
  auto la = luminance((a.to(torch::kFloat64) + 1.0) / 2.0);
  auto lb = luminance((b.to(torch::kFloat64) + 1.0) / 2.0);
  auto x = la.unsqueeze(0).unsqueeze(0);
  auto y = lb.unsqueeze(0).unsqueeze(0);

  auto w = gaussian_window(opts.window, opts.sigma).unsqueeze(0).unsqueeze(0);
  auto filt = [&](const torch::Tensor& t) { return torch::conv2d(t, w); };

  auto mu_x = filt(x);
  auto mu_y = filt(y);
  auto mu_xx = mu_x * mu_x;
  auto mu_yy = mu_y * mu_y;
  auto mu_xy = mu_x * mu_y;
  auto sigma_xx = filt(x * x) - mu_xx;
  auto sigma_yy = filt(y * y) - mu_yy;
  auto sigma_xy = filt(x * y) - mu_xy;

  const double c1 = opts.k1 * opts.k1;  // dynamic range 1
  const double c2 = opts.k2 * opts.k2;
  auto map = ((2.0 * mu_xy + c1) * (2.0 * sigma_xy + c2)) /
             ((mu_xx + mu_yy + c1) * (sigma_xx + sigma_yy + c2));
  return map.mean().item<double>();
}

double pckh(const PoseSkeleton& pred, const PoseSkeleton& truth,
            const PckhOptions& opts) {
  if (pred.frame != truth.frame) {
    throw InvalidArgument("pckh: skeletons live in different frames");
  }
  if (opts.alpha < 0.0) {
    throw InvalidArgument("pckh: negative alpha");
  }

  double head_size;
  if (opts.head_size) {
    head_size = *opts.head_size;
  } else {
    const Keypoint& nose = truth.at(Joint::kNose);
    const Keypoint& neck = truth.at(Joint::kNeck);
    if (!nose.visible || !neck.visible) {
      throw InvalidArgument(
          "pckh: truth nose and neck must be visible to derive head size");
    }
    head_size = 2.0 * std::hypot(nose.x - neck.x, nose.y - neck.y);
  }
  if (head_size <= 0.0) {
    throw DegenerateSkeleton("pckh: head size is zero");
  }

  const double threshold = opts.alpha * head_size;
  int considered = 0;
  int hits = 0;
  for (int i = 0; i < kNumJoints; ++i) {
    const Keypoint& t = truth.joints[i];
    if (!t.visible) continue;
    ++considered;
    const Keypoint& p = pred.joints[i];
    if (p.visible && std::hypot(p.x - t.x, p.y - t.y) <= threshold) ++hits;
  }
  if (considered == 0) {
    throw DegenerateSkeleton("pckh: truth has no visible keypoints");
  }
  return static_cast<double>(hits) / considered;
}

MetricReport batch_evaluate(const std::vector<ImagePair>& image_pairs,
                            const std::vector<SkeletonPair>& keypoint_pairs,
                            const BackboneSet& backbones,
                            const SsimOptions& ssim_opts,
                            const PckhOptions& pckh_opts) {
  if (image_pairs.empty() || keypoint_pairs.empty()) {
    throw InvalidArgument("batch_evaluate: empty pair list");
  }
  if (image_pairs.size() != keypoint_pairs.size()) {
    throw InvalidArgument("batch_evaluate: pair list length mismatch");
  }

  MetricReport report;
  report.sample_count = static_cast<int>(image_pairs.size());
  for (const auto& pair : image_pairs) {
    report.ssim += ssim(pair.generated, pair.reference, ssim_opts);
  }
  report.ssim /= report.sample_count;
  for (const auto& pair : keypoint_pairs) {
    report.pckh += pckh(pair.pred, pair.truth, pckh_opts);
  }
  report.pckh /= report.sample_count;

  if (backbones.inception || backbones.detection || backbones.lpips) {
    std::vector<torch::Tensor> generated, reference;
    generated.reserve(image_pairs.size());
    reference.reserve(image_pairs.size());
    for (const auto& pair : image_pairs) {
      generated.push_back(pair.generated);
      reference.push_back(pair.reference);
    }
    auto run = [&](const std::shared_ptr<const ScoreBackbone>& backbone)
        -> std::optional<BackboneScore> {
      if (!backbone) return std::nullopt;
      return BackboneScore{backbone->score(generated, reference),
                           backbone->name()};
    };
    report.is_score = run(backbones.inception);
    report.ds_score = run(backbones.detection);
    report.lpips_score = run(backbones.lpips);
  }
  return report;
}

std::string metric_report_to_json(const MetricReport& report) {
  nlohmann::json j;
  j["ssim"] = report.ssim;
  j["pckh"] = report.pckh;
  j["sample_count"] = report.sample_count;
  auto put = [&](const char* key,
                 const std::optional<BackboneScore>& score) {
    if (score) {
      j[key] = {{"value", score->value}, {"backbone", score->backbone}};
    } else {
      j[key] = nullptr;
    }
  };
  put("is", report.is_score);
  put("ds", report.ds_score);
  put("lpips", report.lpips_score);
  return j.dump(2);
}

}  // namespace scenegen
