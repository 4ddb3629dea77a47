#include "scenegen/nn_util.hpp"

#include "scenegen/errors.hpp"

namespace scenegen {

void init_weights(torch::nn::Module& module, at::Generator& gen,
                  double std_dev) {
  torch::NoGradGuard no_grad;
  for (auto& child : module.modules(/*include_self=*/true)) {
    if (auto* conv = child->as<torch::nn::Conv2d>()) {
      conv->weight.normal_(0.0, std_dev, gen);
      if (conv->bias.defined()) conv->bias.zero_();
    } else if (auto* convt = child->as<torch::nn::ConvTranspose2d>()) {
      convt->weight.normal_(0.0, std_dev, gen);
      if (convt->bias.defined()) convt->bias.zero_();
    } else if (auto* linear = child->as<torch::nn::Linear>()) {
      linear->weight.normal_(0.0, std_dev, gen);
      if (linear->bias.defined()) linear->bias.zero_();
    } else if (auto* bn = child->as<torch::nn::BatchNorm2d>()) {
      bn->weight.normal_(1.0, std_dev, gen);
      bn->bias.zero_();
      bn->running_mean.zero_();
      bn->running_var.fill_(1.0);
      bn->num_batches_tracked.zero_();
    }
  }
}

NamedTensors named_model_tensors(const torch::nn::Module& module,
                                 const std::string& prefix) {
  NamedTensors out;
  for (const auto& p : module.named_parameters())
    out.emplace_back(prefix + p.key(), p.value());
  for (const auto& b : module.named_buffers())
    out.emplace_back(prefix + b.key(), b.value());
  return out;
}

void load_model_tensors(torch::nn::Module& module, const std::string& prefix,
                        const std::map<std::string, torch::Tensor>& tensors) {
  torch::NoGradGuard no_grad;
  auto copy_into = [&](const std::string& key, torch::Tensor dst) {
    auto it = tensors.find(prefix + key);
    if (it == tensors.end())
      throw IncompatibleCheckpoint("checkpoint misses tensor '" + prefix + key +
                                   "'");
    if (it->second.sizes() != dst.sizes() ||
        it->second.scalar_type() != dst.scalar_type())
      throw IncompatibleCheckpoint("checkpoint tensor '" + prefix + key +
                                   "' has wrong shape or dtype");
    dst.copy_(it->second);
  };
  for (auto& p : module.named_parameters()) copy_into(p.key(), p.value());
  for (auto& b : module.named_buffers()) copy_into(b.key(), b.value());
}

NamedTensors adam_state_tensors(const torch::optim::Adam& adam,
                                const torch::nn::Module& module,
                                const std::string& prefix) {
  NamedTensors out;
  const auto& state = const_cast<torch::optim::Adam&>(adam).state();
  for (const auto& p : module.named_parameters()) {
    auto it = state.find(p.value().unsafeGetTensorImpl());
    if (it == state.end()) continue;
    const auto& s = static_cast<const torch::optim::AdamParamState&>(*it->second);
    out.emplace_back(prefix + p.key() + ".exp_avg", s.exp_avg());
    out.emplace_back(prefix + p.key() + ".exp_avg_sq", s.exp_avg_sq());
    out.emplace_back(prefix + p.key() + ".step",
                     torch::tensor(s.step(), torch::kInt64));
  }
  return out;
}

void restore_adam_state(torch::optim::Adam& adam, torch::nn::Module& module,
                        const std::string& prefix,
                        const std::map<std::string, torch::Tensor>& tensors) {
  auto& state = adam.state();
  for (auto& p : module.named_parameters()) {
    auto avg = tensors.find(prefix + p.key() + ".exp_avg");
    auto sq = tensors.find(prefix + p.key() + ".exp_avg_sq");
    auto step = tensors.find(prefix + p.key() + ".step");
    if (avg == tensors.end() || sq == tensors.end() || step == tensors.end())
      continue;
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->step(step->second.item<int64_t>());
    s->exp_avg(avg->second.clone());
    s->exp_avg_sq(sq->second.clone());
    s->max_exp_avg_sq(torch::Tensor());
    state[p.value().unsafeGetTensorImpl()] = std::move(s);
  }
}

}  // namespace scenegen
