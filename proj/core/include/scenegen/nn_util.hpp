#pragma once

#include <torch/torch.h>

#include <string>

#include "scenegen/archive.hpp"

namespace scenegen {

// Paper-style init: conv/linear weights ~ N(0, 0.02), biases 0,
// batch-norm gains ~ N(1, 0.02) with running stats reset.
void init_weights(torch::nn::Module& module, at::Generator& gen,
                  double std_dev = 0.02);

// Parameters followed by buffers, each name prefixed ("g_t/", "d_t/", ...).
NamedTensors named_model_tensors(const torch::nn::Module& module,
                                 const std::string& prefix);

// Copies archive tensors into the module's parameters and buffers.
// Throws IncompatibleCheckpoint when an entry is missing or misshaped.
void load_model_tensors(torch::nn::Module& module, const std::string& prefix,
                        const std::map<std::string, torch::Tensor>& tensors);

// Adam moment/step state as archive entries, one triple per parameter,
// named "<prefix><param>.exp_avg" / ".exp_avg_sq" / ".step". Parameters the
// optimizer has not touched yet are skipped.
NamedTensors adam_state_tensors(const torch::optim::Adam& adam,
                                const torch::nn::Module& module,
                                const std::string& prefix);

void restore_adam_state(torch::optim::Adam& adam, torch::nn::Module& module,
                        const std::string& prefix,
                        const std::map<std::string, torch::Tensor>& tensors);

}  // namespace scenegen
