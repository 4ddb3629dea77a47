#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string_view>

namespace scenegen {

// All randomness in a run flows from one master seed through named
// substreams ("data", "init", "noise", ...) so each stage's draws are
// reproducible independently of the others.
uint64_t substream_seed(uint64_t master_seed, std::string_view name);

// Fresh CPU generator seeded for (master_seed, name).
at::Generator make_generator(uint64_t master_seed, std::string_view name);

// Fresh CPU generator with a direct seed.
at::Generator make_generator(uint64_t seed);

}  // namespace scenegen
