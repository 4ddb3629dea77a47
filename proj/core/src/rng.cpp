#include "scenegen/rng.hpp"

#include <ATen/CPUGeneratorImpl.h>

namespace scenegen {

namespace {

constexpr uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr uint64_t kFnvPrime = 0x100000001b3ULL;

uint64_t fnv1a(std::string_view s) {
  uint64_t h = kFnvOffset;
  for (unsigned char c : s) {
    h ^= c;
    h *= kFnvPrime;
  }
  return h;
}

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

uint64_t substream_seed(uint64_t master_seed, std::string_view name) {
  return splitmix64(master_seed ^ fnv1a(name));
}

at::Generator make_generator(uint64_t master_seed, std::string_view name) {
  return make_generator(substream_seed(master_seed, name));
}

at::Generator make_generator(uint64_t seed) {
  auto gen = at::detail::createCPUGenerator();
  gen.set_current_seed(seed);
  return gen;
}

}  // namespace scenegen
