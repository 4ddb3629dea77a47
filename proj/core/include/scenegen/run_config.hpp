#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

namespace scenegen {

// One training run, fully resolved.
struct RunConfig {
  int stage = 1;
  int steps = 0;
  int batch = 0;
  double lr = 0.0;
  double beta1 = 0.0;  // Adam only; the SGD stage ignores both betas
  double beta2 = 0.0;
  uint64_t seed = 0;
  bool tiny = false;  // stage 3: reduced ladder on a 64 px canvas
  std::filesystem::path data;  // dataset manifest
  std::filesystem::path out;   // checkpoint to write
};

// Sparse overlay: only the keys a source actually supplied.
struct RunOverrides {
  std::optional<int> steps;
  std::optional<int> batch;
  std::optional<double> lr;
  std::optional<double> beta1;
  std::optional<double> beta2;
  std::optional<uint64_t> seed;
  std::optional<bool> tiny;
  std::optional<std::filesystem::path> data;
  std::optional<std::filesystem::path> out;
};

// Per-stage optimizer schedule (stage 1: Adam 1e-4, betas 0/0.9;
// stage 2: SGD 1e-2; stage 3: Adam 1e-3, betas 0.5/0.999); steps and
// batch take the trainer defaults.
// Stage outside {1,2,3} -> InvalidArgument.
RunConfig default_run_config(int stage);

// Flat JSON object, keys mirroring RunOverrides fields. Unknown keys and
// wrong value types -> LoadError.
RunOverrides parse_run_overrides(const std::string& json_text);
RunOverrides load_run_overrides(const std::filesystem::path& path);

// Stage defaults, then the config file's keys, then the command line's:
// rightmost supplied value wins per field.
RunConfig resolve_run_config(int stage, const RunOverrides& file,
                             const RunOverrides& cli);

}  // namespace scenegen
