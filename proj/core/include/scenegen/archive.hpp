#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace scenegen {

// Named-tensor archive: a flat binary file holding a JSON header (kind,
// architecture hash, step count, config snapshot, tensor index) followed by
// raw little-endian tensor payloads. save -> load reproduces every tensor
// bit-for-bit.
struct ArchiveMetadata {
  std::string kind;         // e.g. "stage1", "stage2", "stage3", "vgg"
  uint64_t arch_hash = 0;   // hash over (name, dtype, shape) of model tensors
  int64_t step = 0;         // training steps represented by the archive
  std::string config_json;  // config snapshot, free-form JSON text
};

using NamedTensors = std::vector<std::pair<std::string, torch::Tensor>>;

struct LoadedArchive {
  ArchiveMetadata meta;
  std::map<std::string, torch::Tensor> tensors;
};

void save_archive(const std::filesystem::path& path,
                  const ArchiveMetadata& meta, const NamedTensors& tensors);

// Throws CorruptArchive on truncation or malformed headers.
LoadedArchive load_archive(const std::filesystem::path& path);

// FNV-1a over the ordered (name, dtype, shape) signature of the tensors.
uint64_t architecture_hash(std::string_view kind, const NamedTensors& tensors);

}  // namespace scenegen
