#include "scenegen/archive.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "scenegen/errors.hpp"

namespace scenegen {

namespace {

constexpr char kMagic[8] = {'S', 'G', 'A', 'R', 'C', 'H', '1', '\0'};

std::string dtype_tag(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    default:
      throw InvalidArgument("archive: unsupported dtype " +
                            std::string(c10::toString(t)));
  }
}

torch::ScalarType dtype_from_tag(const std::string& tag) {
  if (tag == "f32") return torch::kFloat32;
  if (tag == "f64") return torch::kFloat64;
  if (tag == "i64") return torch::kInt64;
  throw CorruptArchive("archive: unknown dtype tag '" + tag + "'");
}

}  // namespace

void save_archive(const std::filesystem::path& path,
                  const ArchiveMetadata& meta, const NamedTensors& tensors) {
  nlohmann::json header;
  header["format"] = 1;
  header["kind"] = meta.kind;
  header["arch_hash"] = meta.arch_hash;
  header["step"] = meta.step;
  header["config"] = meta.config_json;

  uint64_t offset = 0;
  std::vector<torch::Tensor> payloads;
  auto index = nlohmann::json::array();
  for (const auto& [name, tensor] : tensors) {
    auto t = tensor.detach().cpu().contiguous();
    const uint64_t nbytes = t.numel() * t.element_size();
    index.push_back({{"name", name},
                     {"dtype", dtype_tag(t.scalar_type())},
                     {"shape", t.sizes().vec()},
                     {"offset", offset},
                     {"nbytes", nbytes}});
    offset += nbytes;
    payloads.push_back(t);
  }
  header["tensors"] = index;

  const std::string header_text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("archive: cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  const uint64_t header_len = header_text.size();
  out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
  out.write(header_text.data(), header_len);
  for (const auto& t : payloads) {
    out.write(static_cast<const char*>(t.const_data_ptr()),
              t.numel() * t.element_size());
  }
  if (!out) throw Error("archive: write failure on " + path.string());
}

LoadedArchive load_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptArchive("archive: cannot open " + path.string());

  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw CorruptArchive("archive: bad magic in " + path.string());

  uint64_t header_len = 0;
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in) throw CorruptArchive("archive: truncated header length");
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), header_len);
  if (!in) throw CorruptArchive("archive: truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception& e) {
    throw CorruptArchive(std::string("archive: malformed header: ") + e.what());
  }

  LoadedArchive result;
  try {
    result.meta.kind = header.at("kind").get<std::string>();
    result.meta.arch_hash = header.at("arch_hash").get<uint64_t>();
    result.meta.step = header.at("step").get<int64_t>();
    result.meta.config_json = header.at("config").get<std::string>();

    for (const auto& entry : header.at("tensors")) {
      const auto name = entry.at("name").get<std::string>();
      const auto dtype = dtype_from_tag(entry.at("dtype").get<std::string>());
      const auto shape = entry.at("shape").get<std::vector<int64_t>>();
      const auto nbytes = entry.at("nbytes").get<uint64_t>();
      auto tensor = torch::empty(shape, torch::TensorOptions().dtype(dtype));
      if (uint64_t(tensor.numel() * tensor.element_size()) != nbytes)
        throw CorruptArchive("archive: size mismatch for tensor '" + name + "'");
      in.read(static_cast<char*>(tensor.data_ptr()), nbytes);
      if (!in)
        throw CorruptArchive("archive: truncated payload at tensor '" + name + "'");
      result.tensors.emplace(name, tensor);
    }
  } catch (const nlohmann::json::exception& e) {
    throw CorruptArchive(std::string("archive: malformed index: ") + e.what());
  }
  return result;
}

uint64_t architecture_hash(std::string_view kind, const NamedTensors& tensors) {
  std::ostringstream sig;
  sig << kind;
  for (const auto& [name, tensor] : tensors) {
    sig << '|' << name << ':' << dtype_tag(tensor.scalar_type());
    for (auto d : tensor.sizes()) sig << 'x' << d;
  }
  const std::string s = sig.str();
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace scenegen
