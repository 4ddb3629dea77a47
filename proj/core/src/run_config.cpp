#include "scenegen/run_config.hpp"

#include <fstream>

#include "json.hpp"
#include "scenegen/errors.hpp"
#include "scenegen/face_refiner.hpp"
#include "scenegen/pose_transfer.hpp"
#include "scenegen/pose_wgan.hpp"

namespace scenegen {

using nlohmann::json;

RunConfig default_run_config(int stage) {
  RunConfig c;
  c.stage = stage;
  switch (stage) {
    case 1: {
      Stage1Config d;
      c.steps = d.steps;
      c.batch = d.batch;
      c.lr = d.lr;
      c.beta1 = d.beta1;
      c.beta2 = d.beta2;
      break;
    }
    case 2: {
      Stage2Config d;
      c.steps = d.steps;
      c.batch = d.batch;
      c.lr = d.lr;
      break;
    }
    case 3: {
      Stage3Config d;
      c.steps = d.steps;
      c.batch = d.batch;
      c.lr = d.lr;
      c.beta1 = d.beta1;
      c.beta2 = d.beta2;
      break;
    }
    default:
      throw InvalidArgument("stage must be 1, 2 or 3");
  }
  return c;
}

RunOverrides parse_run_overrides(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw LoadError(std::string("malformed config JSON: ") + e.what());
  }
  if (!doc.is_object()) {
    throw LoadError("config must be a JSON object");
  }

  RunOverrides o;
  try {
    for (const auto& [key, value] : doc.items()) {
      if (key == "steps") {
        o.steps = value.get<int>();
      } else if (key == "batch") {
        o.batch = value.get<int>();
      } else if (key == "lr") {
        o.lr = value.get<double>();
      } else if (key == "beta1") {
        o.beta1 = value.get<double>();
      } else if (key == "beta2") {
        o.beta2 = value.get<double>();
      } else if (key == "seed") {
        o.seed = value.get<uint64_t>();
      } else if (key == "tiny") {
        o.tiny = value.get<bool>();
      } else if (key == "data") {
        o.data = value.get<std::string>();
      } else if (key == "out") {
        o.out = value.get<std::string>();
      } else {
        throw LoadError("unknown config key: " + key);
      }
    }
  } catch (const json::exception& e) {
    throw LoadError(std::string("bad config value type: ") + e.what());
  }
  return o;
}

RunOverrides load_run_overrides(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw LoadError("cannot read config file: " + path.string());
  }
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return parse_run_overrides(text);
}

namespace {

void apply(RunConfig& c, const RunOverrides& o) {
  if (o.steps) c.steps = *o.steps;
  if (o.batch) c.batch = *o.batch;
  if (o.lr) c.lr = *o.lr;
  if (o.beta1) c.beta1 = *o.beta1;
  if (o.beta2) c.beta2 = *o.beta2;
  if (o.seed) c.seed = *o.seed;
  if (o.tiny) c.tiny = *o.tiny;
  if (o.data) c.data = *o.data;
  if (o.out) c.out = *o.out;
}

}  // namespace

RunConfig resolve_run_config(int stage, const RunOverrides& file,
                             const RunOverrides& cli) {
  RunConfig c = default_run_config(stage);
  apply(c, file);
  apply(c, cli);
  if (c.steps < 1 || c.batch < 1) {
    throw InvalidArgument("steps and batch must be positive");
  }
  if (c.lr <= 0) {
    throw InvalidArgument("learning rate must be positive");
  }
  return c;
}

}  // namespace scenegen
