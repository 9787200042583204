#include "gfrnet/config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace gfrnet {

using nlohmann::json;

namespace {

// Strict section reader: every key present in the JSON object must be
// consumed by one of the declared fields.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  template <class T>
  void field(const char* key, T& out) {
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        out = it->get<T>();
      } catch (const json::exception&) {
        throw ConfigError(path_ + "." + key + ": wrong value type");
      }
      seen_.push_back(key);
    }
  }

  const json* subsection(const char* key) {
    if (auto it = j_.find(key); it != j_.end()) {
      seen_.push_back(key);
      return &*it;
    }
    return nullptr;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (std::find(seen_.begin(), seen_.end(), it.key()) == seen_.end())
        throw ConfigError("unknown config key: " + path_ + "." + it.key());
  }

 private:
  const json& j_;
  std::string path_;
  std::vector<std::string> seen_;
};

}  // namespace

void RunConfig::validate() const {
  if (input_resolution < 16 || input_resolution % 16 != 0)
    throw ConfigError("model.input_resolution must be a positive multiple of 16");
  if (width_factor <= 0.0) throw ConfigError("model.width_factor must be positive");
  if (unified_channels < 1) throw ConfigError("model.unified_channels must be positive");
  if (slices < 1) throw ConfigError("model.slices must be positive");
  variant_config().validate();
  if (train.lr <= 0.0f) throw ConfigError("train.lr must be positive");
  if (train.epochs < 1) throw ConfigError("train.epochs must be positive");
  if (train.decay_epoch < 0) throw ConfigError("train.decay_epoch must be nonnegative");
  if (!(train.decay_factor > 0.0f && train.decay_factor <= 1.0f))
    throw ConfigError("train.decay_factor must be in (0,1]");
  if (data_path.empty()) {
    synth.validate();
    if (synth.resolution != input_resolution)
      throw ConfigError("data.synth.resolution must match model.input_resolution");
    if (synth.slices != slices) throw ConfigError("data.synth.slices must match model.slices");
  }
}

std::string RunConfig::to_json() const {
  json j;
  j["model"] = {{"input_resolution", input_resolution},
                {"width_factor", width_factor},
                {"unified_channels", unified_channels},
                {"slices", slices},
                {"variant", variant}};
  j["train"] = {{"lr", train.lr},
                {"epochs", train.epochs},
                {"decay_epoch", train.decay_epoch},
                {"decay_factor", train.decay_factor},
                {"seed", train.seed},
                {"augment", train.augment},
                {"max_iterations", train.max_iterations}};
  j["data"] = json::object();
  if (!data_path.empty()) j["data"]["path"] = data_path;
  j["data"]["synth"] = {{"resolution", synth.resolution}, {"slices", synth.slices},
                        {"r_max", synth.r_max},           {"shape_count", synth.shape_count},
                        {"min_size", synth.min_size},     {"max_size", synth.max_size},
                        {"seed", synth.seed},             {"count", synth.count}};
  if (!synth.focal_depths.empty()) j["data"]["synth"]["focal_depths"] = synth.focal_depths;
  j["io"] = {{"checkpoint", checkpoint_path}, {"report", report_path}};
  return j.dump(2);
}

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  RunConfig cfg;
  Section root(j, "config");
  if (const json* m = root.subsection("model")) {
    Section s(*m, "model");
    s.field("input_resolution", cfg.input_resolution);
    s.field("width_factor", cfg.width_factor);
    s.field("unified_channels", cfg.unified_channels);
    s.field("slices", cfg.slices);
    s.field("variant", cfg.variant);
    s.finish();
  }
  if (const json* t = root.subsection("train")) {
    Section s(*t, "train");
    s.field("lr", cfg.train.lr);
    s.field("epochs", cfg.train.epochs);
    s.field("decay_epoch", cfg.train.decay_epoch);
    s.field("decay_factor", cfg.train.decay_factor);
    s.field("seed", cfg.train.seed);
    s.field("augment", cfg.train.augment);
    s.field("max_iterations", cfg.train.max_iterations);
    s.finish();
  }
  if (const json* d = root.subsection("data")) {
    Section s(*d, "data");
    s.field("path", cfg.data_path);
    if (const json* sy = s.subsection("synth")) {
      Section ss(*sy, "data.synth");
      ss.field("resolution", cfg.synth.resolution);
      ss.field("slices", cfg.synth.slices);
      ss.field("focal_depths", cfg.synth.focal_depths);
      ss.field("r_max", cfg.synth.r_max);
      ss.field("shape_count", cfg.synth.shape_count);
      ss.field("min_size", cfg.synth.min_size);
      ss.field("max_size", cfg.synth.max_size);
      ss.field("seed", cfg.synth.seed);
      ss.field("count", cfg.synth.count);
      ss.finish();
    }
    s.finish();
  }
  if (const json* io = root.subsection("io")) {
    Section s(*io, "io");
    s.field("checkpoint", cfg.checkpoint_path);
    s.field("report", cfg.report_path);
    s.finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

RunConfig RunConfig::preset(const std::string& name) {
  RunConfig cfg;
  if (name == "paper") {
    cfg.synth.resolution = cfg.input_resolution;
    cfg.synth.count = 16;
    return cfg;
  }
  if (name == "toy") {
    cfg.input_resolution = 64;
    cfg.width_factor = 0.25;
    cfg.synth.resolution = 64;
    cfg.synth.count = 4;
    cfg.synth.seed = 7;
    // The full-scale rate cannot move a freshly initialized net within the
    // toy iteration budget, so the preset raises it and drops augmentation
    // to let the tiny set be memorized.
    cfg.train.lr = 2e-3f;
    cfg.train.augment = false;
    cfg.train.epochs = 75;  // 4 samples -> 300 iterations
    cfg.train.max_iterations = 300;
    return cfg;
  }
  throw ConfigError("unknown preset: " + name + " (expected toy|paper)");
}

}  // namespace gfrnet
