#include "gleason/cli/config.hpp"

#include <cstdlib>
#include <fstream>

#include "gleason/error.hpp"

namespace gleason::cli {

using nlohmann::json;
using nlohmann::ordered_json;

#define GLEASON_FIELDS_SYNTH(X) X(slides_per_class) X(rows) X(cols) X(margin) X(benign_band) X(cribriform_rate) X(slides_per_patient)
#define GLEASON_FIELDS_TILING(X) X(patch_size) X(overlap) X(min_tissue) X(cribriform_floor)
#define GLEASON_FIELDS_FOLDS(X) X(count) X(test_fold)
#define GLEASON_FIELDS_GRADER(X) \
  X(top_model) X(conv2_width) X(optimizer) X(learning_rate) X(batch_size) X(epochs) X(augment) X(class_weighting)
#define GLEASON_FIELDS_CRIB(X) \
  X(freeze) X(optimizer) X(learning_rate) X(batch_size) X(epochs) X(augment) X(brightness)
#define GLEASON_FIELDS_SCORER(X) X(learning_rate) X(epochs) X(batch_size) X(threshold) X(leave_one_out)
#define GLEASON_FIELDS_EXPLAIN(X) X(cam_patches_per_class) X(am_layer) X(am_filter) X(am_steps) X(am_step_size)
#define GLEASON_FIELDS_STAIN(X) X(reference_slide) X(enabled)

namespace {

template <typename S>
void read_field(const json& j, const char* section, const char* key, S& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<S>();
  } catch (const json::exception&) {
    throw usage_error(std::string("config field ") + section + "." + key + " has the wrong type");
  }
}

void reject_unknown(const json& j, const char* section, std::initializer_list<const char*> keys) {
  if (!j.is_object()) throw usage_error(std::string("config section '") + section + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    bool known = false;
    for (const char* key : keys) known |= k == key;
    if (!known) throw usage_error(std::string("unknown config field ") + (*section ? std::string(section) + "." : "") + k);
  }
}

#define GLEASON_WRITE(f) o[#f] = s.f;
#define GLEASON_NAME(f) #f,
#define GLEASON_READ(f) read_field(j, name, #f, s.f);

#define GLEASON_SECTION(Type, FIELDS)                              \
  ordered_json section_to_json(const Type& s) {                   \
    ordered_json o;                                                \
    FIELDS(GLEASON_WRITE)                                          \
    return o;                                                      \
  }                                                                \
  void section_from_json(const json& j, const char* name, Type& s) { \
    reject_unknown(j, name, {FIELDS(GLEASON_NAME)});               \
    FIELDS(GLEASON_READ)                                           \
  }

GLEASON_SECTION(SynthSection, GLEASON_FIELDS_SYNTH)
GLEASON_SECTION(TilingSection, GLEASON_FIELDS_TILING)
GLEASON_SECTION(FoldSection, GLEASON_FIELDS_FOLDS)
GLEASON_SECTION(GraderSection, GLEASON_FIELDS_GRADER)
GLEASON_SECTION(CribriformSection, GLEASON_FIELDS_CRIB)
GLEASON_SECTION(ScorerSection, GLEASON_FIELDS_SCORER)
GLEASON_SECTION(ExplainSection, GLEASON_FIELDS_EXPLAIN)
GLEASON_SECTION(StainSection, GLEASON_FIELDS_STAIN)

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception&) {
    return json(text);
  }
}

}  // namespace

ordered_json to_json(const PipelineConfig& c) {
  ordered_json j;
  j["run_dir"] = c.run_dir;
  j["slides_dir"] = c.slides_dir;
  j["seed"] = c.seed;
  j["input_side"] = c.input_side;
  j["synth"] = section_to_json(c.synth);
  j["tiling"] = section_to_json(c.tiling);
  j["folds"] = section_to_json(c.folds);
  j["grader"] = section_to_json(c.grader);
  j["cribriform"] = section_to_json(c.cribriform);
  j["scorer"] = section_to_json(c.scorer);
  j["explain"] = section_to_json(c.explain);
  j["stain_norm"] = section_to_json(c.stain_norm);
  return j;
}

PipelineConfig from_json(const json& j) {
  reject_unknown(j, "", {"run_dir", "slides_dir", "seed", "input_side", "synth", "tiling", "folds", "grader",
                         "cribriform", "scorer", "explain", "stain_norm"});
  PipelineConfig c;
  read_field(j, "", "run_dir", c.run_dir);
  read_field(j, "", "slides_dir", c.slides_dir);
  read_field(j, "", "seed", c.seed);
  read_field(j, "", "input_side", c.input_side);
  if (j.contains("synth")) section_from_json(j["synth"], "synth", c.synth);
  if (j.contains("tiling")) section_from_json(j["tiling"], "tiling", c.tiling);
  if (j.contains("folds")) section_from_json(j["folds"], "folds", c.folds);
  if (j.contains("grader")) section_from_json(j["grader"], "grader", c.grader);
  if (j.contains("cribriform")) section_from_json(j["cribriform"], "cribriform", c.cribriform);
  if (j.contains("scorer")) section_from_json(j["scorer"], "scorer", c.scorer);
  if (j.contains("explain")) section_from_json(j["explain"], "explain", c.explain);
  if (j.contains("stain_norm")) section_from_json(j["stain_norm"], "stain_norm", c.stain_norm);
  return c;
}

void validate(const PipelineConfig& c) {
  if (c.input_side < 8) throw usage_error("input_side must be at least 8");
  if (c.tiling.patch_size == 0) throw usage_error("tiling.patch_size must be positive");
  if (!(c.tiling.overlap >= 0.0 && c.tiling.overlap < 1.0)) throw usage_error("tiling.overlap must lie in [0, 1)");
  if (!(c.tiling.min_tissue >= 0.0 && c.tiling.min_tissue <= 1.0)) throw usage_error("tiling.min_tissue must lie in [0, 1]");
  if (c.folds.count < 2) throw usage_error("folds.count must be at least 2");
  if (c.folds.test_fold < 0 || c.folds.test_fold >= c.folds.count) throw usage_error("folds.test_fold out of range");
  if (c.synth.slides_per_class == 0) throw usage_error("synth.slides_per_class must be positive");
  if (c.grader.epochs == 0 || c.cribriform.epochs == 0 || c.scorer.epochs == 0) throw usage_error("epochs must be positive");
  if (!(c.scorer.threshold > 0.0 && c.scorer.threshold <= 1.0)) throw usage_error("scorer.threshold must lie in (0, 1]");
}

PipelineConfig load_config(const std::string& path, const std::map<std::string, std::string>& overrides) {
  json j = json::object();
  std::string file = path;
  if (file.empty())
    if (const char* env = std::getenv(kConfigEnv); env && *env) file = env;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw usage_error("cannot open config file " + file);
    try {
      j = json::parse(in);
    } catch (const json::exception& e) {
      throw usage_error("config file " + file + " is not valid JSON: " + e.what());
    }
  }
  for (const auto& [key, value] : overrides) {
    json::json_pointer ptr;
    std::size_t start = 0;
    while (true) {
      const auto dot = key.find('.', start);
      ptr /= key.substr(start, dot - start);
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    j[ptr] = parse_value(value);
  }
  PipelineConfig c = from_json(j);
  validate(c);
  return c;
}

}  // namespace gleason::cli
