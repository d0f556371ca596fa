#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <nlohmann/json.hpp>

namespace gleason::cli {

inline constexpr const char* kConfigEnv = "GLEASON_CONFIG";

struct SynthSection {
  std::size_t slides_per_class = 2;
  std::size_t rows = 512;
  std::size_t cols = 512;
  std::size_t margin = 24;
  double benign_band = 0.15;
  double cribriform_rate = 0.5;
  std::size_t slides_per_patient = 1;
};

struct TilingSection {
  std::size_t patch_size = 128;
  double overlap = 0.5;
  double min_tissue = 0.2;
  double cribriform_floor = 0.05;
};

struct FoldSection {
  int count = 5;
  int test_fold = 0;
};

struct GraderSection {
  std::string top_model = "GMP";
  std::size_t conv2_width = 124;
  std::string optimizer = "sgd";
  double learning_rate = 0.01;
  std::size_t batch_size = 32;
  std::size_t epochs = 12;
  bool augment = true;
  bool class_weighting = true;
};

struct CribriformSection {
  std::string freeze = "conv2";
  std::string optimizer = "sgd";
  double learning_rate = 0.001;
  std::size_t batch_size = 32;
  std::size_t epochs = 30;
  bool augment = true;
  bool brightness = true;
};

struct ScorerSection {
  double learning_rate = 0.01;
  std::size_t epochs = 2000;
  std::size_t batch_size = 32;
  double threshold = 0.10;
  bool leave_one_out = false;
};

struct ExplainSection {
  std::size_t cam_patches_per_class = 1;
  std::size_t am_layer = 3;  // 1-based convolution ordinal
  std::size_t am_filter = 0;
  std::size_t am_steps = 100;
  double am_step_size = 0.1;
};

struct StainSection {
  std::string reference_slide;  // slide id; empty = first slide
  bool enabled = false;
};

struct PipelineConfig {
  std::string run_dir = "run";
  std::string slides_dir;  // empty: <run_dir>/slides
  std::uint64_t seed = 1;
  std::size_t input_side = 64;
  SynthSection synth;
  TilingSection tiling;
  FoldSection folds;
  GraderSection grader;
  CribriformSection cribriform;
  ScorerSection scorer;
  ExplainSection explain;
  StainSection stain_norm;

  std::filesystem::path run_path() const { return run_dir; }
  std::filesystem::path slides_path() const { return slides_dir.empty() ? run_path() / "slides" : std::filesystem::path(slides_dir); }
};

nlohmann::ordered_json to_json(const PipelineConfig& config);
// Strict: unknown keys and wrong types are usage errors. Missing keys keep
// their defaults.
PipelineConfig from_json(const nlohmann::json& j);

// Defaults, then the file (explicit path, else $GLEASON_CONFIG if set), then
// overrides given as dotted paths ("grader.epochs") with JSON or bare string
// values.
PipelineConfig load_config(const std::string& path, const std::map<std::string, std::string>& overrides);

void validate(const PipelineConfig& config);

}  // namespace gleason::cli
