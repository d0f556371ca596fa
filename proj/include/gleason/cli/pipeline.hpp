#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gleason/cli/config.hpp"
#include "gleason/patchwork/patchwork.hpp"

namespace gleason::cli {

// Stages of the slide pipeline. Each reads its inputs from and writes its
// outputs under the run directory, so any stage can be resumed from disk.
class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config);

  void synth();
  void tile();
  void train_grader();
  void train_cribriform();
  void predict();
  void reconstruct();
  void percentages();
  void train_scorer();
  void score();
  void evaluate();
  void explain_cam();
  void explain_am();
  void stain_norm();
  void run_all();

  const PipelineConfig& config() const { return config_; }
  std::filesystem::path path(const std::string& relative) const;

 private:
  void begin(const std::string& stage);
  void finish(const std::string& stage, std::uint64_t seed);
  std::filesystem::path require(const std::string& stage, const std::string& relative, const std::string& producer) const;
  std::vector<patchwork::Patch> load_patches(const std::string& stage) const;
  std::vector<patchwork::Slide> load_slides(const std::string& stage) const;

  PipelineConfig config_;
};

// Throws a data error if any patient appears in more than one fold or a
// patch has no fold.
void assert_patient_exclusive(const std::vector<patchwork::Patch>& patches);

// Stage names in run order.
const std::vector<std::string>& stage_names();

}  // namespace gleason::cli
