#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gleason/grade.hpp"
#include "gleason/patchwork/image.hpp"

namespace gleason::patchwork {

using Histogram = std::array<std::uint64_t, 256>;

struct Slide {
  RgbImage image;
  GrayImage annotation;  // Grade index or kUnannotated
  GrayImage cribriform;  // nonzero marks cribriform tissue
  std::string slide_id;
  std::string patient_id;
  std::optional<GleasonScore> score;

  // A slide is cancerous when its score says so, or, lacking a score, when
  // any cancer grade is annotated.
  bool is_cancerous() const;
  void validate() const;
};

struct Patch {
  RgbImage pixels;
  std::size_t center_row = 0;
  std::size_t center_col = 0;
  double tissue_fraction = 0.0;
  Grade label = Grade::NC;
  bool labeled = true;  // false for windows kept only for inference
  bool cribriform = false;
  std::string slide_id;
  std::string patient_id;
  int fold = -1;
};

// Gray value is floor((r + g + b) / 3).
GrayImage to_gray(const RgbImage& img);
Histogram gray_histogram(const GrayImage& gray);

// Threshold t splits levels into [0, t] and [t + 1, 255]. Ties resolve to the
// floor of the mean of all maximizing thresholds.
int otsu_threshold(const Histogram& hist);

// 1 where gray <= Otsu threshold (tissue is darker than glass).
GrayImage tissue_mask(const RgbImage& img);

struct TileOptions {
  std::size_t patch_size = 512;
  double overlap = 0.5;
  double min_tissue = 0.2;
  double cribriform_floor = 0.05;
  // Keep tissue windows whose label would be discarded (for inference).
  bool keep_unlabeled = false;
};

std::size_t tile_stride(const TileOptions& opts);
// Window origins along one axis; a single centered (possibly negative)
// origin when dim < patch_size.
std::vector<std::ptrdiff_t> tile_origins(std::size_t dim, const TileOptions& opts);

struct LabelDecision {
  std::optional<Grade> label;  // empty means discard
  bool cribriform = false;
};

LabelDecision assign_label(const GrayImage& annotation_window, const GrayImage& cribriform_window,
                           bool slide_is_cancerous, double cribriform_floor = 0.05);

std::vector<Patch> tile_slide(const Slide& slide, const TileOptions& opts = {});

struct AugmentParams {
  int quarter_turns = 0;  // counter-clockwise
  int shift_rows = 0;
  int shift_cols = 0;
  float brightness = 1.0f;

  static AugmentParams sample(std::mt19937_64& rng, std::size_t side, bool include_brightness);
};

constexpr double kMaxShiftFraction = 0.10;
constexpr float kBrightnessLow = 0.9f;
constexpr float kBrightnessHigh = 1.1f;

FloatImage apply_augment(const FloatImage& patch, const AugmentParams& params);
FloatImage augment(const FloatImage& patch, std::mt19937_64& rng, bool include_brightness);

FloatImage resize_patch(const FloatImage& patch, std::size_t target);

// Per-channel CDF matching of source onto reference.
RgbImage histogram_match(const RgbImage& source, const RgbImage& reference);

using FoldAssignment = std::map<std::string, int>;
FoldAssignment make_folds(const std::vector<Patch>& patches, int n_folds, std::uint64_t seed);

// Slide bundle: <dir>/image.png, annotation.png, cribriform.png, meta.json.
Slide read_slide(const std::filesystem::path& dir);
void write_slide(const std::filesystem::path& dir, const Slide& slide);
// Bundles are the immediate subdirectories, in name order.
std::vector<std::filesystem::path> list_slides(const std::filesystem::path& root);

// Patch set on disk: patches/<index>.png plus manifest.jsonl.
void write_patch_set(const std::filesystem::path& dir, const std::vector<Patch>& patches);
std::vector<Patch> read_patch_set(const std::filesystem::path& dir);

}  // namespace gleason::patchwork
