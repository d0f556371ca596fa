#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "gleason/grade.hpp"
#include "gleason/patchwork/image.hpp"

namespace gleason::reconstruct {

using Probabilities = std::array<double, kNumGrades>;

struct PatchPrediction {
  std::size_t center_row = 0;
  std::size_t center_col = 0;
  Probabilities probabilities{};
};

// Class-major planes: value(c, r, col) = data[(c * rows + r) * cols + col].
struct ProbabilityMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> data;
  patchwork::GrayImage tissue;  // 1 = tissue

  float at(std::size_t c, std::size_t r, std::size_t col) const { return data[(c * rows + r) * cols + col]; }
  float& at(std::size_t c, std::size_t r, std::size_t col) { return data[(c * rows + r) * cols + col]; }
};

using GradePercentages = std::array<double, kNumGrades>;

// Weights of the four nodes (x0,y0), (x1,y0), (x0,y1), (x1,y1) for fractional
// offsets fx, fy in [0, 1].
std::array<double, 4> bilinear_weights(double fx, double fy);

// Centers must lie on a regular grid; grid nodes without a prediction (for
// example windows dropped for lack of tissue) count as non-cancerous.
ProbabilityMap probability_map(const std::vector<PatchPrediction>& predictions, std::size_t rows, std::size_t cols,
                               const patchwork::GrayImage& tissue);

// Per-pixel argmax; ties go to the higher grade.
patchwork::GrayImage argmax_map(const ProbabilityMap& map);

GradePercentages grade_percentages(const patchwork::GrayImage& classes, const patchwork::GrayImage& tissue);

// probmap_<class>.png, 8-bit scaled by 255.
void write_probability_pngs(const std::filesystem::path& dir, const ProbabilityMap& map);
// Class index per tissue pixel, 255 elsewhere.
void write_classmap_png(const std::filesystem::path& path, const patchwork::GrayImage& classes,
                        const patchwork::GrayImage& tissue);
void write_percentages_json(const std::filesystem::path& path, const GradePercentages& p);
GradePercentages read_percentages_json(const std::filesystem::path& path);

}  // namespace gleason::reconstruct
