#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "gleason/error.hpp"

namespace gleason {

// Patch- and pixel-level tissue classes. Values double as class indices and
// as annotation raster values.
enum class Grade : std::uint8_t { NC = 0, GG3 = 1, GG4 = 2, GG5 = 3 };

inline constexpr std::size_t kNumGrades = 4;
inline constexpr std::uint8_t kUnannotated = 255;
inline constexpr std::array<Grade, kNumGrades> kAllGrades{Grade::NC, Grade::GG3, Grade::GG4, Grade::GG5};

inline constexpr int index_of(Grade g) { return static_cast<int>(g); }

inline Grade grade_from_index(int i) {
  if (i < 0 || i >= static_cast<int>(kNumGrades)) throw data_error("grade index out of range: " + std::to_string(i));
  return static_cast<Grade>(i);
}

// Pattern number on the Gleason scale; 0 for non-cancerous tissue.
inline constexpr int pattern_number(Grade g) { return g == Grade::NC ? 0 : index_of(g) + 2; }

inline std::string_view to_string(Grade g) {
  constexpr std::array<std::string_view, kNumGrades> names{"NC", "GG3", "GG4", "GG5"};
  return names[static_cast<std::size_t>(g)];
}

inline Grade parse_grade(std::string_view s) {
  for (Grade g : kAllGrades)
    if (to_string(g) == s) return g;
  throw data_error("unknown grade '" + std::string(s) + "'");
}

// Slide-level score. combined is 0 for a non-cancerous slide, else 6..10.
struct GleasonScore {
  Grade primary = Grade::NC;
  Grade secondary = Grade::NC;
  int combined = 0;

  friend bool operator==(const GleasonScore&, const GleasonScore&) = default;
};

}  // namespace gleason
