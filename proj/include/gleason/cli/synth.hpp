#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <vector>

#include "gleason/fsconv/fsconv.hpp"
#include "gleason/grade.hpp"
#include "gleason/patchwork/patchwork.hpp"

namespace gleason::synth {

// Procedural stand-ins for the tissue classes. Each has its own palette and
// dominant spatial period so that classes are separable by construction.
enum class Texture { NC, GG3, GG4, GG4_cribriform, GG5, glass };

Texture texture_for(Grade g);

struct TextureParams {
  double phase_x = 0.0;  // pixels
  double phase_y = 0.0;
  int tint[3] = {0, 0, 0};
  std::uint64_t noise_seed = 0;

  static TextureParams sample(std::mt19937_64& rng);
};

// Colour of texture `t` at absolute slide position (row, col).
void texture_pixel(Texture t, const TextureParams& p, std::size_t row, std::size_t col, std::uint8_t out[3]);

patchwork::RgbImage render_texture(Texture t, std::size_t rows, std::size_t cols, std::mt19937_64& rng);

struct SynthSpec {
  std::size_t slides_per_class = 2;
  std::size_t rows = 512;
  std::size_t cols = 512;
  std::size_t margin = 24;          // glass border around the tissue
  double benign_band = 0.15;        // unannotated NC strip in cancerous slides
  double cribriform_rate = 0.5;     // share of GG4-bearing slides with a cribriform region
  std::size_t slides_per_patient = 1;
  std::uint64_t seed = 1;
};

// Score classes covered: benign plus every (primary, secondary) pair of
// cancer grades.
std::vector<GleasonScore> score_classes();

patchwork::Slide make_slide(const GleasonScore& score, const SynthSpec& spec, std::uint64_t slide_seed,
                            std::string slide_id, std::string patient_id);
std::vector<patchwork::Slide> make_slides(const SynthSpec& spec);
// Writes bundles as <root>/<slide_id>/...; returns the ids in order.
std::vector<std::string> write_slides(const std::filesystem::path& root, const SynthSpec& spec);

// Patch-level sets rendered at `render_side` and resized to `out_side`.
fsconv::Dataset make_grade_patches(std::size_t per_class, std::size_t render_side, std::size_t out_side,
                                   std::uint64_t seed);
// Targets: 1 cribriform GG4, 0 plain GG4.
fsconv::Dataset make_cribriform_patches(std::size_t per_class, std::size_t render_side, std::size_t out_side,
                                        std::uint64_t seed);

}  // namespace gleason::synth
