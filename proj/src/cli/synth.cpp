#include "gleason/cli/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gleason::synth {

using patchwork::GrayImage;
using patchwork::RgbImage;

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Uniform in [0, 1) from a pixel position.
double hash01(std::uint64_t seed, std::size_t row, std::size_t col) {
  return static_cast<double>(mix(seed ^ mix((static_cast<std::uint64_t>(row) << 32) | col)) >> 11) * 0x1.0p-53;
}

struct Palette {
  double dark[3];
  double light[3];
};

// Tissue palettes stay darker than glass (gray <= ~200) so Otsu separates them.
constexpr Palette kNC{{165, 115, 155}, {215, 170, 200}};
constexpr Palette kGG3{{110, 60, 140}, {190, 135, 195}};
constexpr Palette kGG4{{80, 40, 115}, {165, 105, 175}};
constexpr Palette kGG5{{45, 20, 75}, {130, 75, 140}};
constexpr double kLumen[3] = {205, 185, 210};
constexpr double kGlass[3] = {240, 238, 242};

double wave(double x, double period) { return std::sin(2.0 * std::numbers::pi * x / period); }

}  // namespace

Texture texture_for(Grade g) {
  switch (g) {
    case Grade::NC: return Texture::NC;
    case Grade::GG3: return Texture::GG3;
    case Grade::GG4: return Texture::GG4;
    case Grade::GG5: return Texture::GG5;
  }
  return Texture::glass;
}

TextureParams TextureParams::sample(std::mt19937_64& rng) {
  TextureParams p;
  std::uniform_real_distribution<double> phase(0.0, 64.0);
  std::uniform_int_distribution<int> tint(-8, 8);
  p.phase_x = phase(rng);
  p.phase_y = phase(rng);
  for (int& t : p.tint) t = tint(rng);
  p.noise_seed = rng();
  return p;
}

void texture_pixel(Texture t, const TextureParams& p, std::size_t row, std::size_t col, std::uint8_t out[3]) {
  const double x = static_cast<double>(col) + p.phase_x;
  const double y = static_cast<double>(row) + p.phase_y;
  const double noise = hash01(p.noise_seed, row, col) - 0.5;
  double v = 0.5;
  const Palette* pal = nullptr;
  bool lumen = false;
  switch (t) {
    case Texture::glass:
      for (int c = 0; c < 3; ++c) out[c] = static_cast<std::uint8_t>(kGlass[c] + 6.0 * noise);
      return;
    case Texture::NC:
      // broad, smooth stroma
      v = 0.5 + 0.5 * wave(x, 32) * wave(y, 32);
      pal = &kNC;
      break;
    case Texture::GG3:
      // diagonal glands, period 16
      v = 0.5 + 0.5 * wave((x + y) / std::numbers::sqrt2, 16);
      pal = &kGG3;
      break;
    case Texture::GG4:
    case Texture::GG4_cribriform: {
      v = 0.5 + 0.5 * wave(x, 8) * wave(y, 8);
      pal = &kGG4;
      if (t == Texture::GG4_cribriform) {
        // sieve of round lumina on a 12-pixel lattice
        const double dx = std::fmod(x, 12.0) - 6.0, dy = std::fmod(y, 12.0) - 6.0;
        lumen = dx * dx + dy * dy <= 2.6 * 2.6;
      }
      break;
    }
    case Texture::GG5:
      // isolated cells: per-pixel speckle
      v = hash01(p.noise_seed ^ 0x5bd1e995ULL, row / 2, col / 2);
      pal = &kGG5;
      break;
  }
  for (int c = 0; c < 3; ++c) {
    double value = lumen ? kLumen[c] : pal->dark[c] + v * (pal->light[c] - pal->dark[c]);
    value += p.tint[c] + 10.0 * noise;
    out[c] = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
  }
}

RgbImage render_texture(Texture t, std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
  const TextureParams p = TextureParams::sample(rng);
  RgbImage img(rows, cols, 3);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) texture_pixel(t, p, r, c, &img.at(r, c, 0));
  return img;
}

std::vector<GleasonScore> score_classes() {
  std::vector<GleasonScore> out{{Grade::NC, Grade::NC, 0}};
  for (Grade p : {Grade::GG3, Grade::GG4, Grade::GG5})
    for (Grade s : {Grade::GG3, Grade::GG4, Grade::GG5}) out.push_back({p, s, pattern_number(p) + pattern_number(s)});
  return out;
}

patchwork::Slide make_slide(const GleasonScore& score, const SynthSpec& spec, std::uint64_t slide_seed,
                            std::string slide_id, std::string patient_id) {
  if (spec.rows <= 2 * spec.margin || spec.cols <= 2 * spec.margin) throw usage_error("slide too small for its margin");
  std::mt19937_64 rng(slide_seed);
  patchwork::Slide s;
  s.slide_id = std::move(slide_id);
  s.patient_id = std::move(patient_id);
  s.score = score;
  s.image = RgbImage(spec.rows, spec.cols, 3);
  s.annotation = GrayImage(spec.rows, spec.cols, 1, kUnannotated);
  s.cribriform = GrayImage(spec.rows, spec.cols, 1, 0);

  const bool cancerous = score.primary != Grade::NC;
  const std::size_t c0 = spec.margin, c1 = spec.cols - spec.margin;
  const std::size_t width = c1 - c0;
  // vertical bands: [primary | secondary | benign]; primary takes the larger share
  std::size_t benign = cancerous ? static_cast<std::size_t>(spec.benign_band * static_cast<double>(width)) : width;
  const std::size_t cancer = width - benign;
  std::size_t primary_w = cancer;
  if (cancerous && score.secondary != score.primary) {
    const double share = std::uniform_real_distribution<double>(0.55, 0.7)(rng);
    primary_w = static_cast<std::size_t>(share * static_cast<double>(cancer));
  }
  const bool with_crib = cancerous && (score.primary == Grade::GG4 || score.secondary == Grade::GG4) &&
                         std::uniform_real_distribution<double>(0.0, 1.0)(rng) < spec.cribriform_rate;

  struct Band {
    std::size_t begin, end;
    Grade grade;
    bool annotated;
  };
  std::vector<Band> bands;
  if (cancerous) {
    bands.push_back({c0, c0 + primary_w, score.primary, true});
    if (primary_w < cancer) bands.push_back({c0 + primary_w, c0 + cancer, score.secondary, true});
    if (benign > 0) bands.push_back({c0 + cancer, c1, Grade::NC, false});
  } else {
    bands.push_back({c0, c1, Grade::NC, true});
  }

  const TextureParams glass = TextureParams::sample(rng);
  std::vector<TextureParams> params;
  for (std::size_t i = 0; i < bands.size(); ++i) params.push_back(TextureParams::sample(rng));
  const TextureParams crib_params = TextureParams::sample(rng);
  const std::size_t mid_row = spec.rows / 2;

  for (std::size_t r = 0; r < spec.rows; ++r) {
    for (std::size_t c = 0; c < spec.cols; ++c) {
      std::uint8_t* px = &s.image.at(r, c, 0);
      const bool inside = r >= spec.margin && r < spec.rows - spec.margin && c >= c0 && c < c1;
      if (!inside) {
        texture_pixel(Texture::glass, glass, r, c, px);
        continue;
      }
      std::size_t b = 0;
      while (c >= bands[b].end) ++b;
      const Band& band = bands[b];
      // the lower half of the first GG4 band is cribriform when flagged
      const bool crib = with_crib && band.grade == Grade::GG4 && r >= mid_row &&
                        (b == 0 || bands[0].grade != Grade::GG4);
      texture_pixel(crib ? Texture::GG4_cribriform : texture_for(band.grade), crib ? crib_params : params[b], r, c, px);
      if (band.annotated) s.annotation.at(r, c) = static_cast<std::uint8_t>(band.grade);
      if (crib) s.cribriform.at(r, c) = 1;
    }
  }
  return s;
}

std::vector<patchwork::Slide> make_slides(const SynthSpec& spec) {
  if (spec.slides_per_class == 0) throw usage_error("synthetic spec asks for zero slides");
  if (spec.slides_per_patient == 0) throw usage_error("slides per patient must be positive");
  const auto classes = score_classes();
  std::vector<patchwork::Slide> out;
  std::size_t index = 0;
  for (std::size_t k = 0; k < spec.slides_per_class; ++k) {
    for (const auto& score : classes) {
      char id[32], patient[32];
      std::snprintf(id, sizeof id, "slide_%04zu", index);
      std::snprintf(patient, sizeof patient, "patient_%04zu", index / spec.slides_per_patient);
      out.push_back(make_slide(score, spec, mix(spec.seed + index), id, patient));
      ++index;
    }
  }
  return out;
}

std::vector<std::string> write_slides(const std::filesystem::path& root, const SynthSpec& spec) {
  std::vector<std::string> ids;
  for (const auto& s : make_slides(spec)) {
    patchwork::write_slide(root / s.slide_id, s);
    ids.push_back(s.slide_id);
  }
  return ids;
}

namespace {

fsconv::Dataset render_set(const std::vector<std::pair<Texture, int>>& classes, std::size_t per_class,
                           std::size_t render_side, std::size_t out_side, std::uint64_t seed) {
  fsconv::Dataset data;
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < per_class; ++i)
    for (const auto& [texture, target] : classes) {
      data.images.push_back(fsconv::prepare_input(render_texture(texture, render_side, render_side, rng), out_side));
      data.targets.push_back(target);
    }
  return data;
}

}  // namespace

fsconv::Dataset make_grade_patches(std::size_t per_class, std::size_t render_side, std::size_t out_side,
                                   std::uint64_t seed) {
  return render_set({{Texture::NC, 0}, {Texture::GG3, 1}, {Texture::GG4, 2}, {Texture::GG5, 3}}, per_class,
                    render_side, out_side, seed);
}

fsconv::Dataset make_cribriform_patches(std::size_t per_class, std::size_t render_side, std::size_t out_side,
                                        std::uint64_t seed) {
  return render_set({{Texture::GG4, 0}, {Texture::GG4_cribriform, 1}}, per_class, render_side, out_side, seed);
}

}  // namespace gleason::synth
