#include "gleason/patchwork/patchwork.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "gleason/patchwork/png_io.hpp"

namespace gleason::patchwork {

namespace fs = std::filesystem;
using json = nlohmann::json;

bool Slide::is_cancerous() const {
  if (score) return score->primary != Grade::NC;
  return std::any_of(annotation.data.begin(), annotation.data.end(),
                     [](std::uint8_t v) { return v >= 1 && v < kNumGrades; });
}

void Slide::validate() const {
  if (image.channels != 3) throw data_error("slide " + slide_id + ": image must be RGB");
  if (!image.same_size(annotation) || !image.same_size(cribriform))
    throw data_error("slide " + slide_id + ": image and masks differ in size");
  for (std::uint8_t v : annotation.data)
    if (v >= kNumGrades && v != kUnannotated)
      throw data_error("slide " + slide_id + ": annotation value " + std::to_string(v) + " outside {0,1,2,3,255}");
}

GrayImage to_gray(const RgbImage& img) {
  if (img.channels != 3) throw data_error("to_gray: expected an RGB image");
  GrayImage g(img.rows, img.cols, 1);
  for (std::size_t i = 0; i < img.pixels(); ++i) {
    const unsigned sum = img.data[3 * i] + img.data[3 * i + 1] + img.data[3 * i + 2];
    g.data[i] = static_cast<std::uint8_t>(sum / 3);
  }
  return g;
}

Histogram gray_histogram(const GrayImage& gray) {
  Histogram h{};
  for (std::uint8_t v : gray.data) ++h[v];
  return h;
}

namespace {

// Little-endian base-2^32 magnitude, enough for the products below.
using Wide = std::array<std::uint32_t, 16>;

Wide wide_from(unsigned __int128 v) {
  Wide w{};
  for (std::size_t i = 0; i < 4; ++i) w[i] = static_cast<std::uint32_t>(v >> (32 * i));
  return w;
}

Wide wide_mul(const Wide& a, const Wide& b) {
  Wide out{};
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::uint64_t carry = 0;
    for (std::size_t j = 0; i + j < out.size(); ++j) {
      const std::uint64_t cur = out[i + j] + static_cast<std::uint64_t>(a[i]) * b[j] + carry;
      out[i + j] = static_cast<std::uint32_t>(cur);
      carry = cur >> 32;
    }
  }
  return out;
}

int wide_cmp(const Wide& a, const Wide& b) {
  for (std::size_t i = a.size(); i-- > 0;) {
    if (a[i] != b[i]) return a[i] < b[i] ? -1 : 1;
  }
  return 0;
}

// Between-class variance of threshold t is proportional to D^2 / (n0 n1) with
// D = N*S0 - n0*S. Candidates are compared exactly by cross-multiplying.
struct OtsuScore {
  unsigned __int128 d_abs = 0;
  unsigned __int128 n0n1 = 1;
};

int compare(const OtsuScore& a, const OtsuScore& b) {
  const Wide lhs = wide_mul(wide_mul(wide_from(a.d_abs), wide_from(a.d_abs)), wide_from(b.n0n1));
  const Wide rhs = wide_mul(wide_mul(wide_from(b.d_abs), wide_from(b.d_abs)), wide_from(a.n0n1));
  return wide_cmp(lhs, rhs);
}

}  // namespace

int otsu_threshold(const Histogram& hist) {
  unsigned __int128 total = 0, sum = 0;
  int distinct = 0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    total += hist[i];
    sum += static_cast<unsigned __int128>(hist[i]) * i;
    if (hist[i] > 0) ++distinct;
  }
  if (distinct < 2) throw data_error("degenerate histogram");

  OtsuScore best{};
  std::vector<int> maximizers;
  unsigned __int128 n0 = 0, s0 = 0;
  for (int t = 0; t < 255; ++t) {
    n0 += hist[static_cast<std::size_t>(t)];
    s0 += static_cast<unsigned __int128>(hist[static_cast<std::size_t>(t)]) * static_cast<unsigned>(t);
    const unsigned __int128 n1 = total - n0;
    if (n0 == 0 || n1 == 0) continue;
    const unsigned __int128 a = total * s0, b = n0 * sum;
    const OtsuScore cur{a > b ? a - b : b - a, n0 * n1};
    const int c = maximizers.empty() ? 1 : compare(cur, best);
    if (c > 0) {
      best = cur;
      maximizers.assign(1, t);
    } else if (c == 0) {
      maximizers.push_back(t);
    }
  }
  const long total_t = std::accumulate(maximizers.begin(), maximizers.end(), 0L);
  return static_cast<int>(total_t / static_cast<long>(maximizers.size()));
}

GrayImage tissue_mask(const RgbImage& img) {
  const GrayImage gray = to_gray(img);
  const int t = otsu_threshold(gray_histogram(gray));
  GrayImage mask(gray.rows, gray.cols, 1);
  for (std::size_t i = 0; i < gray.data.size(); ++i) mask.data[i] = gray.data[i] <= t ? 1 : 0;
  return mask;
}

std::size_t tile_stride(const TileOptions& opts) {
  if (opts.patch_size == 0) throw usage_error("patch size must be positive");
  if (!(opts.overlap >= 0.0 && opts.overlap < 1.0)) throw usage_error("overlap must lie in [0, 1)");
  const auto stride = static_cast<std::size_t>(std::llround(static_cast<double>(opts.patch_size) * (1.0 - opts.overlap)));
  return std::max<std::size_t>(1, stride);
}

std::vector<std::ptrdiff_t> tile_origins(std::size_t dim, const TileOptions& opts) {
  const std::size_t stride = tile_stride(opts);
  const auto p = static_cast<std::ptrdiff_t>(opts.patch_size);
  const auto d = static_cast<std::ptrdiff_t>(dim);
  if (d < p) return {-((p - d) / 2)};
  std::vector<std::ptrdiff_t> out;
  const std::size_t count = (dim - opts.patch_size) / stride + 1;
  for (std::size_t i = 0; i < count; ++i) out.push_back(static_cast<std::ptrdiff_t>(i * stride));
  return out;
}

LabelDecision assign_label(const GrayImage& annotation_window, const GrayImage& cribriform_window,
                           bool slide_is_cancerous, double cribriform_floor) {
  std::array<std::size_t, kNumGrades> counts{};
  std::size_t annotated = 0, crib = 0;
  for (std::size_t i = 0; i < annotation_window.data.size(); ++i) {
    const std::uint8_t v = annotation_window.data[i];
    if (v == kUnannotated) continue;
    if (v < kNumGrades) ++counts[v];
    ++annotated;
    if (!cribriform_window.data.empty() && cribriform_window.data[i] != 0) ++crib;
  }
  LabelDecision out;
  std::size_t best = 0;
  for (std::size_t g = 1; g < kNumGrades; ++g) {
    // >= so that ties go to the higher grade
    if (counts[g] > 0 && counts[g] >= best) {
      best = counts[g];
      out.label = static_cast<Grade>(g);
    }
  }
  if (!out.label) {
    if (!slide_is_cancerous) out.label = Grade::NC;
    return out;
  }
  out.cribriform = *out.label == Grade::GG4 && annotated > 0 &&
                   static_cast<double>(crib) >= cribriform_floor * static_cast<double>(annotated) && crib > 0;
  return out;
}

std::vector<Patch> tile_slide(const Slide& slide, const TileOptions& opts) {
  slide.validate();
  const GrayImage mask = tissue_mask(slide.image);
  const bool cancerous = slide.is_cancerous();
  const auto rows = tile_origins(slide.image.rows, opts);
  const auto cols = tile_origins(slide.image.cols, opts);
  const std::size_t p = opts.patch_size;
  const auto n = static_cast<std::ptrdiff_t>(rows.size() * cols.size());

  std::vector<std::optional<Patch>> slots(static_cast<std::size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    const std::ptrdiff_t top = rows[static_cast<std::size_t>(k) / cols.size()];
    const std::ptrdiff_t left = cols[static_cast<std::size_t>(k) % cols.size()];
    const GrayImage mask_win = extract_window(mask, top, left, p);
    const auto tissue = static_cast<std::size_t>(std::count(mask_win.data.begin(), mask_win.data.end(), 1));
    const double fraction = static_cast<double>(tissue) / static_cast<double>(p * p);
    if (fraction < opts.min_tissue) continue;
    // padding outside the slide counts as unannotated
    GrayImage ann = extract_window(slide.annotation, top, left, p);
    for (std::size_t r = 0; r < p; ++r)
      for (std::size_t c = 0; c < p; ++c) {
        const std::ptrdiff_t sr = top + static_cast<std::ptrdiff_t>(r), sc = left + static_cast<std::ptrdiff_t>(c);
        if (sr < 0 || sc < 0 || sr >= static_cast<std::ptrdiff_t>(slide.image.rows) ||
            sc >= static_cast<std::ptrdiff_t>(slide.image.cols))
          ann.at(r, c) = kUnannotated;
      }
    const LabelDecision decision =
        assign_label(ann, extract_window(slide.cribriform, top, left, p), cancerous, opts.cribriform_floor);
    if (!decision.label && !opts.keep_unlabeled) continue;
    Patch patch;
    patch.pixels = extract_window(slide.image, top, left, p);
    patch.center_row = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, top + static_cast<std::ptrdiff_t>(p / 2)));
    patch.center_col = static_cast<std::size_t>(std::max<std::ptrdiff_t>(0, left + static_cast<std::ptrdiff_t>(p / 2)));
    patch.tissue_fraction = fraction;
    patch.label = decision.label.value_or(Grade::NC);
    patch.labeled = decision.label.has_value();
    patch.cribriform = decision.cribriform;
    patch.slide_id = slide.slide_id;
    patch.patient_id = slide.patient_id;
    slots[static_cast<std::size_t>(k)] = std::move(patch);
  }
  std::vector<Patch> out;
  for (auto& s : slots)
    if (s) out.push_back(std::move(*s));
  return out;
}

AugmentParams AugmentParams::sample(std::mt19937_64& rng, std::size_t side, bool include_brightness) {
  AugmentParams p;
  const int max_shift = static_cast<int>(std::floor(kMaxShiftFraction * static_cast<double>(side)));
  p.quarter_turns = std::uniform_int_distribution<int>(0, 3)(rng);
  std::uniform_int_distribution<int> shift(-max_shift, max_shift);
  p.shift_rows = shift(rng);
  p.shift_cols = shift(rng);
  if (include_brightness) p.brightness = std::uniform_real_distribution<float>(kBrightnessLow, kBrightnessHigh)(rng);
  return p;
}

namespace {

std::size_t reflect101(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  i %= period;
  if (i < 0) i += period;
  if (i >= static_cast<std::ptrdiff_t>(n)) i = period - i;
  return static_cast<std::size_t>(i);
}

}  // namespace

FloatImage apply_augment(const FloatImage& patch, const AugmentParams& params) {
  if (patch.rows != patch.cols) throw data_error("augment: patch must be square");
  const std::size_t n = patch.rows;
  const int turns = ((params.quarter_turns % 4) + 4) % 4;
  FloatImage out(n, n, patch.channels);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      // undo the translation, then the rotation, to find the source pixel
      const std::size_t tr = reflect101(static_cast<std::ptrdiff_t>(r) - params.shift_rows, n);
      const std::size_t tc = reflect101(static_cast<std::ptrdiff_t>(c) - params.shift_cols, n);
      std::size_t sr = tr, sc = tc;
      switch (turns) {
        case 1: sr = tc; sc = n - 1 - tr; break;
        case 2: sr = n - 1 - tr; sc = n - 1 - tc; break;
        case 3: sr = n - 1 - tc; sc = tr; break;
        default: break;
      }
      for (std::size_t ch = 0; ch < patch.channels; ++ch) {
        float v = patch.at(sr, sc, ch);
        if (params.brightness != 1.0f) v = std::clamp(v * params.brightness, 0.0f, 1.0f);
        out.at(r, c, ch) = v;
      }
    }
  }
  return out;
}

FloatImage augment(const FloatImage& patch, std::mt19937_64& rng, bool include_brightness) {
  return apply_augment(patch, AugmentParams::sample(rng, patch.rows, include_brightness));
}

FloatImage resize_patch(const FloatImage& patch, std::size_t target) {
  if (patch.rows == target && patch.cols == target) return patch;
  return resize_bilinear(patch, target, target);
}

RgbImage histogram_match(const RgbImage& source, const RgbImage& reference) {
  if (source.channels != 3 || reference.channels != 3) throw data_error("histogram_match: images must be RGB");
  if (source.pixels() == 0 || reference.pixels() == 0) throw data_error("histogram_match: empty image");
  RgbImage out = source;
  const auto ns = static_cast<unsigned __int128>(source.pixels());
  const auto nr = static_cast<unsigned __int128>(reference.pixels());
  for (std::size_t ch = 0; ch < 3; ++ch) {
    std::array<std::uint64_t, 256> cs{}, cr{};
    for (std::size_t i = 0; i < source.pixels(); ++i) ++cs[source.data[3 * i + ch]];
    for (std::size_t i = 0; i < reference.pixels(); ++i) ++cr[reference.data[3 * i + ch]];
    for (std::size_t v = 1; v < 256; ++v) {
      cs[v] += cs[v - 1];
      cr[v] += cr[v - 1];
    }
    std::array<std::uint8_t, 256> lut{};
    std::size_t u = 0;
    for (std::size_t v = 0; v < 256; ++v) {
      // CDF_ref(u) >= CDF_src(v), compared as cr[u]/nr >= cs[v]/ns
      while (u < 255 && cr[u] * ns < cs[v] * nr) ++u;
      lut[v] = static_cast<std::uint8_t>(u);
    }
    for (std::size_t i = 0; i < source.pixels(); ++i) out.data[3 * i + ch] = lut[source.data[3 * i + ch]];
  }
  return out;
}

FoldAssignment make_folds(const std::vector<Patch>& patches, int n_folds, std::uint64_t seed) {
  if (n_folds < 1) throw usage_error("number of folds must be positive");
  std::map<std::string, std::array<std::size_t, kNumGrades>> per_patient;
  std::array<std::size_t, kNumGrades> class_totals{};
  for (const Patch& p : patches) {
    ++per_patient[p.patient_id][static_cast<std::size_t>(p.label)];
    ++class_totals[static_cast<std::size_t>(p.label)];
  }
  if (per_patient.size() < static_cast<std::size_t>(n_folds))
    throw data_error("cannot split " + std::to_string(per_patient.size()) + " patients into " +
                     std::to_string(n_folds) + " folds");

  std::vector<std::string> order;
  for (const auto& [id, counts] : per_patient) order.push_back(id);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto size_of = [&](const std::string& id) {
    const auto& c = per_patient.at(id);
    return std::accumulate(c.begin(), c.end(), std::size_t{0});
  };
  std::stable_sort(order.begin(), order.end(),
                   [&](const std::string& a, const std::string& b) { return size_of(a) > size_of(b); });

  const double total = static_cast<double>(patches.size());
  std::vector<std::array<std::size_t, kNumGrades>> fold_counts(static_cast<std::size_t>(n_folds));
  std::vector<std::size_t> fold_sizes(static_cast<std::size_t>(n_folds), 0);
  FoldAssignment folds;
  for (const std::string& id : order) {
    const auto& pc = per_patient.at(id);
    const double size = static_cast<double>(size_of(id));
    std::size_t best = 0;
    double best_cost = 0.0;
    for (std::size_t f = 0; f < fold_counts.size(); ++f) {
      // growth of the squared per-class and total loads if the patient joins f
      double cost = size * static_cast<double>(fold_sizes[f]) / total;
      for (std::size_t c = 0; c < kNumGrades; ++c)
        if (class_totals[c] > 0)
          cost += static_cast<double>(pc[c]) * static_cast<double>(fold_counts[f][c]) / static_cast<double>(class_totals[c]);
      if (f == 0 || cost < best_cost) {
        best = f;
        best_cost = cost;
      }
    }
    for (std::size_t c = 0; c < kNumGrades; ++c) fold_counts[best][c] += pc[c];
    fold_sizes[best] += size_of(id);
    folds[id] = static_cast<int>(best);
  }
  return folds;
}

namespace {

json score_to_json(const std::optional<GleasonScore>& s) {
  if (!s) return nullptr;
  return {{"primary", to_string(s->primary)}, {"secondary", to_string(s->secondary)}, {"combined", s->combined}};
}

std::optional<GleasonScore> score_from_json(const json& j) {
  if (j.is_null()) return std::nullopt;
  GleasonScore s;
  s.primary = parse_grade(j.at("primary").get<std::string>());
  s.secondary = parse_grade(j.at("secondary").get<std::string>());
  s.combined = j.at("combined").get<int>();
  return s;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw data_error("malformed JSON in " + path.string() + ": " + e.what());
  }
}

}  // namespace

Slide read_slide(const fs::path& dir) {
  Slide s;
  const json meta = read_json_file(dir / "meta.json");
  try {
    s.slide_id = meta.value("slide_id", dir.filename().string());
    s.patient_id = meta.at("patient_id").get<std::string>();
    s.score = score_from_json(meta.value("score", json(nullptr)));
  } catch (const json::exception& e) {
    throw data_error("bad meta.json in " + dir.string() + ": " + e.what());
  }
  s.image = read_png(dir / "image.png", 3);
  s.annotation = read_png(dir / "annotation.png", 1);
  s.cribriform = read_png(dir / "cribriform.png", 1);
  s.validate();
  return s;
}

void write_slide(const fs::path& dir, const Slide& slide) {
  slide.validate();
  fs::create_directories(dir);
  write_png(dir / "image.png", slide.image);
  write_png(dir / "annotation.png", slide.annotation);
  GrayImage crib = slide.cribriform;
  for (auto& v : crib.data) v = v ? 255 : 0;
  write_png(dir / "cribriform.png", crib);
  const json meta = {{"slide_id", slide.slide_id}, {"patient_id", slide.patient_id}, {"score", score_to_json(slide.score)}};
  std::ofstream(dir / "meta.json") << meta.dump(2) << "\n";
}

std::vector<fs::path> list_slides(const fs::path& root) {
  if (!fs::is_directory(root)) throw data_error("slide directory not found: " + root.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root))
    if (e.is_directory() && fs::exists(e.path() / "meta.json")) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

void write_patch_set(const fs::path& dir, const std::vector<Patch>& patches) {
  fs::create_directories(dir / "patches");
  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw data_error("cannot write " + (dir / "manifest.jsonl").string());
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const Patch& p = patches[i];
    char name[32];
    std::snprintf(name, sizeof name, "%06zu.png", i);
    write_png(dir / "patches" / name, p.pixels);
    const json rec = {{"file", std::string("patches/") + name},
                      {"slide_id", p.slide_id},
                      {"patient_id", p.patient_id},
                      {"center", {p.center_row, p.center_col}},
                      {"label", to_string(p.label)},
                      {"cribriform", p.cribriform},
                      {"tissue_fraction", p.tissue_fraction},
                      {"fold", p.fold}};
    manifest << rec.dump() << "\n";
  }
}

std::vector<Patch> read_patch_set(const fs::path& dir) {
  std::ifstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw data_error("patch manifest not found in " + dir.string());
  std::vector<Patch> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(manifest, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json rec = json::parse(line);
      Patch p;
      p.pixels = read_png(dir / rec.at("file").get<std::string>(), 3);
      p.slide_id = rec.at("slide_id").get<std::string>();
      p.patient_id = rec.at("patient_id").get<std::string>();
      p.center_row = rec.at("center").at(0).get<std::size_t>();
      p.center_col = rec.at("center").at(1).get<std::size_t>();
      p.label = parse_grade(rec.at("label").get<std::string>());
      p.cribriform = rec.at("cribriform").get<bool>();
      p.tissue_fraction = rec.at("tissue_fraction").get<double>();
      p.fold = rec.value("fold", -1);
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw data_error("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace gleason::patchwork
