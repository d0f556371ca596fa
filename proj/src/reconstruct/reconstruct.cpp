#include "gleason/reconstruct/reconstruct.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "gleason/patchwork/png_io.hpp"

namespace gleason::reconstruct {

using patchwork::GrayImage;

std::array<double, 4> bilinear_weights(double fx, double fy) {
  return {(1 - fx) * (1 - fy), fx * (1 - fy), (1 - fx) * fy, fx * fy};
}

namespace {

struct Axis {
  std::vector<std::size_t> centers;

  // Node index pair and fractional offset for a pixel coordinate, clamped to
  // the outermost centers.
  void locate(std::size_t pixel, std::size_t& i0, std::size_t& i1, double& f) const {
    if (centers.size() == 1 || pixel <= centers.front()) {
      i0 = i1 = 0;
      f = 0.0;
      return;
    }
    if (pixel >= centers.back()) {
      i0 = i1 = centers.size() - 1;
      f = 0.0;
      return;
    }
    i1 = static_cast<std::size_t>(std::upper_bound(centers.begin(), centers.end(), pixel) - centers.begin());
    i0 = i1 - 1;
    f = static_cast<double>(pixel - centers[i0]) / static_cast<double>(centers[i1] - centers[i0]);
  }
};

Axis regular_axis(std::vector<std::size_t> values, const char* name) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  // fill gaps so that the node spacing is uniform
  if (values.size() >= 2) {
    std::size_t step = values[1] - values[0];
    for (std::size_t i = 2; i < values.size(); ++i) step = std::min(step, values[i] - values[i - 1]);
    for (std::size_t i = 1; i < values.size(); ++i)
      if ((values[i] - values[0]) % step != 0)
        throw data_error(std::string("patch centers do not form a regular grid along ") + name);
    Axis axis;
    for (std::size_t v = values.front(); v <= values.back(); v += step) axis.centers.push_back(v);
    return axis;
  }
  return Axis{values};
}

}  // namespace

ProbabilityMap probability_map(const std::vector<PatchPrediction>& predictions, std::size_t rows, std::size_t cols,
                               const GrayImage& tissue) {
  if (predictions.empty()) throw data_error("no patch predictions to interpolate");
  if (tissue.rows != rows || tissue.cols != cols) throw data_error("tissue mask does not match the slide size");
  std::vector<std::size_t> rs, cs;
  for (const auto& p : predictions) {
    rs.push_back(p.center_row);
    cs.push_back(p.center_col);
    double sum = 0;
    for (double v : p.probabilities) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw data_error("patch probabilities must be finite and non-negative");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-4) throw data_error("patch probabilities do not sum to one");
  }
  const Axis ry = regular_axis(rs, "rows");
  const Axis cx = regular_axis(cs, "columns");

  const std::size_t ny = ry.centers.size(), nx = cx.centers.size();
  std::vector<Probabilities> nodes(ny * nx, Probabilities{1.0, 0.0, 0.0, 0.0});
  for (const auto& p : predictions) {
    const auto i = static_cast<std::size_t>(std::lower_bound(ry.centers.begin(), ry.centers.end(), p.center_row) -
                                            ry.centers.begin());
    const auto j = static_cast<std::size_t>(std::lower_bound(cx.centers.begin(), cx.centers.end(), p.center_col) -
                                            cx.centers.begin());
    nodes[i * nx + j] = p.probabilities;
  }

  ProbabilityMap map;
  map.rows = rows;
  map.cols = cols;
  map.tissue = tissue;
  map.data.assign(kNumGrades * rows * cols, 0.0f);
  const auto n_rows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t ri = 0; ri < n_rows; ++ri) {
    const auto r = static_cast<std::size_t>(ri);
    std::size_t i0, i1;
    double fy;
    ry.locate(r, i0, i1, fy);
    for (std::size_t c = 0; c < cols; ++c) {
      std::size_t j0, j1;
      double fx;
      cx.locate(c, j0, j1, fx);
      const auto w = bilinear_weights(fx, fy);
      const Probabilities* corner[4] = {&nodes[i0 * nx + j0], &nodes[i0 * nx + j1], &nodes[i1 * nx + j0],
                                        &nodes[i1 * nx + j1]};
      Probabilities v{};
      double total = 0;
      for (std::size_t k = 0; k < kNumGrades; ++k) {
        for (std::size_t q = 0; q < 4; ++q) v[k] += w[q] * (*corner[q])[k];
        total += v[k];
      }
      for (std::size_t k = 0; k < kNumGrades; ++k) map.at(k, r, c) = static_cast<float>(v[k] / total);
    }
  }
  return map;
}

GrayImage argmax_map(const ProbabilityMap& map) {
  GrayImage out(map.rows, map.cols, 1);
  for (std::size_t r = 0; r < map.rows; ++r)
    for (std::size_t c = 0; c < map.cols; ++c) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < kNumGrades; ++k)
        if (map.at(k, r, c) >= map.at(best, r, c)) best = k;
      out.at(r, c) = static_cast<std::uint8_t>(best);
    }
  return out;
}

GradePercentages grade_percentages(const GrayImage& classes, const GrayImage& tissue) {
  if (classes.rows != tissue.rows || classes.cols != tissue.cols) throw data_error("class map and tissue mask differ in size");
  std::array<std::size_t, kNumGrades> counts{};
  std::size_t total = 0;
  for (std::size_t i = 0; i < classes.data.size(); ++i) {
    if (!tissue.data[i]) continue;
    const std::uint8_t k = classes.data[i];
    if (k >= kNumGrades) throw data_error("class map value " + std::to_string(k) + " is not a grade");
    ++counts[k];
    ++total;
  }
  if (total == 0) throw data_error("tissue mask is empty");
  GradePercentages p{};
  for (std::size_t k = 0; k < kNumGrades; ++k) p[k] = static_cast<double>(counts[k]) / static_cast<double>(total);
  return p;
}

void write_probability_pngs(const std::filesystem::path& dir, const ProbabilityMap& map) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < kNumGrades; ++k) {
    GrayImage img(map.rows, map.cols, 1);
    for (std::size_t r = 0; r < map.rows; ++r)
      for (std::size_t c = 0; c < map.cols; ++c)
        img.at(r, c) = static_cast<std::uint8_t>(std::lround(std::clamp(map.at(k, r, c), 0.0f, 1.0f) * 255.0f));
    patchwork::write_png(dir / ("probmap_" + std::string(to_string(static_cast<Grade>(k))) + ".png"), img);
  }
}

void write_classmap_png(const std::filesystem::path& path, const GrayImage& classes, const GrayImage& tissue) {
  GrayImage out = classes;
  for (std::size_t i = 0; i < out.data.size(); ++i)
    if (!tissue.data[i]) out.data[i] = kUnannotated;
  patchwork::write_png(path, out);
}

void write_percentages_json(const std::filesystem::path& path, const GradePercentages& p) {
  nlohmann::ordered_json j;
  for (std::size_t k = 0; k < kNumGrades; ++k) j[std::string(to_string(static_cast<Grade>(k)))] = p[k];
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

GradePercentages read_percentages_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path.string());
  GradePercentages p{};
  try {
    const auto j = nlohmann::json::parse(in);
    for (std::size_t k = 0; k < kNumGrades; ++k) p[k] = j.at(std::string(to_string(static_cast<Grade>(k)))).get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw data_error("bad percentages file " + path.string() + ": " + e.what());
  }
  return p;
}

}  // namespace gleason::reconstruct
