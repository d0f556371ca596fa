#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "gleason/reconstruct/reconstruct.hpp"

using namespace gleason;
using namespace gleason::reconstruct;
using patchwork::GrayImage;

namespace {

Probabilities random_distribution(std::mt19937_64& rng) {
  std::gamma_distribution<double> g(1.0, 1.0);
  Probabilities p{};
  double s = 0;
  for (auto& v : p) s += (v = g(rng));
  for (auto& v : p) v /= s;
  return p;
}

struct Grid {
  std::vector<PatchPrediction> preds;
  std::size_t rows, cols;
};

Grid random_grid(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> count(1, 6), stride(4, 20), offset(0, 10);
  Grid g;
  const std::size_t ny = count(rng), nx = count(rng), s = stride(rng), oy = offset(rng), ox = offset(rng);
  g.rows = oy + (ny - 1) * s + offset(rng) + 1;
  g.cols = ox + (nx - 1) * s + offset(rng) + 1;
  for (std::size_t i = 0; i < ny; ++i)
    for (std::size_t j = 0; j < nx; ++j) g.preds.push_back({oy + i * s, ox + j * s, random_distribution(rng)});
  return g;
}

}  // namespace

TEST_CASE("bilinear weights") {
  const auto w = bilinear_weights(0.25, 0.75);
  // node (x=0, y=1)
  CHECK(w[2] == doctest::Approx(0.5625).epsilon(1e-15));
  CHECK(w[0] + w[1] + w[2] + w[3] == doctest::Approx(1.0));

  // unit grid with a one-hot corner
  std::vector<PatchPrediction> preds{{0, 0, {1, 0, 0, 0}}, {0, 4, {1, 0, 0, 0}}, {4, 0, {0, 1, 0, 0}}, {4, 4, {1, 0, 0, 0}}};
  const auto map = probability_map(preds, 5, 5, GrayImage(5, 5, 1, 1));
  CHECK(map.at(1, 3, 1) == doctest::Approx(0.5625).epsilon(1e-6));
}

TEST_CASE("constant field stays constant") {
  const Probabilities p{0.1, 0.2, 0.3, 0.4};
  std::vector<PatchPrediction> preds;
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) preds.push_back({16 + 32 * i, 16 + 32 * j, p});
  const auto map = probability_map(preds, 100, 130, GrayImage(100, 130, 1, 1));
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t r = 0; r < 100; r += 7)
      for (std::size_t c = 0; c < 130; c += 5) CHECK(map.at(k, r, c) == doctest::Approx(p[k]).epsilon(1e-6));
  const auto classes = argmax_map(map);
  for (auto v : classes.data) CHECK(v == 3);
  const auto pct = grade_percentages(classes, map.tissue);
  CHECK(pct == GradePercentages{0, 0, 0, 1});
}

TEST_CASE("random grids: exact nodes, bounded, normalized") {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 100; ++trial) {
    const Grid g = random_grid(rng);
    const auto map = probability_map(g.preds, g.rows, g.cols, GrayImage(g.rows, g.cols, 1, 1));
    for (const auto& p : g.preds)
      for (std::size_t k = 0; k < 4; ++k) REQUIRE(map.at(k, p.center_row, p.center_col) == doctest::Approx(p.probabilities[k]).epsilon(1e-6));
    double worst = 0;
    for (std::size_t r = 0; r < g.rows; ++r)
      for (std::size_t c = 0; c < g.cols; ++c) {
        double s = 0;
        for (std::size_t k = 0; k < 4; ++k) s += map.at(k, r, c);
        worst = std::max(worst, std::abs(s - 1.0));
      }
    REQUIRE(worst < 1e-5);
    // bounds against the surrounding nodes, checked at interior pixels
    const std::size_t stride = g.preds.size() > 1 ? std::max(g.preds[1].center_col - g.preds[0].center_col,
                                                              g.preds.back().center_row - g.preds.front().center_row)
                                                  : 1;
    (void)stride;
    for (const auto& a : g.preds)
      for (const auto& b : g.preds) {
        if (b.center_row <= a.center_row || b.center_col <= a.center_col) continue;
        // a and b are opposite corners of a cell only when adjacent
        bool adjacent = true;
        for (const auto& q : g.preds)
          if ((q.center_row > a.center_row && q.center_row < b.center_row) ||
              (q.center_col > a.center_col && q.center_col < b.center_col))
            adjacent = false;
        if (!adjacent) continue;
        std::array<const PatchPrediction*, 4> corners{};
        std::size_t found = 0;
        for (const auto& q : g.preds)
          if ((q.center_row == a.center_row || q.center_row == b.center_row) &&
              (q.center_col == a.center_col || q.center_col == b.center_col))
            corners[found++] = &q;
        REQUIRE(found == 4);
        for (std::size_t r = a.center_row; r <= b.center_row; ++r)
          for (std::size_t c = a.center_col; c <= b.center_col; ++c)
            for (std::size_t k = 0; k < 4; ++k) {
              double lo = 1, hi = 0;
              for (auto* q : corners) {
                lo = std::min(lo, q->probabilities[k]);
                hi = std::max(hi, q->probabilities[k]);
              }
              REQUIRE(map.at(k, r, c) >= lo - 1e-6);
              REQUIRE(map.at(k, r, c) <= hi + 1e-6);
            }
      }
  }
}

TEST_CASE("pixels outside the centers use the nearest edge") {
  std::vector<PatchPrediction> preds{{10, 10, {1, 0, 0, 0}}, {10, 20, {0, 0, 1, 0}}};
  const auto map = probability_map(preds, 30, 30, GrayImage(30, 30, 1, 1));
  CHECK(map.at(0, 0, 0) == doctest::Approx(1.0));
  CHECK(map.at(2, 29, 29) == doctest::Approx(1.0));
  CHECK(map.at(2, 0, 15) == doctest::Approx(0.5));
}

TEST_CASE("missing grid nodes count as non-cancerous") {
  std::vector<PatchPrediction> preds{{0, 0, {0, 1, 0, 0}}, {0, 20, {0, 1, 0, 0}}};
  const auto map = probability_map(preds, 1, 21, GrayImage(1, 21, 1, 1));
  CHECK(map.at(1, 0, 10) == doctest::Approx(1.0));
  std::vector<PatchPrediction> gap{{0, 0, {0, 1, 0, 0}}, {0, 10, {0, 1, 0, 0}}, {0, 30, {0, 1, 0, 0}}};
  const auto gm = probability_map(gap, 1, 31, GrayImage(1, 31, 1, 1));
  CHECK(gm.at(0, 0, 20) == doctest::Approx(1.0));
  CHECK_THROWS(probability_map({}, 4, 4, GrayImage(4, 4, 1, 1)));
  std::vector<PatchPrediction> irregular{{0, 0, {1, 0, 0, 0}}, {0, 4, {1, 0, 0, 0}}, {0, 10, {1, 0, 0, 0}}};
  CHECK_THROWS_WITH(probability_map(irregular, 1, 11, GrayImage(1, 11, 1, 1)), doctest::Contains("regular grid"));
}

TEST_CASE("argmax ties go to the higher grade") {
  ProbabilityMap map;
  map.rows = 1;
  map.cols = 3;
  map.data = {0.1f, 0.4f, 0.25f, 0.2f, 0.4f, 0.25f, 0.6f, 0.1f, 0.25f, 0.1f, 0.1f, 0.25f};
  const auto cls = argmax_map(map);
  CHECK(cls.at(0, 0) == 2);
  CHECK(cls.at(0, 1) == 1);
  CHECK(cls.at(0, 2) == 3);
}

TEST_CASE("grade percentages over tissue only") {
  GrayImage cls(4, 4, 1), tissue(4, 4, 1, 1);
  for (std::size_t i = 0; i < 16; ++i) cls.data[i] = i < 8 ? 1 : 2;
  CHECK(grade_percentages(cls, tissue) == GradePercentages{0, 0.5, 0.5, 0});
  GrayImage nc(4, 4, 1, 0);
  CHECK(grade_percentages(nc, tissue) == GradePercentages{1, 0, 0, 0});

  GrayImage checker(6, 6, 1), mask_even(6, 6, 1, 0), mask_odd(6, 6, 1, 0);
  for (std::size_t r = 0; r < 6; ++r)
    for (std::size_t c = 0; c < 6; ++c) {
      const bool even = (r + c) % 2 == 0;
      checker.at(r, c) = even ? 1 : 3;
      (even ? mask_even : mask_odd).at(r, c) = 1;
    }
  CHECK(grade_percentages(checker, mask_even) == GradePercentages{0, 1, 0, 0});
  CHECK(grade_percentages(checker, mask_odd) == GradePercentages{0, 0, 0, 1});
  CHECK_THROWS_WITH(grade_percentages(checker, GrayImage(6, 6, 1, 0)), doctest::Contains("empty"));
}

TEST_CASE("percentages are stable under resolution doubling") {
  std::mt19937_64 rng(5);
  std::vector<PatchPrediction> coarse, fine;
  const std::size_t n = 8, stride = 64, offset = 32;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const auto p = random_distribution(rng);
      coarse.push_back({offset + i * stride, offset + j * stride, p});
      fine.push_back({2 * (offset + i * stride), 2 * (offset + j * stride), p});
    }
  const std::size_t side = offset * 2 + (n - 1) * stride;
  GrayImage tissue(side, side, 1, 0), tissue2(2 * side, 2 * side, 1, 0);
  for (std::size_t r = 0; r < side; ++r)
    for (std::size_t c = 0; c < side; ++c) tissue.at(r, c) = (r / 40 + c / 40) % 3 != 0;
  for (std::size_t r = 0; r < 2 * side; ++r)
    for (std::size_t c = 0; c < 2 * side; ++c) tissue2.at(r, c) = tissue.at(r / 2, c / 2);
  const auto a = grade_percentages(argmax_map(probability_map(coarse, side, side, tissue)), tissue);
  const auto b = grade_percentages(argmax_map(probability_map(fine, 2 * side, 2 * side, tissue2)), tissue2);
  for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(a[k] - b[k]) < 1e-3);
}
