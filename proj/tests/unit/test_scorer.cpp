#include <filesystem>
#include <random>

#include "doctest.h"
#include "gleason/scorer/scorer.hpp"

using namespace gleason;
using namespace gleason::scorer;

namespace {

constexpr std::array<Grade, 3> kCancer{Grade::GG3, Grade::GG4, Grade::GG5};

double frac(const GradePercentages& p, Grade g) { return p[static_cast<std::size_t>(g)]; }

// g beats h when its fraction is larger, or equal with a higher grade
bool beats_or_equals(const GradePercentages& p, Grade g, Grade h) {
  return frac(p, g) > frac(p, h) || (frac(p, g) == frac(p, h) && index_of(g) >= index_of(h));
}

// Declarative oracle: search every (primary, secondary) candidate and keep
// the one satisfying the defining conditions.
GleasonScore oracle(const GradePercentages& p, double t) {
  bool any = false;
  for (Grade g : kCancer) any |= frac(p, g) >= t;
  if (!any) return {Grade::NC, Grade::NC, 0};
  std::vector<GleasonScore> found;
  for (Grade a : kCancer)
    for (Grade b : kCancer) {
      bool a_top = true;
      for (Grade g : kCancer) a_top &= beats_or_equals(p, a, g);
      if (!a_top) continue;
      if (a == b) {
        bool rest_small = true;
        for (Grade g : kCancer)
          if (g != a) rest_small &= frac(p, g) < t;
        if (rest_small) found.push_back({a, a, 2 * pattern_number(a)});
        continue;
      }
      bool b_second = frac(p, b) >= t;
      for (Grade g : kCancer)
        if (g != a) b_second &= beats_or_equals(p, b, g);
      if (b_second) found.push_back({a, b, pattern_number(a) + pattern_number(b)});
    }
  REQUIRE(found.size() == 1);
  return found.front();
}

}  // namespace

TEST_CASE("combine table") {
  const int expected[4][4] = {{0, 0, 0, 0}, {6, 6, 7, 8}, {8, 7, 8, 9}, {10, 8, 9, 10}};
  for (std::size_t a = 0; a < 4; ++a)
    for (std::size_t b = 0; b < 4; ++b)
      CHECK(combine(static_cast<Grade>(a), static_cast<Grade>(b)) == expected[a][b]);
  const auto s = make_score(Grade::GG4, Grade::NC);
  CHECK(s.secondary == Grade::GG4);
  CHECK(s.combined == 8);
}

TEST_CASE("threshold rule matches exhaustive enumeration on a 21^3 grid") {
  for (double t : {0.10, 0.05, 0.25}) {
    for (int i = 0; i <= 20; ++i)
      for (int j = 0; j <= 20; ++j)
        for (int k = 0; k <= 20; ++k) {
          const GradePercentages p{1.0 - (i + j + k) / 20.0, i / 20.0, j / 20.0, k / 20.0};
          const auto got = threshold_score(p, t);
          const auto want = oracle(p, t);
          REQUIRE(got.primary == want.primary);
          REQUIRE(got.secondary == want.secondary);
          REQUIRE(got.combined == want.combined);
        }
  }
}

TEST_CASE("threshold rule examples and invariants") {
  CHECK(threshold_score({0.5, 0.3, 0.2, 0.0}).combined == 7);
  CHECK(threshold_score({0.5, 0.3, 0.2, 0.0}).primary == Grade::GG3);
  CHECK(threshold_score({0.95, 0.03, 0.01, 0.01}).combined == 0);
  const auto tie = threshold_score({0.4, 0.3, 0.0, 0.3});
  CHECK(tie.primary == Grade::GG5);
  CHECK(tie.secondary == Grade::GG3);
  const auto single = threshold_score({0.6, 0.05, 0.35, 0.0});
  CHECK(single.primary == Grade::GG4);
  CHECK(single.secondary == Grade::GG4);

  // the NC fraction is never read
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int n = 0; n < 2000; ++n) {
    GradePercentages p{u(rng), u(rng), u(rng), u(rng)};
    const auto a = threshold_score(p);
    p[0] = u(rng);
    const auto b = threshold_score(p);
    REQUIRE(a.primary == b.primary);
    REQUIRE(a.secondary == b.secondary);
  }
}

TEST_CASE("scorer network shape") {
  const auto m = build_scorer(1);
  CHECK(m.parameter_count() == 288);
  std::mt19937_64 rng(2);
  for (const auto& s : rule_teacher_samples(50, 3)) {
    const auto h = scorer_heads(m, s.percentages);
    double a = 0, b = 0;
    for (std::size_t c = 0; c < kNumGrades; ++c) {
      a += h.primary[c];
      b += h.secondary[c];
    }
    CHECK(a == doctest::Approx(1.0).epsilon(1e-5));
    CHECK(b == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("head argmax ties go to the higher grade") {
  HeadOutputs h;
  h.primary = {0.1, 0.1, 0.4, 0.4};
  h.secondary = {0.5, 0.5, 0.0, 0.0};
  const auto s = score_from_heads(h);
  CHECK(s.primary == Grade::GG5);
  CHECK(s.secondary == Grade::GG3);
}

TEST_CASE("scorer training is deterministic and learns the rule") {
  const auto samples = rule_teacher_samples(300, 8);
  ScorerTrainConfig cfg;
  cfg.epochs = 300;
  auto a = build_scorer(5), b = build_scorer(5);
  const auto ra = train_scorer(a, samples, cfg);
  const auto rb = train_scorer(b, samples, cfg);
  CHECK(ra.loss_history == rb.loss_history);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t p = 0; p < a.layer(i).params.size(); ++p) CHECK(a.layer(i).params[p] == b.layer(i).params[p]);
  CHECK(ra.loss_history.back() < 0.5 * ra.loss_history.front());
  std::size_t hits = 0;
  const auto held = rule_teacher_samples(500, 9);
  for (const auto& s : held) {
    const auto g = mlp_score(a, s.percentages);
    hits += g.primary == s.primary && g.secondary == s.secondary;
  }
  CHECK(static_cast<double>(hits) / held.size() > 0.75);
}

TEST_CASE("degenerate training sets are rejected") {
  auto m = build_scorer(1);
  std::vector<ScorerSample> one{{{1, 0, 0, 0}, Grade::NC, Grade::NC}};
  CHECK_THROWS_AS(train_scorer(m, one, {}), Error);
  std::vector<ScorerSample> same(10, ScorerSample{{0.2, 0.8, 0, 0}, Grade::GG3, Grade::GG3});
  CHECK_THROWS_WITH(train_scorer(m, same, {}), doctest::Contains("distinct"));
}

TEST_CASE("leave-one-out matches individually trained models") {
  const auto samples = rule_teacher_samples(12, 21);
  ScorerTrainConfig cfg;
  cfg.epochs = 20;
  const auto loo = leave_one_out(samples, cfg, 6);
  REQUIRE(loo.predictions.size() == samples.size());
  for (std::size_t i : {0u, 5u, 11u}) {
    std::vector<ScorerSample> rest = samples;
    rest.erase(rest.begin() + static_cast<std::ptrdiff_t>(i));
    auto m = build_scorer(6);
    train_scorer(m, rest, cfg);
    const auto g = mlp_score(m, samples[i].percentages);
    CHECK(g.primary == loo.predictions[i].primary);
    CHECK(g.secondary == loo.predictions[i].secondary);
  }
  CHECK(loo.agreement >= 0.0);
  CHECK(loo.agreement <= 1.0);
}

TEST_CASE("score report round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "gleason_test_scorer";
  std::filesystem::create_directories(dir);
  ScoreReport r{"slide_0003", "threshold", make_score(Grade::GG4, Grade::GG3), {0.5, 0.2, 0.3, 0.0}};
  write_score_report(dir / "score.json", r);
  const auto back = read_score_report(dir / "score.json");
  CHECK(back.slide_id == r.slide_id);
  CHECK(back.method == r.method);
  CHECK(back.score.combined == 7);
  CHECK(back.percentages == r.percentages);
  std::filesystem::remove_all(dir);
}

TEST_CASE("worked scoring examples") {
  CHECK(threshold_score({0.05, 0.60, 0.30, 0.05}).combined == 7);
  CHECK(threshold_score({0.05, 0.0, 0.95, 0.0}).combined == 8);
  HeadOutputs h;
  h.primary = {0, 0, 0, 1};
  h.secondary = {0, 0, 1, 0};
  CHECK(score_from_heads(h).combined == 9);
  h.primary = {1, 0, 0, 0};
  CHECK(score_from_heads(h).combined == 0);
  const auto zero = scorer_heads(build_scorer(4), {0, 0, 0, 0});
  double a = 0;
  for (double v : zero.primary) a += v;
  CHECK(a == doctest::Approx(1.0).epsilon(1e-5));
}
