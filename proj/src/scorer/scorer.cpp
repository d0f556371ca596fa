#include "gleason/scorer/scorer.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "gleason/nn/loss.hpp"
#include "gleason/nn/optimizer.hpp"

namespace gleason::scorer {

namespace L = nn::layers;

int combine(Grade primary, Grade secondary) {
  if (primary == Grade::NC) return 0;
  if (secondary == Grade::NC) secondary = primary;
  return pattern_number(primary) + pattern_number(secondary);
}

GleasonScore make_score(Grade primary, Grade secondary) {
  if (primary == Grade::NC) return {Grade::NC, Grade::NC, 0};
  if (secondary == Grade::NC) secondary = primary;
  return {primary, secondary, combine(primary, secondary)};
}

GleasonScore threshold_score(const GradePercentages& p, double threshold) {
  std::array<Grade, 3> ranked{Grade::GG5, Grade::GG4, Grade::GG3};
  // stable sort from highest grade keeps higher grades first on ties
  std::stable_sort(ranked.begin(), ranked.end(),
                   [&](Grade a, Grade b) { return p[static_cast<std::size_t>(a)] > p[static_cast<std::size_t>(b)]; });
  const auto frac = [&](Grade g) { return p[static_cast<std::size_t>(g)]; };
  if (frac(ranked[0]) < threshold) return {Grade::NC, Grade::NC, 0};
  const Grade secondary = frac(ranked[1]) >= threshold ? ranked[1] : ranked[0];
  return make_score(ranked[0], secondary);
}

Model build_scorer(std::uint64_t seed) {
  Model m({kNumGrades}, seed);
  m.add(L::fully_connected("fc1", 16));
  m.add(L::relu("fc1_relu"));
  m.add(L::fully_connected("fc2", 8));
  m.add(L::relu("fc2_relu"));
  m.add(L::fully_connected("heads", 2 * kNumGrades));
  m.add(L::softmax("head_softmax", 2));
  m.tags()["model"] = "scorer";
  return m;
}

ScorerTrainResult train_scorer(Model& model, const std::vector<ScorerSample>& samples, const ScorerTrainConfig& config) {
  if (samples.size() < 2) throw data_error("scorer training needs at least two samples");
  std::set<std::pair<Grade, Grade>> combos;
  for (const auto& s : samples) combos.insert({s.primary, s.secondary});
  if (combos.size() < 2) throw data_error("scorer training needs at least two distinct label combinations");
  if (config.batch_size == 0 || config.epochs == 0) throw usage_error("batch size and epochs must be positive");

  nn::OptimizerConfig opt;
  opt.kind = nn::OptimizerKind::adam;
  opt.learning_rate = config.learning_rate;
  opt.linear_decay = config.linear_decay;
  opt.decay_epochs = config.epochs;
  nn::Optimizer<float> optimizer(opt);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(samples.size());
  ScorerTrainResult result;
  nn::BackwardRange range;
  range.input_grad = false;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = nn::scheduled_learning_rate(opt, epoch);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      nn::Tensor<float> x({end - start, kNumGrades});
      std::vector<int> targets;
      for (std::size_t k = start; k < end; ++k) {
        const auto& s = samples[order[k]];
        for (std::size_t c = 0; c < kNumGrades; ++c) x[(k - start) * kNumGrades + c] = static_cast<float>(s.percentages[c]);
        // single-grade slides are encoded primary = secondary
        const Grade secondary = s.secondary == Grade::NC && s.primary != Grade::NC ? s.primary : s.secondary;
        targets.push_back(index_of(s.primary));
        targets.push_back(index_of(secondary));
      }
      const auto acts = model.forward(x, nn::Mode::training);
      const auto loss = nn::multi_head_cross_entropy(acts.output(), 2, targets);
      optimizer.step(model, model.backward(acts, loss.grad, range), lr);
      total += loss.loss * static_cast<double>(end - start);
    }
    result.loss_history.push_back(total / static_cast<double>(samples.size()));
  }
  model.set_trained_epochs(model.trained_epochs() + config.epochs);
  return result;
}

HeadOutputs scorer_heads(const Model& model, const GradePercentages& p) {
  nn::Tensor<float> x({1, kNumGrades});
  for (std::size_t c = 0; c < kNumGrades; ++c) x[c] = static_cast<float>(p[c]);
  const auto y = model.predict(x);
  if (y.size() != 2 * kNumGrades) throw data_error("scorer model must have two 4-way heads");
  HeadOutputs h;
  for (std::size_t c = 0; c < kNumGrades; ++c) {
    h.primary[c] = y[c];
    h.secondary[c] = y[kNumGrades + c];
  }
  return h;
}

namespace {

Grade head_argmax(const std::array<double, kNumGrades>& v) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < kNumGrades; ++c)
    if (v[c] >= v[best]) best = c;
  return static_cast<Grade>(best);
}

}  // namespace

GleasonScore score_from_heads(const HeadOutputs& heads) {
  return make_score(head_argmax(heads.primary), head_argmax(heads.secondary));
}

GleasonScore mlp_score(const Model& model, const GradePercentages& p) { return score_from_heads(scorer_heads(model, p)); }

LooResult leave_one_out(const std::vector<ScorerSample>& samples, const ScorerTrainConfig& config,
                        std::uint64_t model_seed) {
  LooResult result;
  result.predictions.resize(samples.size());
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    std::vector<ScorerSample> rest;
    rest.reserve(samples.size() - 1);
    for (std::ptrdiff_t j = 0; j < n; ++j)
      if (j != i) rest.push_back(samples[static_cast<std::size_t>(j)]);
    Model m = build_scorer(model_seed);
    train_scorer(m, rest, config);
    result.predictions[static_cast<std::size_t>(i)] = mlp_score(m, samples[static_cast<std::size_t>(i)].percentages);
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const GleasonScore truth = make_score(samples[i].primary, samples[i].secondary);
    hits += result.predictions[i].primary == truth.primary && result.predictions[i].secondary == truth.secondary;
  }
  result.agreement = samples.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(samples.size());
  return result;
}

std::vector<ScorerSample> rule_teacher_samples(std::size_t count, std::uint64_t seed, double threshold) {
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gamma(1.0, 1.0);
  std::vector<ScorerSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    ScorerSample s;
    double total = 0;
    for (auto& v : s.percentages) total += (v = gamma(rng));
    for (auto& v : s.percentages) v /= total;
    const GleasonScore label = threshold_score(s.percentages, threshold);
    s.primary = label.primary;
    s.secondary = label.secondary;
    out.push_back(s);
  }
  return out;
}

void write_score_report(const std::filesystem::path& path, const ScoreReport& report) {
  nlohmann::ordered_json j;
  j["slide_id"] = report.slide_id;
  j["method"] = report.method;
  j["primary"] = std::string(to_string(report.score.primary));
  j["secondary"] = std::string(to_string(report.score.secondary));
  j["combined"] = report.score.combined;
  nlohmann::ordered_json pct;
  for (std::size_t k = 0; k < kNumGrades; ++k) pct[std::string(to_string(static_cast<Grade>(k)))] = report.percentages[k];
  j["percentages"] = pct;
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

ScoreReport read_score_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path.string());
  try {
    const auto j = nlohmann::json::parse(in);
    ScoreReport r;
    r.slide_id = j.at("slide_id").get<std::string>();
    r.method = j.at("method").get<std::string>();
    r.score.primary = parse_grade(j.at("primary").get<std::string>());
    r.score.secondary = parse_grade(j.at("secondary").get<std::string>());
    r.score.combined = j.at("combined").get<int>();
    for (std::size_t k = 0; k < kNumGrades; ++k)
      r.percentages[k] = j.at("percentages").at(std::string(to_string(static_cast<Grade>(k)))).get<double>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("bad score report " + path.string() + ": " + e.what());
  }
}

}  // namespace gleason::scorer
