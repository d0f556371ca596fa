#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "gleason/grade.hpp"
#include "gleason/nn/network.hpp"
#include "gleason/reconstruct/reconstruct.hpp"

namespace gleason::scorer {

using reconstruct::GradePercentages;
using Model = nn::Network<float>;

inline constexpr double kDefaultThreshold = 0.10;

// Sum of the pattern numbers; 0 when the primary grade is NC. A NC secondary
// under a cancerous primary is read as the primary grade.
int combine(Grade primary, Grade secondary);
GleasonScore make_score(Grade primary, Grade secondary);

// Ranks GG3/GG4/GG5 by fraction (equal fractions: higher grade first).
GleasonScore threshold_score(const GradePercentages& p, double threshold = kDefaultThreshold);

// 4 -> FC16 -> ReLU -> FC8 -> ReLU -> two 4-way softmax heads. The heads are
// stored as one 8-unit layer followed by a softmax over two groups of four.
Model build_scorer(std::uint64_t seed);

struct ScorerSample {
  GradePercentages percentages{};
  Grade primary = Grade::NC;
  Grade secondary = Grade::NC;
};

struct ScorerTrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 2000;
  std::size_t batch_size = 32;
  bool linear_decay = true;
  std::uint64_t seed = 1;
};

struct ScorerTrainResult {
  std::vector<double> loss_history;  // mean loss per epoch
};

ScorerTrainResult train_scorer(Model& model, const std::vector<ScorerSample>& samples, const ScorerTrainConfig& config);

struct HeadOutputs {
  std::array<double, kNumGrades> primary{};
  std::array<double, kNumGrades> secondary{};
};

HeadOutputs scorer_heads(const Model& model, const GradePercentages& p);
// Argmax of each head (ties to the higher grade), combined by combine().
GleasonScore score_from_heads(const HeadOutputs& heads);
GleasonScore mlp_score(const Model& model, const GradePercentages& p);

struct LooResult {
  std::vector<GleasonScore> predictions;  // prediction for sample i from the model trained without it
  double agreement = 0.0;                 // exact (primary, secondary) matches
};

// Leave-one-out: one model per held-out sample, each seeded identically.
LooResult leave_one_out(const std::vector<ScorerSample>& samples, const ScorerTrainConfig& config,
                        std::uint64_t model_seed);

// Dirichlet(1,1,1,1) vectors labelled by threshold_score.
std::vector<ScorerSample> rule_teacher_samples(std::size_t count, std::uint64_t seed,
                                               double threshold = kDefaultThreshold);

struct ScoreReport {
  std::string slide_id;
  std::string method;  // "mlp" or "threshold"
  GleasonScore score;
  GradePercentages percentages{};
};

void write_score_report(const std::filesystem::path& path, const ScoreReport& report);
ScoreReport read_score_report(const std::filesystem::path& path);

}  // namespace gleason::scorer
