#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace gleason::metrics {

// Rows are reference labels, columns predictions.
struct ConfusionMatrix {
  std::size_t classes = 0;
  std::vector<std::uint64_t> counts;

  ConfusionMatrix() = default;
  explicit ConfusionMatrix(std::size_t c) : classes(c), counts(c * c, 0) {}
  ConfusionMatrix(std::size_t c, std::vector<std::uint64_t> values);

  std::uint64_t at(std::size_t ref, std::size_t pred) const { return counts[ref * classes + pred]; }
  std::uint64_t& at(std::size_t ref, std::size_t pred) { return counts[ref * classes + pred]; }
  std::uint64_t total() const;
};

ConfusionMatrix confusion_matrix(std::span<const int> references, std::span<const int> predictions, std::size_t classes);

struct ClassificationReport {
  double accuracy = 0.0;
  std::vector<double> precision;
  std::vector<double> sensitivity;
  std::vector<double> specificity;
  std::vector<double> f1;
  double macro_f1 = 0.0;
  ConfusionMatrix confusion;
  std::vector<std::string> warnings;
};

// F1_c = 2 P S / (P + S); 0 when P + S = 0. Classes absent from both
// sequences get F1 = 0 and a warning.
ClassificationReport classification_report(std::span<const int> references, std::span<const int> predictions,
                                           std::size_t classes);

// Quadratic-weighted Cohen's kappa.
double quadratic_kappa(const ConfusionMatrix& cm);

struct RocPoint {
  double threshold;  // positive iff score > threshold
  double fpr;
  double tpr;
};

struct RocResult {
  std::vector<RocPoint> curve;  // from (0,0) to (1,1)
  double auc = 0.0;
};

// labels are 0/1; both must be present.
RocResult roc_auc(std::span<const double> scores, std::span<const int> labels);

using Scalars = std::map<std::string, double>;

// accuracy, macro_f1 and f1_/precision_/sensitivity_/specificity_<name> keys.
Scalars report_scalars(const ClassificationReport& report, const std::vector<std::string>& class_names);

void write_metrics_json(const std::filesystem::path& path, const Scalars& scalars,
                        const std::vector<std::string>& warnings = {});
void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                         const std::vector<std::string>& class_names);
void write_roc_csv(const std::filesystem::path& path, const RocResult& roc);

}  // namespace gleason::metrics
