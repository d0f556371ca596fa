#include "gleason/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "gleason/error.hpp"

namespace gleason::metrics {

ConfusionMatrix::ConfusionMatrix(std::size_t c, std::vector<std::uint64_t> values) : classes(c), counts(std::move(values)) {
  if (counts.size() != c * c) throw usage_error("confusion matrix needs " + std::to_string(c * c) + " counts");
}

std::uint64_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}); }

ConfusionMatrix confusion_matrix(std::span<const int> references, std::span<const int> predictions, std::size_t classes) {
  if (references.size() != predictions.size()) throw usage_error("reference and prediction lengths differ");
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < references.size(); ++i) {
    const int r = references[i], p = predictions[i];
    if (r < 0 || p < 0 || static_cast<std::size_t>(r) >= classes || static_cast<std::size_t>(p) >= classes)
      throw data_error("label out of range at index " + std::to_string(i));
    ++cm.at(static_cast<std::size_t>(r), static_cast<std::size_t>(p));
  }
  return cm;
}

ClassificationReport classification_report(std::span<const int> references, std::span<const int> predictions,
                                           std::size_t classes) {
  if (references.empty()) throw data_error("cannot evaluate an empty label set");
  ClassificationReport rep;
  rep.confusion = confusion_matrix(references, predictions, classes);
  const auto& cm = rep.confusion;
  const double n = static_cast<double>(cm.total());
  std::uint64_t correct = 0;
  for (std::size_t c = 0; c < classes; ++c) correct += cm.at(c, c);
  rep.accuracy = static_cast<double>(correct) / n;
  for (std::size_t c = 0; c < classes; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t k = 0; k < classes; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    const double tp = static_cast<double>(cm.at(c, c));
    const double fn = static_cast<double>(row) - tp;
    const double fp = static_cast<double>(col) - tp;
    const double tn = n - tp - fn - fp;
    const double precision = col ? tp / static_cast<double>(col) : 0.0;
    const double sensitivity = row ? tp / static_cast<double>(row) : 0.0;
    const double specificity = tn + fp > 0 ? tn / (tn + fp) : 0.0;
    if (row == 0 && col == 0) rep.warnings.push_back("class " + std::to_string(c) + " absent from references and predictions; F1 set to 0");
    rep.precision.push_back(precision);
    rep.sensitivity.push_back(sensitivity);
    rep.specificity.push_back(specificity);
    rep.f1.push_back(precision + sensitivity > 0 ? 2 * precision * sensitivity / (precision + sensitivity) : 0.0);
  }
  rep.macro_f1 = std::accumulate(rep.f1.begin(), rep.f1.end(), 0.0) / static_cast<double>(classes);
  return rep;
}

double quadratic_kappa(const ConfusionMatrix& cm) {
  const std::size_t c = cm.classes;
  if (c < 2) throw usage_error("kappa needs at least two classes");
  const double n = static_cast<double>(cm.total());
  if (n <= 0) throw data_error("kappa of an empty confusion matrix");
  std::vector<double> rows(c, 0.0), cols(c, 0.0);
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      rows[i] += static_cast<double>(cm.at(i, j));
      cols[j] += static_cast<double>(cm.at(i, j));
    }
  const double denom = static_cast<double>((c - 1) * (c - 1));
  double observed = 0, expected = 0;
  for (std::size_t i = 0; i < c; ++i)
    for (std::size_t j = 0; j < c; ++j) {
      const double d = static_cast<double>(i) - static_cast<double>(j);
      const double w = d * d / denom;
      observed += w * static_cast<double>(cm.at(i, j));
      expected += w * rows[i] * cols[j] / n;
    }
  if (expected == 0.0) {
    if (observed == 0.0) return 1.0;
    throw numeric_error("kappa undefined: zero expected disagreement");
  }
  return 1.0 - observed / expected;
}

RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw usage_error("score and label lengths differ");
  std::size_t pos = 0, neg = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw data_error("ROC labels must be 0 or 1");
    (l ? pos : neg)++;
  }
  if (pos == 0 || neg == 0) throw data_error("ROC needs both positive and negative labels");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  RocResult r;
  std::size_t tp = 0, fp = 0;
  r.curve.push_back({scores[order.front()], 0.0, 0.0});
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores[order[k]];
    while (k < order.size() && scores[order[k]] == s) {
      (labels[order[k]] ? tp : fp)++;
      ++k;
    }
    const double next = k < order.size() ? scores[order[k]] : -std::numeric_limits<double>::infinity();
    r.curve.push_back({next, static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(tp) / static_cast<double>(pos)});
  }
  for (std::size_t k = 1; k < r.curve.size(); ++k)
    r.auc += (r.curve[k].fpr - r.curve[k - 1].fpr) * (r.curve[k].tpr + r.curve[k - 1].tpr) / 2.0;
  return r;
}

Scalars report_scalars(const ClassificationReport& report, const std::vector<std::string>& class_names) {
  if (class_names.size() != report.f1.size()) throw usage_error("class name count does not match the report");
  Scalars s;
  s["accuracy"] = report.accuracy;
  s["macro_f1"] = report.macro_f1;
  for (std::size_t c = 0; c < class_names.size(); ++c) {
    s["f1_" + class_names[c]] = report.f1[c];
    s["precision_" + class_names[c]] = report.precision[c];
    s["sensitivity_" + class_names[c]] = report.sensitivity[c];
    s["specificity_" + class_names[c]] = report.specificity[c];
  }
  return s;
}

void write_metrics_json(const std::filesystem::path& path, const Scalars& scalars, const std::vector<std::string>& warnings) {
  nlohmann::ordered_json j;
  for (const auto& [k, v] : scalars) j[k] = v;
  if (!warnings.empty()) j["warnings"] = warnings;
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

void write_confusion_csv(const std::filesystem::path& path, const ConfusionMatrix& cm,
                         const std::vector<std::string>& class_names) {
  if (class_names.size() != cm.classes) throw usage_error("class name count does not match the confusion matrix");
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  out << "reference\\predicted";
  for (const auto& name : class_names) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < cm.classes; ++i) {
    out << class_names[i];
    for (std::size_t j = 0; j < cm.classes; ++j) out << ',' << cm.at(i, j);
    out << '\n';
  }
}

void write_roc_csv(const std::filesystem::path& path, const RocResult& roc) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  out.precision(17);
  out << "threshold,fpr,tpr\n";
  for (const auto& p : roc.curve) out << p.threshold << ',' << p.fpr << ',' << p.tpr << '\n';
}

}  // namespace gleason::metrics
