#include "gleason/cli/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gleason/cli/synth.hpp"
#include "gleason/explain/explain.hpp"
#include "gleason/fsconv/fsconv.hpp"
#include "gleason/metrics/metrics.hpp"
#include "gleason/nn/serialize.hpp"
#include "gleason/patchwork/png_io.hpp"
#include "gleason/reconstruct/reconstruct.hpp"
#include "gleason/scorer/scorer.hpp"

namespace gleason::cli {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using patchwork::Patch;
using patchwork::Slide;

namespace {

constexpr int kStageVersion = 1;

const std::map<std::string, std::uint64_t> kStageSalt{
    {"synth", 1}, {"tile", 2}, {"train-grader", 3}, {"train-cribriform", 4}, {"train-scorer", 5}, {"explain-am", 6}};

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stage_seed(const PipelineConfig& c, const std::string& stage) {
  const auto it = kStageSalt.find(stage);
  return it == kStageSalt.end() ? c.seed : splitmix(c.seed * 1000003ULL + it->second);
}

void write_json(const fs::path& path, const ordered_json& j) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw data_error("bad JSON in " + path.string() + ": " + e.what());
  }
}

void log(const std::string& stage, const std::string& message) { std::cerr << "[" << stage << "] " << message << std::endl; }

std::string grade_name(Grade g) { return std::string(to_string(g)); }

GleasonScore truth_of(const Slide& s) { return s.score.value_or(GleasonScore{Grade::NC, Grade::NC, 0}); }

// Combined scores as ordered classes for kappa: 0, 6, 7, 8, 9, 10.
int combined_class(int combined) { return combined == 0 ? 0 : combined - 5; }

nn::Tensor<float> batch_of_one(const patchwork::FloatImage& img) {
  const auto chw = patchwork::to_chw_tensor(img);
  return nn::Tensor<float>({1, img.channels, img.rows, img.cols}, std::vector<float>(chw.data(), chw.data() + chw.size()));
}

struct WindowPrediction {
  reconstruct::PatchPrediction patch;
  double cribriform_probability = 0.0;
  bool labeled = false;
  Grade label = Grade::NC;
  bool cribriform = false;
};

struct SlidePredictions {
  std::string slide_id;
  int fold = -1;
  std::size_t rows = 0, cols = 0;
  std::vector<WindowPrediction> windows;
};

void write_predictions(const fs::path& path, const SlidePredictions& sp) {
  ordered_json j;
  j["slide_id"] = sp.slide_id;
  j["fold"] = sp.fold;
  j["rows"] = sp.rows;
  j["cols"] = sp.cols;
  j["windows"] = json::array();
  for (const auto& w : sp.windows) {
    ordered_json o;
    o["center"] = {w.patch.center_row, w.patch.center_col};
    o["probabilities"] = w.patch.probabilities;
    o["cribriform_probability"] = w.cribriform_probability;
    o["labeled"] = w.labeled;
    o["label"] = grade_name(w.label);
    o["cribriform"] = w.cribriform;
    j["windows"].push_back(o);
  }
  write_json(path, j);
}

SlidePredictions read_predictions(const fs::path& path) {
  const json j = read_json(path);
  try {
    SlidePredictions sp;
    sp.slide_id = j.at("slide_id").get<std::string>();
    sp.fold = j.at("fold").get<int>();
    sp.rows = j.at("rows").get<std::size_t>();
    sp.cols = j.at("cols").get<std::size_t>();
    for (const auto& o : j.at("windows")) {
      WindowPrediction w;
      w.patch.center_row = o.at("center").at(0).get<std::size_t>();
      w.patch.center_col = o.at("center").at(1).get<std::size_t>();
      w.patch.probabilities = o.at("probabilities").get<reconstruct::Probabilities>();
      w.cribriform_probability = o.at("cribriform_probability").get<double>();
      w.labeled = o.at("labeled").get<bool>();
      w.label = parse_grade(o.at("label").get<std::string>());
      w.cribriform = o.at("cribriform").get<bool>();
      sp.windows.push_back(w);
    }
    return sp;
  } catch (const json::exception& e) {
    throw data_error("bad predictions file " + path.string() + ": " + e.what());
  }
}

fsconv::TrainConfig train_config(const std::string& optimizer, double lr, std::size_t batch, std::size_t epochs,
                                 bool augment, std::uint64_t seed) {
  fsconv::TrainConfig t;
  t.optimizer.kind = nn::parse_optimizer_kind(optimizer);
  t.optimizer.learning_rate = lr;
  t.batch_size = batch;
  t.epochs = epochs;
  t.augment = augment;
  t.seed = seed;
  return t;
}

void log_history(const std::string& stage, const std::vector<fsconv::EpochRecord>& history) {
  for (const auto& e : history)
    log(stage, "epoch " + std::to_string(e.epoch) + " loss " + std::to_string(e.loss) + " accuracy " +
                   std::to_string(e.accuracy));
}

}  // namespace

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"synth",   "tile",        "train-grader", "train-cribriform", "predict",
                                              "reconstruct", "percentages", "train-scorer", "score",          "evaluate",
                                              "explain-cam", "explain-am",  "stain-norm"};
  return names;
}

void assert_patient_exclusive(const std::vector<Patch>& patches) {
  std::map<std::string, int> fold_of;
  for (const auto& p : patches) {
    if (p.fold < 0) throw data_error("patch from slide " + p.slide_id + " has no fold assignment");
    const auto [it, inserted] = fold_of.emplace(p.patient_id, p.fold);
    if (!inserted && it->second != p.fold)
      throw data_error("patient " + p.patient_id + " appears in folds " + std::to_string(it->second) + " and " +
                       std::to_string(p.fold));
  }
}

Pipeline::Pipeline(PipelineConfig config) : config_(std::move(config)) { validate(config_); }

fs::path Pipeline::path(const std::string& relative) const { return config_.run_path() / relative; }

void Pipeline::begin(const std::string& stage) {
  fs::create_directories(config_.run_path());
  write_json(path("config.json"), to_json(config_));
  log(stage, "start");
}

void Pipeline::finish(const std::string& stage, std::uint64_t seed) {
  ordered_json manifest;
  if (std::ifstream in(path("manifest.json")); in) {
    try {
      manifest = ordered_json::parse(in);
    } catch (const json::exception& e) {
      throw data_error(std::string("bad run manifest: ") + e.what());
    }
  }
  manifest["config"] = "config.json";
  manifest["stages"][stage] = {{"version", kStageVersion}, {"seed", seed}};
  write_json(path("manifest.json"), manifest);
  log(stage, "done");
}

fs::path Pipeline::require(const std::string& stage, const std::string& relative, const std::string& producer) const {
  const fs::path p = path(relative);
  if (!fs::exists(p))
    throw data_error("stage " + stage + " needs " + p.string() + "; run '" + producer + "' first");
  return p;
}

std::vector<Patch> Pipeline::load_patches(const std::string& stage) const {
  require(stage, "patches/manifest.jsonl", "tile");
  return patchwork::read_patch_set(path("patches"));
}

std::vector<Slide> Pipeline::load_slides(const std::string& stage) const {
  const auto dirs = fs::exists(config_.slides_path()) ? patchwork::list_slides(config_.slides_path())
                                                      : std::vector<fs::path>{};
  if (dirs.empty())
    throw data_error("stage " + stage + " found no slide bundles in " + config_.slides_path().string() +
                     "; run 'synth' first or set slides_dir");
  std::vector<Slide> slides;
  for (const auto& d : dirs) slides.push_back(patchwork::read_slide(d));
  return slides;
}

void Pipeline::synth() {
  begin("synth");
  synth::SynthSpec spec;
  spec.slides_per_class = config_.synth.slides_per_class;
  spec.rows = config_.synth.rows;
  spec.cols = config_.synth.cols;
  spec.margin = config_.synth.margin;
  spec.benign_band = config_.synth.benign_band;
  spec.cribriform_rate = config_.synth.cribriform_rate;
  spec.slides_per_patient = config_.synth.slides_per_patient;
  spec.seed = stage_seed(config_, "synth");
  if (config_.slides_dir.empty() && fs::exists(config_.slides_path())) fs::remove_all(config_.slides_path());
  const auto ids = synth::write_slides(config_.slides_path(), spec);
  log("synth", std::to_string(ids.size()) + " slides in " + config_.slides_path().string());
  finish("synth", spec.seed);
}

void Pipeline::tile() {
  begin("tile");
  const auto slides = load_slides("tile");
  patchwork::TileOptions opts;
  opts.patch_size = config_.tiling.patch_size;
  opts.overlap = config_.tiling.overlap;
  opts.min_tissue = config_.tiling.min_tissue;
  opts.cribriform_floor = config_.tiling.cribriform_floor;
  std::vector<Patch> patches;
  std::vector<std::string> patients;
  for (const auto& s : slides) {
    auto tiles = patchwork::tile_slide(s, opts);
    std::move(tiles.begin(), tiles.end(), std::back_inserter(patches));
    patients.push_back(s.patient_id);
  }
  if (patches.empty()) throw data_error("tiling produced no labeled patches");
  const std::uint64_t seed = stage_seed(config_, "tile");
  auto folds = patchwork::make_folds(patches, config_.folds.count, seed);
  // patients without labeled patches still need a fold for slide-level work
  std::sort(patients.begin(), patients.end());
  patients.erase(std::unique(patients.begin(), patients.end()), patients.end());
  int next = 0;
  for (const auto& id : patients)
    if (!folds.count(id)) folds[id] = next++ % config_.folds.count;
  for (auto& p : patches) p.fold = folds.at(p.patient_id);
  assert_patient_exclusive(patches);
  if (fs::exists(path("patches"))) fs::remove_all(path("patches"));
  patchwork::write_patch_set(path("patches"), patches);
  ordered_json fj;
  for (const auto& [patient, fold] : folds) fj[patient] = fold;
  write_json(path("folds.json"), fj);

  std::array<std::size_t, kNumGrades> counts{};
  for (const auto& p : patches) ++counts[static_cast<std::size_t>(p.label)];
  std::string summary = std::to_string(patches.size()) + " patches from " + std::to_string(slides.size()) + " slides:";
  for (std::size_t k = 0; k < kNumGrades; ++k) summary += " " + grade_name(static_cast<Grade>(k)) + "=" + std::to_string(counts[k]);
  log("tile", summary);
  finish("tile", seed);
}

void Pipeline::train_grader() {
  begin("train-grader");
  const auto patches = load_patches("train-grader");
  assert_patient_exclusive(patches);
  fsconv::Dataset train;
  for (const auto& p : patches) {
    if (p.fold == config_.folds.test_fold) continue;
    train.images.push_back(fsconv::prepare_input(p.pixels, config_.input_side));
    train.targets.push_back(index_of(p.label));
  }
  const std::uint64_t seed = stage_seed(config_, "train-grader");
  const auto& g = config_.grader;
  auto net = fsconv::build_fsconv(fsconv::parse_top_model(g.top_model), kNumGrades, config_.input_side, g.conv2_width, seed);
  auto tc = train_config(g.optimizer, g.learning_rate, g.batch_size, g.epochs, g.augment, seed);
  tc.class_weighting = g.class_weighting;
  log("train-grader", std::to_string(train.size()) + " training patches, " + std::to_string(net.trainable_parameter_count()) +
                          " trainable parameters");
  const auto result = fsconv::train_grader(net, train, tc);
  log_history("train-grader", result.history);
  fs::create_directories(path("models"));
  nn::save_network(net, path("models/grader.bin"));
  fsconv::write_history_csv(path("models/grader_history.csv"), result.history);
  finish("train-grader", seed);
}

void Pipeline::train_cribriform() {
  begin("train-cribriform");
  const auto grader = nn::load_network(require("train-cribriform", "models/grader.bin", "train-grader"));
  const auto patches = load_patches("train-cribriform");
  assert_patient_exclusive(patches);
  fsconv::Dataset gg4;
  for (const auto& p : patches) {
    if (p.fold == config_.folds.test_fold || p.label != Grade::GG4) continue;
    gg4.images.push_back(fsconv::prepare_input(p.pixels, config_.input_side));
    gg4.targets.push_back(p.cribriform ? 1 : 0);
  }
  const std::uint64_t seed = stage_seed(config_, "train-cribriform");
  const auto& c = config_.cribriform;
  auto net = fsconv::build_cribriform(grader, fsconv::parse_freeze_depth(c.freeze));
  auto tc = train_config(c.optimizer, c.learning_rate, c.batch_size, c.epochs, c.augment, seed);
  tc.brightness = c.brightness;
  log("train-cribriform", std::to_string(gg4.size()) + " GG4 training patches");
  const auto result = fsconv::train_cribriform(net, gg4, tc);
  log_history("train-cribriform", result.history);
  nn::save_network(net, path("models/cribriform.bin"));
  fsconv::write_history_csv(path("models/cribriform_history.csv"), result.history);
  finish("train-cribriform", seed);
}

void Pipeline::predict() {
  begin("predict");
  const auto grader = nn::load_network(require("predict", "models/grader.bin", "train-grader"));
  const auto crib = nn::load_network(require("predict", "models/cribriform.bin", "train-cribriform"));
  const json folds = read_json(require("predict", "folds.json", "tile"));
  const auto slides = load_slides("predict");
  patchwork::TileOptions opts;
  opts.patch_size = config_.tiling.patch_size;
  opts.overlap = config_.tiling.overlap;
  opts.min_tissue = config_.tiling.min_tissue;
  opts.cribriform_floor = config_.tiling.cribriform_floor;
  opts.keep_unlabeled = true;
  if (fs::exists(path("predictions"))) fs::remove_all(path("predictions"));
  std::size_t total = 0;
  for (const auto& s : slides) {
    const auto windows = patchwork::tile_slide(s, opts);
    std::vector<patchwork::FloatImage> images;
    for (const auto& w : windows) images.push_back(fsconv::prepare_input(w.pixels, config_.input_side));
    const auto probs = fsconv::predict(grader, images);
    const auto crib_probs = fsconv::predict(crib, images);
    SlidePredictions sp;
    sp.slide_id = s.slide_id;
    sp.fold = folds.contains(s.patient_id) ? folds.at(s.patient_id).get<int>() : -1;
    sp.rows = s.image.rows;
    sp.cols = s.image.cols;
    for (std::size_t i = 0; i < windows.size(); ++i) {
      WindowPrediction wp;
      wp.patch.center_row = windows[i].center_row;
      wp.patch.center_col = windows[i].center_col;
      for (std::size_t k = 0; k < kNumGrades; ++k) wp.patch.probabilities[k] = probs[i][k];
      wp.cribriform_probability = crib_probs[i][0];
      wp.labeled = windows[i].labeled;
      wp.label = windows[i].label;
      wp.cribriform = windows[i].cribriform;
      sp.windows.push_back(wp);
    }
    total += windows.size();
    write_predictions(path("predictions/" + s.slide_id + ".json"), sp);
  }
  log("predict", std::to_string(total) + " windows over " + std::to_string(slides.size()) + " slides");
  finish("predict", config_.seed);
}

void Pipeline::reconstruct() {
  begin("reconstruct");
  require("reconstruct", "predictions", "predict");
  const auto slides = load_slides("reconstruct");
  for (const auto& s : slides) {
    const auto sp = read_predictions(require("reconstruct", "predictions/" + s.slide_id + ".json", "predict"));
    std::vector<reconstruct::PatchPrediction> preds;
    for (const auto& w : sp.windows) preds.push_back(w.patch);
    const auto tissue = patchwork::tissue_mask(s.image);
    const auto map = reconstruct::probability_map(preds, s.image.rows, s.image.cols, tissue);
    const fs::path dir = path("maps/" + s.slide_id);
    reconstruct::write_probability_pngs(dir, map);
    reconstruct::write_classmap_png(dir / "classmap.png", reconstruct::argmax_map(map), tissue);
  }
  log("reconstruct", std::to_string(slides.size()) + " slides");
  finish("reconstruct", config_.seed);
}

void Pipeline::percentages() {
  begin("percentages");
  const auto slides = load_slides("percentages");
  fs::create_directories(path("percentages"));
  for (const auto& s : slides) {
    const auto cls = patchwork::read_png(require("percentages", "maps/" + s.slide_id + "/classmap.png", "reconstruct"), 1);
    patchwork::GrayImage tissue(cls.rows, cls.cols, 1, 0);
    for (std::size_t i = 0; i < cls.data.size(); ++i) tissue.data[i] = cls.data[i] != kUnannotated;
    reconstruct::write_percentages_json(path("percentages/" + s.slide_id + ".json"),
                                        reconstruct::grade_percentages(cls, tissue));
  }
  log("percentages", std::to_string(slides.size()) + " slides");
  finish("percentages", config_.seed);
}

void Pipeline::train_scorer() {
  begin("train-scorer");
  const json folds = read_json(require("train-scorer", "folds.json", "tile"));
  const auto slides = load_slides("train-scorer");
  std::vector<scorer::ScorerSample> samples;
  for (const auto& s : slides) {
    if (folds.contains(s.patient_id) && folds.at(s.patient_id).get<int>() == config_.folds.test_fold) continue;
    const auto truth = truth_of(s);
    samples.push_back({reconstruct::read_percentages_json(
                           require("train-scorer", "percentages/" + s.slide_id + ".json", "percentages")),
                       truth.primary, truth.secondary});
  }
  const std::uint64_t seed = stage_seed(config_, "train-scorer");
  scorer::ScorerTrainConfig tc;
  tc.learning_rate = config_.scorer.learning_rate;
  tc.epochs = config_.scorer.epochs;
  tc.batch_size = config_.scorer.batch_size;
  tc.seed = seed;
  auto model = scorer::build_scorer(seed);
  const auto result = scorer::train_scorer(model, samples, tc);
  log("train-scorer", std::to_string(samples.size()) + " slides, final loss " + std::to_string(result.loss_history.back()));
  fs::create_directories(path("models"));
  nn::save_network(model, path("models/scorer.bin"));
  if (config_.scorer.leave_one_out) {
    const auto loo = scorer::leave_one_out(samples, tc, seed);
    write_json(path("models/scorer_loo.json"), ordered_json{{"slides", samples.size()}, {"agreement", loo.agreement}});
    log("train-scorer", "leave-one-out agreement " + std::to_string(loo.agreement));
  }
  finish("train-scorer", seed);
}

void Pipeline::score() {
  begin("score");
  const auto model = nn::load_network(require("score", "models/scorer.bin", "train-scorer"));
  const auto slides = load_slides("score");
  fs::create_directories(path("scores"));
  for (const auto& s : slides) {
    const auto pct = reconstruct::read_percentages_json(require("score", "percentages/" + s.slide_id + ".json", "percentages"));
    scorer::write_score_report(path("scores/" + s.slide_id + "_threshold.json"),
                               {s.slide_id, "threshold", scorer::threshold_score(pct, config_.scorer.threshold), pct});
    scorer::write_score_report(path("scores/" + s.slide_id + "_mlp.json"),
                               {s.slide_id, "mlp", scorer::mlp_score(model, pct), pct});
  }
  log("score", std::to_string(slides.size()) + " slides scored by both methods");
  finish("score", config_.seed);
}

void Pipeline::evaluate() {
  begin("evaluate");
  const auto slides = load_slides("evaluate");
  std::vector<int> refs, preds, crib_labels;
  std::vector<double> crib_scores;
  std::vector<int> slide_truth, slide_threshold, slide_mlp;
  std::vector<std::string> warnings;
  std::ostringstream slide_rows;
  slide_rows << "slide_id,fold,truth,threshold,mlp\n";
  for (const auto& s : slides) {
    const auto sp = read_predictions(require("evaluate", "predictions/" + s.slide_id + ".json", "predict"));
    if (sp.fold != config_.folds.test_fold) continue;
    for (const auto& w : sp.windows) {
      if (!w.labeled) continue;
      refs.push_back(index_of(w.label));
      preds.push_back(fsconv::argmax(std::vector<double>(w.patch.probabilities.begin(), w.patch.probabilities.end())));
      if (w.label == Grade::GG4) {
        crib_scores.push_back(w.cribriform_probability);
        crib_labels.push_back(w.cribriform ? 1 : 0);
      }
    }
    const auto th = scorer::read_score_report(require("evaluate", "scores/" + s.slide_id + "_threshold.json", "score"));
    const auto mlp = scorer::read_score_report(require("evaluate", "scores/" + s.slide_id + "_mlp.json", "score"));
    const int truth = truth_of(s).combined;
    slide_truth.push_back(combined_class(truth));
    slide_threshold.push_back(combined_class(th.score.combined));
    slide_mlp.push_back(combined_class(mlp.score.combined));
    slide_rows << s.slide_id << ',' << sp.fold << ',' << truth << ',' << th.score.combined << ',' << mlp.score.combined << '\n';
  }
  if (refs.empty()) throw data_error("no labeled patches in test fold " + std::to_string(config_.folds.test_fold));

  std::vector<std::string> names;
  for (Grade g : kAllGrades) names.push_back(grade_name(g));
  const auto report = metrics::classification_report(refs, preds, kNumGrades);
  warnings.insert(warnings.end(), report.warnings.begin(), report.warnings.end());
  metrics::Scalars scalars;
  for (const auto& [k, v] : metrics::report_scalars(report, names)) scalars["patch_" + k] = v;
  scalars["patch_count"] = static_cast<double>(refs.size());
  try {
    scalars["patch_kappa"] = metrics::quadratic_kappa(report.confusion);
  } catch (const Error& e) {
    warnings.push_back(std::string("patch kappa: ") + e.what());
  }
  const fs::path out = path("eval");
  fs::create_directories(out);
  metrics::write_confusion_csv(out / "confusion.csv", report.confusion, names);

  scalars["cribriform_count"] = static_cast<double>(crib_scores.size());
  try {
    const auto roc = metrics::roc_auc(crib_scores, crib_labels);
    scalars["cribriform_auc"] = roc.auc;
    std::size_t hits = 0;
    for (std::size_t i = 0; i < crib_scores.size(); ++i)
      hits += (crib_scores[i] > fsconv::kCribriformDecision) == (crib_labels[i] == 1);
    scalars["cribriform_accuracy"] = static_cast<double>(hits) / static_cast<double>(crib_scores.size());
    metrics::write_roc_csv(out / "roc.csv", roc);
  } catch (const Error& e) {
    warnings.push_back(std::string("cribriform ROC: ") + e.what());
  }

  constexpr std::size_t kScoreClasses = 6;
  scalars["slide_count"] = static_cast<double>(slide_truth.size());
  for (const auto& [method, pred] : {std::pair{"threshold", &slide_threshold}, std::pair{"mlp", &slide_mlp}}) {
    if (slide_truth.empty()) break;
    const auto r = metrics::classification_report(slide_truth, *pred, kScoreClasses);
    scalars[std::string("slide_accuracy_") + method] = r.accuracy;
    try {
      scalars[std::string("slide_kappa_") + method] = metrics::quadratic_kappa(r.confusion);
    } catch (const Error& e) {
      warnings.push_back(std::string("slide kappa (") + method + "): " + e.what());
    }
  }
  std::ofstream(out / "slide_scores.csv") << slide_rows.str();
  metrics::write_metrics_json(out / "metrics.json", scalars, warnings);
  for (const auto& w : warnings) log("evaluate", "warning: " + w);
  log("evaluate", "patch accuracy " + std::to_string(report.accuracy) + " over " + std::to_string(refs.size()) +
                      " test patches");
  finish("evaluate", config_.seed);
}

void Pipeline::explain_cam() {
  begin("explain-cam");
  const auto grader = nn::load_network(require("explain-cam", "models/grader.bin", "train-grader"));
  const auto patches = load_patches("explain-cam");
  std::array<std::size_t, kNumGrades> done{};
  std::size_t written = 0;
  for (const auto& p : patches) {
    const auto k = static_cast<std::size_t>(p.label);
    if (p.fold != config_.folds.test_fold || done[k] >= config_.explain.cam_patches_per_class) continue;
    ++done[k];
    const auto input = batch_of_one(fsconv::prepare_input(p.pixels, config_.input_side));
    const auto raw = explain::cam(grader, input, k);
    const auto heat = explain::cam_postprocess(raw.raw, p.pixels.rows, p.pixels.cols);
    for (const auto& w : heat.warnings) log("explain-cam", "warning: " + p.slide_id + ": " + w);
    const fs::path dir = path("explain/cam/" + p.slide_id + "_r" + std::to_string(p.center_row) + "_c" +
                              std::to_string(p.center_col));
    explain::write_cam_pngs(dir, grade_name(p.label), heat);
    patchwork::write_png(dir / "patch.png", p.pixels);
    ++written;
  }
  log("explain-cam", std::to_string(written) + " patches explained");
  finish("explain-cam", config_.seed);
}

void Pipeline::explain_am() {
  begin("explain-am");
  const auto grader = nn::load_network(require("explain-am", "models/grader.bin", "train-grader"));
  const std::uint64_t seed = stage_seed(config_, "explain-am");
  explain::AmConfig am;
  am.steps = config_.explain.am_steps;
  am.step_size = config_.explain.am_step_size;
  am.seed = seed;
  const std::size_t layer = explain::conv_layer_index(grader, config_.explain.am_layer);
  const auto result = explain::activation_maximization(grader, layer, config_.explain.am_filter, am);
  explain::write_am_outputs(path("explain/am"), config_.explain.am_layer, config_.explain.am_filter, result);
  log("explain-am", "loss " + std::to_string(result.trace.front()) + " -> " + std::to_string(result.trace.back()));
  finish("explain-am", seed);
}

void Pipeline::stain_norm() {
  begin("stain-norm");
  const auto slides = load_slides("stain-norm");
  const std::string& ref_id = config_.stain_norm.reference_slide;
  const auto ref = ref_id.empty() ? slides.begin()
                                  : std::find_if(slides.begin(), slides.end(), [&](const Slide& s) { return s.slide_id == ref_id; });
  if (ref == slides.end()) throw data_error("reference slide " + ref_id + " not found");
  fs::create_directories(path("stain"));
  for (const auto& s : slides)
    patchwork::write_png(path("stain/" + s.slide_id + ".png"), patchwork::histogram_match(s.image, ref->image));
  log("stain-norm", std::to_string(slides.size()) + " slides matched to " + ref->slide_id);
  finish("stain-norm", config_.seed);
}

void Pipeline::run_all() {
  const bool have_slides = fs::exists(config_.slides_path()) && !patchwork::list_slides(config_.slides_path()).empty();
  if (!have_slides) synth();
  tile();
  train_grader();
  train_cribriform();
  predict();
  reconstruct();
  percentages();
  train_scorer();
  score();
  evaluate();
  explain_cam();
  explain_am();
  if (config_.stain_norm.enabled) stain_norm();
}

}  // namespace gleason::cli
