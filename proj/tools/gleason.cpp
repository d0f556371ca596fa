#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gleason/cli/pipeline.hpp"
#include "gleason/error.hpp"

namespace {

struct Options {
  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> named;
};

// Flags for the most used config fields; everything else goes through --set.
const std::vector<std::pair<std::string, std::string>> kNamedFlags{
    {"--run-dir", "run_dir"},
    {"--slides-dir", "slides_dir"},
    {"--seed", "seed"},
    {"--input-side", "input_side"},
    {"--patch-size", "tiling.patch_size"},
    {"--overlap", "tiling.overlap"},
    {"--min-tissue", "tiling.min_tissue"},
    {"--folds", "folds.count"},
    {"--test-fold", "folds.test_fold"},
    {"--top-model", "grader.top_model"},
    {"--grader-epochs", "grader.epochs"},
    {"--grader-lr", "grader.learning_rate"},
    {"--freeze", "cribriform.freeze"},
    {"--cribriform-epochs", "cribriform.epochs"},
    {"--scorer-epochs", "scorer.epochs"},
    {"--threshold", "scorer.threshold"},
    {"--slides-per-class", "synth.slides_per_class"},
};

void add_common(CLI::App* sub, Options& opts) {
  sub->add_option("-c,--config", opts.config_path, "JSON config file (default: $GLEASON_CONFIG)");
  sub->add_option("--set", opts.sets, "Override a config field, e.g. --set grader.epochs=20");
  for (const auto& [flag, key] : kNamedFlags) sub->add_option(flag, opts.named[key], "Config field " + key);
}

gleason::cli::PipelineConfig resolve(const Options& opts) {
  std::map<std::string, std::string> overrides;
  for (const auto& s : opts.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0) throw gleason::usage_error("--set expects key=value, got '" + s + "'");
    overrides[s.substr(0, eq)] = s.substr(eq + 1);
  }
  for (const auto& [key, value] : opts.named)
    if (!value.empty()) overrides[key] = value;
  return gleason::cli::load_config(opts.config_path, overrides);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gleason grading pipeline for histology slides"};
  app.require_subcommand(1);
  Options opts;
  using gleason::cli::Pipeline;
  const std::vector<std::pair<std::string, void (Pipeline::*)()>> stages{
      {"synth", &Pipeline::synth},
      {"tile", &Pipeline::tile},
      {"train-grader", &Pipeline::train_grader},
      {"train-cribriform", &Pipeline::train_cribriform},
      {"predict", &Pipeline::predict},
      {"reconstruct", &Pipeline::reconstruct},
      {"percentages", &Pipeline::percentages},
      {"train-scorer", &Pipeline::train_scorer},
      {"score", &Pipeline::score},
      {"evaluate", &Pipeline::evaluate},
      {"explain-cam", &Pipeline::explain_cam},
      {"explain-am", &Pipeline::explain_am},
      {"stain-norm", &Pipeline::stain_norm},
      {"run-all", &Pipeline::run_all},
  };
  std::map<CLI::App*, void (Pipeline::*)()> actions;
  for (const auto& [name, fn] : stages) {
    auto* sub = app.add_subcommand(name, name == "run-all" ? "Run every stage in order" : "Run the " + name + " stage");
    add_common(sub, opts);
    actions[sub] = fn;
  }

  bool print_config = false;
  auto* show = app.add_subcommand("config", "Print the resolved configuration as JSON");
  add_common(show, opts);
  show->callback([&] { print_config = true; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    const auto config = resolve(opts);
    if (print_config) {
      std::cout << gleason::cli::to_json(config).dump(2) << "\n";
      return 0;
    }
    Pipeline pipeline(config);
    for (const auto& [sub, fn] : actions)
      if (sub->parsed()) (pipeline.*fn)();
    return 0;
  } catch (const gleason::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
