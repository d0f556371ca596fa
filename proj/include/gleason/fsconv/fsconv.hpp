#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gleason/nn/loss.hpp"
#include "gleason/nn/network.hpp"
#include "gleason/nn/optimizer.hpp"
#include "gleason/patchwork/image.hpp"

namespace gleason::fsconv {

using Net = nn::Network<float>;

enum class TopModel { FC, GMP, GAP, GMP_FC, GAP_FC };
TopModel parse_top_model(const std::string& text);
std::string to_string(TopModel top);

enum class FreezeDepth { conv1, conv2, conv3 };
FreezeDepth parse_freeze_depth(const std::string& text);
std::string to_string(FreezeDepth depth);

inline constexpr std::size_t kConv1Width = 32;
inline constexpr std::size_t kConv2Width = 124;
inline constexpr std::size_t kConv3Width = 512;
inline constexpr std::size_t kHeadUnits1 = 512;
inline constexpr std::size_t kHeadUnits2 = 256;
inline constexpr double kHeadDropout = 0.5;

// Three conv(3x3, same) + ReLU + maxpool(2, 2) blocks named conv1/relu1/pool1
// .. conv3/relu3/pool3, then the chosen top and a softmax output named
// "output"/"softmax".
Net build_fsconv(TopModel top, std::size_t num_classes = 4, std::size_t input_side = 224,
                 std::size_t conv2_width = kConv2Width, std::uint64_t seed = 1);

TopModel top_model_of(const Net& net);

struct TrainConfig {
  nn::OptimizerConfig optimizer{};
  std::size_t batch_size = 32;
  std::size_t epochs = 200;
  bool augment = true;
  bool brightness = false;
  // false: unweighted cross-entropy (same 1/C normalisation, no w_c)
  bool class_weighting = true;
  std::optional<nn::ClassWeights> weights_override;
  std::uint64_t seed = 1;

  static TrainConfig grader_defaults();
  static TrainConfig cribriform_defaults();
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  double accuracy = 0.0;
  double learning_rate = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::vector<double> class_weights;  // empty for binary training
};

// Images must already be at the network input resolution.
struct Dataset {
  std::vector<patchwork::FloatImage> images;
  std::vector<int> targets;

  std::size_t size() const { return images.size(); }
};

// 8-bit patch resized (bilinear) to the network input side.
patchwork::FloatImage prepare_input(const patchwork::RgbImage& patch, std::size_t side);

TrainResult train_grader(Net& net, const Dataset& train, const TrainConfig& config);

// Softmax (or sigmoid) output per image; runs in batches.
std::vector<std::vector<double>> predict(const Net& net, const std::vector<patchwork::FloatImage>& images,
                                         std::size_t batch_size = 32);
std::vector<double> predict_patch(const Net& net, const patchwork::FloatImage& image);
int argmax(const std::vector<double>& probs);
double accuracy(const Net& net, const Dataset& data);

// Copy of the grader's convolutional base, frozen through `freeze`, topped
// with global max pooling, one output neuron and a sigmoid.
Net build_cribriform(const Net& grader, FreezeDepth freeze);
TrainResult train_cribriform(Net& net, const Dataset& gg4, const TrainConfig& config);

inline constexpr double kCribriformDecision = 0.5;

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history);

}  // namespace gleason::fsconv
