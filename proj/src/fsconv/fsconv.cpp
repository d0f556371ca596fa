#include "gleason/fsconv/fsconv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>

#include "gleason/grade.hpp"
#include "gleason/patchwork/patchwork.hpp"

namespace gleason::fsconv {

using nn::LayerKind;
using nn::Tensor;
namespace L = nn::layers;

namespace {

constexpr std::array<std::pair<TopModel, const char*>, 5> kTopNames{{
    {TopModel::FC, "FC"}, {TopModel::GMP, "GMP"}, {TopModel::GAP, "GAP"}, {TopModel::GMP_FC, "GMP_FC"},
    {TopModel::GAP_FC, "GAP_FC"}}};

void add_fc_head(Net& net) {
  net.add(L::fully_connected("fc1", kHeadUnits1));
  net.add(L::relu("fc1_relu"));
  net.add(L::dropout("fc1_dropout", kHeadDropout));
  net.add(L::fully_connected("fc2", kHeadUnits2));
  net.add(L::relu("fc2_relu"));
  net.add(L::dropout("fc2_dropout", kHeadDropout));
}

}  // namespace

TopModel parse_top_model(const std::string& text) {
  for (const auto& [top, name] : kTopNames)
    if (text == name) return top;
  throw usage_error("unknown top model '" + text + "' (expected FC, GMP, GAP, GMP_FC or GAP_FC)");
}

std::string to_string(TopModel top) {
  for (const auto& [t, name] : kTopNames)
    if (t == top) return name;
  return "?";
}

FreezeDepth parse_freeze_depth(const std::string& text) {
  if (text == "conv1") return FreezeDepth::conv1;
  if (text == "conv2") return FreezeDepth::conv2;
  if (text == "conv3") return FreezeDepth::conv3;
  throw usage_error("unknown freeze depth '" + text + "' (expected conv1, conv2 or conv3)");
}

std::string to_string(FreezeDepth depth) {
  switch (depth) {
    case FreezeDepth::conv1: return "conv1";
    case FreezeDepth::conv2: return "conv2";
    case FreezeDepth::conv3: return "conv3";
  }
  return "?";
}

Net build_fsconv(TopModel top, std::size_t num_classes, std::size_t input_side, std::size_t conv2_width,
                 std::uint64_t seed) {
  if (num_classes < 2) throw usage_error("need at least two classes");
  if (input_side < 8) throw usage_error("input side must be at least 8");
  Net net({3, input_side, input_side}, seed);
  const std::array<std::size_t, 3> widths{kConv1Width, conv2_width, kConv3Width};
  for (std::size_t b = 0; b < widths.size(); ++b) {
    const std::string k = std::to_string(b + 1);
    net.add(L::conv2d("conv" + k, 3, 3, widths[b]));
    net.add(L::relu("relu" + k));
    net.add(L::max_pool2d("pool" + k, 2, 2));
  }
  switch (top) {
    case TopModel::FC: add_fc_head(net); break;
    case TopModel::GMP: net.add(L::global_max_pool("gmp")); break;
    case TopModel::GAP: net.add(L::global_avg_pool("gap")); break;
    case TopModel::GMP_FC:
      net.add(L::global_max_pool("gmp"));
      add_fc_head(net);
      break;
    case TopModel::GAP_FC:
      net.add(L::global_avg_pool("gap"));
      add_fc_head(net);
      break;
  }
  net.add(L::fully_connected("output", num_classes));
  net.add(L::softmax("softmax"));
  net.tags()["model"] = "grader";
  net.tags()["top"] = to_string(top);
  return net;
}

TopModel top_model_of(const Net& net) {
  const auto it = net.tags().find("top");
  if (it == net.tags().end()) throw data_error("network carries no top-model tag");
  return parse_top_model(it->second);
}

TrainConfig TrainConfig::grader_defaults() {
  TrainConfig c;
  c.optimizer.learning_rate = 0.01;
  c.batch_size = 32;
  c.epochs = 200;
  c.augment = true;
  c.brightness = false;
  return c;
}

TrainConfig TrainConfig::cribriform_defaults() {
  TrainConfig c;
  c.optimizer.learning_rate = 0.001;
  c.batch_size = 32;
  c.epochs = 200;
  c.augment = true;
  c.brightness = true;
  return c;
}

patchwork::FloatImage prepare_input(const patchwork::RgbImage& patch, std::size_t side) {
  return patchwork::resize_patch(patchwork::to_float(patch), side);
}

namespace {

using LossFn = std::function<nn::LossResult<float>(const Tensor<float>&, std::span<const int>)>;

void check_dataset(const Net& net, const Dataset& data) {
  if (data.images.size() != data.targets.size()) throw data_error("dataset images and targets differ in count");
  if (data.images.empty()) throw data_error("empty training set");
  const auto& in = net.input_shape();
  for (const auto& img : data.images)
    if (img.channels != in[0] || img.rows != in[1] || img.cols != in[2])
      throw data_error("training image is " + std::to_string(img.rows) + "x" + std::to_string(img.cols) + "x" +
                       std::to_string(img.channels) + " but the network expects " + nn::shape_string(in));
}

Tensor<float> make_batch(const std::vector<const patchwork::FloatImage*>& images) {
  const auto& first = *images.front();
  Tensor<float> batch({images.size(), first.channels, first.rows, first.cols});
  const std::size_t per = first.channels * first.rows * first.cols;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Tensor<float> chw = patchwork::to_chw_tensor(*images[i]);
    std::copy(chw.data(), chw.data() + per, batch.data() + i * per);
  }
  return batch;
}

bool correct(const Tensor<float>& probs, std::size_t i, int target) {
  const std::size_t width = probs.size() / probs.batch();
  const float* p = probs.data() + i * width;
  if (width == 1) return (p[0] > kCribriformDecision) == (target == 1);
  return static_cast<int>(std::max_element(p, p + width) - p) == target;
}

TrainResult run_training(Net& net, const Dataset& data, const TrainConfig& config, const LossFn& loss_fn) {
  if (config.batch_size == 0 || config.epochs == 0) throw usage_error("batch size and epochs must be positive");
  if (!(config.optimizer.learning_rate > 0.0)) throw usage_error("learning rate must be positive");
  nn::OptimizerConfig opt_config = config.optimizer;
  if (opt_config.linear_decay && opt_config.decay_epochs == 0) opt_config.decay_epochs = config.epochs;
  nn::Optimizer<float> optimizer(opt_config);

  // independent streams so that toggling augmentation leaves the batch order unchanged
  std::mt19937_64 order_rng(config.seed);
  std::mt19937_64 augment_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 dropout_rng(config.seed ^ 0xd1b54a32d192ed03ULL);

  std::vector<std::size_t> order(data.size());
  std::vector<patchwork::FloatImage> augmented;
  TrainResult result;
  nn::BackwardRange range;
  range.input_grad = false;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), order_rng);
    const double lr = nn::scheduled_learning_rate(opt_config, epoch);
    double loss_sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::vector<const patchwork::FloatImage*> images;
      std::vector<int> targets;
      augmented.clear();
      augmented.reserve(end - start);
      for (std::size_t k = start; k < end; ++k) {
        const auto& img = data.images[order[k]];
        if (config.augment) {
          augmented.push_back(patchwork::augment(img, augment_rng, config.brightness));
          images.push_back(&augmented.back());
        } else {
          images.push_back(&img);
        }
        targets.push_back(data.targets[order[k]]);
      }
      const Tensor<float> batch = make_batch(images);
      const auto acts = net.forward(batch, nn::Mode::training, &dropout_rng);
      const auto loss = loss_fn(acts.output(), targets);
      if (!std::isfinite(loss.loss)) throw numeric_error("non-finite training loss at epoch " + std::to_string(epoch + 1));
      const auto grads = net.backward(acts, loss.grad, range);
      optimizer.step(net, grads, lr);
      loss_sum += loss.loss * static_cast<double>(targets.size());
      for (std::size_t i = 0; i < targets.size(); ++i) hits += correct(acts.output(), i, targets[i]);
    }
    const double n = static_cast<double>(data.size());
    result.history.push_back({epoch + 1, loss_sum / n, static_cast<double>(hits) / n, lr});
  }
  net.set_trained_epochs(net.trained_epochs() + config.epochs);
  return result;
}

}  // namespace

TrainResult train_grader(Net& net, const Dataset& train, const TrainConfig& config) {
  check_dataset(net, train);
  const std::size_t classes = net.output_shape().back();
  std::vector<std::size_t> counts(classes, 0);
  for (int t : train.targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= classes) throw data_error("target " + std::to_string(t) + " out of range");
    ++counts[static_cast<std::size_t>(t)];
  }
  for (std::size_t c = 0; c < classes; ++c)
    if (counts[c] == 0) {
      const std::string name = classes == kNumGrades ? std::string(to_string(static_cast<Grade>(c))) : std::to_string(c);
      throw data_error("class " + name + " has no patches in the training split");
    }

  LossFn loss_fn;
  std::vector<double> used_weights;
  if (config.class_weighting) {
    const nn::ClassWeights weights = config.weights_override ? *config.weights_override : nn::ClassWeights::from_counts(counts);
    if (weights.classes() != classes) throw usage_error("class weight count does not match the network output");
    used_weights = weights.weights;
    loss_fn = [weights](const Tensor<float>& p, std::span<const int> t) { return nn::weighted_cross_entropy(p, t, weights); };
  } else {
    const float scale = 1.0f / static_cast<float>(classes);
    loss_fn = [scale](const Tensor<float>& p, std::span<const int> t) {
      auto r = nn::multi_head_cross_entropy(p, 1, t);
      r.loss *= scale;
      for (auto& g : r.grad.storage()) g *= scale;
      return r;
    };
  }
  TrainResult result = run_training(net, train, config, loss_fn);
  result.class_weights = used_weights;
  return result;
}

std::vector<std::vector<double>> predict(const Net& net, const std::vector<patchwork::FloatImage>& images,
                                         std::size_t batch_size) {
  std::vector<std::vector<double>> out;
  out.reserve(images.size());
  if (batch_size == 0) batch_size = 1;
  for (std::size_t start = 0; start < images.size(); start += batch_size) {
    const std::size_t end = std::min(images.size(), start + batch_size);
    std::vector<const patchwork::FloatImage*> ptrs;
    for (std::size_t k = start; k < end; ++k) ptrs.push_back(&images[k]);
    const Tensor<float> probs = net.predict(make_batch(ptrs));
    const std::size_t width = probs.size() / probs.batch();
    for (std::size_t i = 0; i < ptrs.size(); ++i)
      out.emplace_back(probs.data() + i * width, probs.data() + (i + 1) * width);
  }
  return out;
}

std::vector<double> predict_patch(const Net& net, const patchwork::FloatImage& image) {
  return predict(net, {image}, 1).front();
}

int argmax(const std::vector<double>& probs) {
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

double accuracy(const Net& net, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  const auto probs = predict(net, data.images);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const bool ok = probs[i].size() == 1 ? (probs[i][0] > kCribriformDecision) == (data.targets[i] == 1)
                                         : argmax(probs[i]) == data.targets[i];
    hits += ok;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

Net build_cribriform(const Net& grader, FreezeDepth freeze) {
  if (grader.trained_epochs() == 0) throw data_error("the grader has not been trained");
  if (top_model_of(grader) != TopModel::GMP) throw data_error("cribriform fine-tuning needs a grader with a GMP top");
  Net net = grader.prefix(grader.index_of("pool3") + 1);
  net.add(L::global_max_pool("gmp"));
  net.add(L::fully_connected("cribriform_output", 1));
  net.add(L::sigmoid("sigmoid"));
  net.freeze_through(net.index_of(to_string(freeze)));
  net.tags()["model"] = "cribriform";
  net.tags()["freeze"] = to_string(freeze);
  net.set_trained_epochs(0);
  return net;
}

TrainResult train_cribriform(Net& net, const Dataset& gg4, const TrainConfig& config) {
  check_dataset(net, gg4);
  if (net.output_shape().back() != 1) throw data_error("cribriform training needs a single sigmoid output");
  std::size_t positives = 0;
  for (int t : gg4.targets) {
    if (t != 0 && t != 1) throw data_error("cribriform targets must be 0 or 1");
    positives += t == 1;
  }
  if (positives == 0 || positives == gg4.size())
    throw data_error("cribriform training set contains a single class");
  return run_training(net, gg4, config, [](const Tensor<float>& p, std::span<const int> t) {
    return nn::binary_cross_entropy(p, t);
  });
}

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history) {
  std::ofstream out(path);
  if (!out) throw data_error("cannot write " + path.string());
  out << "epoch,loss,accuracy\n";
  char line[128];
  for (const auto& r : history) {
    std::snprintf(line, sizeof line, "%zu,%.9g,%.6f\n", r.epoch, r.loss, r.accuracy);
    out << line;
  }
}

}  // namespace gleason::fsconv
