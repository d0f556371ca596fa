#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "gleason/explain/explain.hpp"
#include "gleason/fsconv/fsconv.hpp"

using namespace gleason;
using namespace gleason::explain;
namespace L = nn::layers;

namespace {

nn::Tensor<double> random_input(const nn::Shape& per_sample, std::uint64_t seed) {
  nn::Shape s{1};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  nn::Tensor<double> t(s);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0, 1);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(rng);
  return t;
}

nn::Network<double> small_gmp_net(std::uint64_t seed) {
  nn::Network<double> net({3, 16, 16}, seed);
  net.add(L::conv2d("conv1", 3, 3, 6));
  net.add(L::relu("relu1"));
  net.add(L::max_pool2d("pool1", 2, 2));
  net.add(L::conv2d("conv2", 3, 3, 5));
  net.add(L::relu("relu2"));
  net.add(L::global_max_pool("gmp"));
  net.add(L::fully_connected("output", 4));
  net.add(L::softmax("softmax"));
  // non-zero biases so that the maps are not trivially sparse
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> g(0.0, 0.1);
  for (std::size_t i = 0; i < net.size(); ++i)
    if (!net.layer(i).params.empty())
      for (std::size_t k = 0; k < net.layer(i).params[1].size(); ++k) net.layer(i).params[1][k] = g(rng);
  return net;
}

}  // namespace

TEST_CASE("single filter CAM is the classifier weight times the map") {
  nn::Network<double> net({1, 4, 4}, 1);
  net.add(L::conv2d("conv", 1, 1, 1));
  net.add(L::global_max_pool("gmp"));
  net.add(L::fully_connected("output", 2));
  net.add(L::softmax("softmax"));
  net.layer(0).params[0][0] = 1.0;
  net.layer(2).params[0][0] = 2.0;
  net.layer(2).params[0][1] = -1.0;
  const auto x = random_input({1, 4, 4}, 2);
  const auto r = cam(net, x, 0);
  REQUIRE(r.weights.size() == 1);
  CHECK(r.weights[0] == doctest::Approx(2.0).epsilon(1e-12));
  for (std::size_t p = 0; p < 16; ++p) CHECK(r.raw.data[p] == doctest::Approx(2.0 * x[p]).epsilon(1e-6));
}

TEST_CASE("gradient CAM equals the analytic weighted sum") {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    const auto net = small_gmp_net(seed);
    const auto x = random_input(net.input_shape(), seed * 7);
    const auto acts = net.forward(x);
    const std::size_t g = net.index_of("gmp");
    const auto& maps = acts.outputs[g];
    const auto& w = net.layer(net.index_of("output")).params[0];  // (4, 5)
    for (std::size_t c = 0; c < 4; ++c) {
      const auto r = cam(net, x, c);
      for (std::size_t i = 0; i < 5; ++i) CHECK(std::abs(r.weights[i] - w[c * 5 + i]) < 1e-12);
      for (std::size_t p = 0; p < 64; ++p) {
        double direct = 0;
        for (std::size_t i = 0; i < 5; ++i) direct += w[c * 5 + i] * maps[i * 64 + p];
        REQUIRE(std::abs(r.raw.data[p] - direct) < 1e-6);
      }
    }
  }
}

TEST_CASE("CAM ignores a constant added to the class logit") {
  auto net = small_gmp_net(9);
  const auto x = random_input(net.input_shape(), 10);
  const auto a = cam(net, x, 2);
  net.layer(net.index_of("output")).params[1][2] += 5.0;
  const auto b = cam(net, x, 2);
  CHECK(a.raw == b.raw);
}

TEST_CASE("CAM needs a global pooling top") {
  nn::Network<double> net({1, 4, 4}, 1);
  net.add(L::conv2d("conv", 1, 1, 1));
  net.add(L::fully_connected("output", 2));
  CHECK_THROWS_WITH(cam(net, random_input({1, 4, 4}, 1), 0), doctest::Contains("global pooling"));
  CHECK_THROWS_AS(cam(small_gmp_net(1), random_input({3, 16, 16}, 1), 4), Error);
}

TEST_CASE("CAM on the grader network") {
  const auto net = fsconv::build_fsconv(fsconv::TopModel::GMP, 4, 32).cast<double>();
  const auto r = cam(net, random_input(net.input_shape(), 4), 1);
  CHECK(r.raw.rows == 4);
  CHECK(r.weights.size() == fsconv::kConv3Width);
  const auto h = cam_postprocess(r.raw, 32, 32);
  CHECK(h.normalized.rows == 32);
  for (float v : h.normalized.data) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("post-processing worked example") {
  FloatImage raw(1, 4, 1);
  raw.data = {-1.0f, 0.5f, 1.0f, 2.0f};
  const auto h = cam_postprocess(raw, 1, 4);
  const std::vector<float> want{0.0f, 0.25f, 0.5f, 1.0f};
  for (std::size_t i = 0; i < 4; ++i) CHECK(h.normalized.data[i] == doctest::Approx(want[i]));
  CHECK(h.mask.data == std::vector<std::uint8_t>{0, 0, 0, 1});
  CHECK(h.warnings.empty());
}

TEST_CASE("post-processing edge cases") {
  const auto ones = cam_postprocess(FloatImage(3, 3, 1, 0.7f), 12, 12);
  for (float v : ones.normalized.data) CHECK(v == doctest::Approx(1.0f));
  for (auto v : ones.mask.data) CHECK(v == 1);

  FloatImage neg(2, 2, 1, -0.5f);
  neg.data[3] = 0.0f;
  const auto z = cam_postprocess(neg, 8, 8);
  for (float v : z.normalized.data) CHECK(v == 0.0f);
  for (auto v : z.mask.data) CHECK(v == 0);
  CHECK(z.warnings.size() == 1);

  std::mt19937_64 rng(6);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  FloatImage n(5, 7, 1);
  for (auto& v : n.data) v = u(rng);
  n.data[11] = 1.0f;
  const auto once = cam_postprocess(n, 5, 7);
  const auto twice = cam_postprocess(once.normalized, 5, 7);
  for (std::size_t i = 0; i < n.data.size(); ++i) {
    CHECK(once.normalized.data[i] == doctest::Approx(n.data[i]).epsilon(1e-6));
    CHECK(twice.normalized.data[i] == doctest::Approx(once.normalized.data[i]).epsilon(1e-6));
  }
}

TEST_CASE("upsampled mask stays inside the high-attention region") {
  std::mt19937_64 rng(12);
  std::normal_distribution<float> g(0.0f, 1.0f);
  FloatImage raw(7, 7, 1);
  for (auto& v : raw.data) v = g(rng);
  const auto h = cam_postprocess(raw, 56, 56);
  // every mask pixel maps back to a low-resolution cell at or above the level
  const float peak = *std::max_element(raw.data.begin(), raw.data.end());
  for (std::size_t r = 0; r < 56; ++r)
    for (std::size_t c = 0; c < 56; ++c)
      if (h.mask.at(r, c)) CHECK(raw.at(r / 8, c / 8) / peak >= 0.75f);
}

TEST_CASE("activation maximization basics") {
  nn::Network<double> net({1, 5, 5}, 1);
  net.add(L::conv2d("conv", 1, 1, 1));
  net.layer(0).params[0][0] = 1.0;
  AmConfig cfg;
  cfg.steps = 0;
  const auto zero = activation_maximization(net, 0, 0, cfg);
  CHECK(zero.image == zero.initial);
  CHECK(zero.trace.size() == 1);
  CHECK(activation_maximization(net, 0, 0, cfg).initial == zero.initial);

  cfg.steps = 25;
  cfg.step_size = 0.0;
  CHECK(activation_maximization(net, 0, 0, cfg).image == zero.initial);

  for (std::size_t steps = 1; steps <= 10; ++steps) {
    cfg.steps = steps;
    cfg.step_size = 0.1;
    const auto r = activation_maximization(net, 0, 0, cfg);
    for (std::size_t i = 0; i < r.image.size(); ++i) {
      double expect = zero.initial[i];
      for (std::size_t k = 0; k < steps; ++k) expect = std::min(1.0, expect + 0.1);
      CHECK(r.image[i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  for (std::size_t i = 0; i < zero.initial.size(); ++i) {
    CHECK(zero.initial[i] >= 0.0);
    CHECK(zero.initial[i] <= 1.0);
  }
  CHECK_THROWS_AS(activation_maximization(net, 0, 1, cfg), Error);
  CHECK_THROWS_AS(activation_maximization(net, 3, 0, cfg), Error);
}

TEST_CASE("activation maximization descends on grader filters") {
  const auto net = fsconv::build_fsconv(fsconv::TopModel::GMP, 4, 32).cast<double>();
  for (std::size_t j : {1u, 2u, 3u}) {
    const std::size_t layer = conv_layer_index(net, j);
    AmConfig cfg;
    cfg.steps = 100;
    cfg.step_size = 1e-3;
    cfg.seed = j;
    const auto r = activation_maximization(net, layer, 3, cfg);
    REQUIRE(r.trace.size() == 101);
    int upticks = 0;
    for (std::size_t k = 1; k < r.trace.size(); ++k) upticks += r.trace[k] > r.trace[k - 1];
    CHECK(upticks <= 2);
    CHECK(r.trace.back() <= r.trace.front());
  }
  CHECK_THROWS_AS(conv_layer_index(net, 4), Error);
}

TEST_CASE("explain output files") {
  const auto dir = std::filesystem::temp_directory_path() / "gleason_test_explain";
  FloatImage raw(2, 2, 1);
  raw.data = {0.1f, 0.9f, 0.3f, 1.0f};
  write_cam_pngs(dir, "GG4", cam_postprocess(raw, 8, 8));
  nn::Network<double> net({3, 6, 6}, 1);
  net.add(L::conv2d("conv", 3, 3, 2));
  AmConfig cfg;
  cfg.steps = 3;
  write_am_outputs(dir, 1, 0, activation_maximization(net, 0, 0, cfg));
  CHECK(std::filesystem::exists(dir / "cam_GG4.png"));
  CHECK(std::filesystem::exists(dir / "cam_mask_GG4.png"));
  CHECK(std::filesystem::exists(dir / "am_layer1_filter0.png"));
  CHECK(std::filesystem::exists(dir / "am_trace.csv"));
  std::filesystem::remove_all(dir);
}
