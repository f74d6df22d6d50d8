#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include "steerkit/adam.hpp"
#include "steerkit/loss.hpp"
#include "steerkit/model.hpp"
#include "steerkit/serialize.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace steerkit;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const char* name) {
  auto dir = fs::temp_directory_path() / "steerkit_model_tests";
  fs::create_directories(dir);
  return dir / name;
}

Gradients<float> zero_gradients(const NetworkF& net) {
  Gradients<float> g;
  g.weights.assign(net.layers.size(), TensorF());
  g.biases.assign(net.layers.size(), TensorF());
  for (size_t i = 0; i < net.layers.size(); ++i) {
    if (!net.weights[i].empty()) {
      g.weights[i] = TensorF(net.weights[i].shape());
      g.biases[i] = TensorF(net.biases[i].shape());
    }
  }
  return g;
}

}  // namespace

TEST_CASE("laksnet builder meets its structural constraints") {
  auto net = build_laksnet(1);
  CHECK(count_parameters(net) == 274017);
  CHECK(net.input_shape == Shape3{3, 66, 200});

  auto shapes = layer_output_shapes(net.input_shape, net.layers);
  bool saw_flatten = false;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    if (net.layers[i].kind == LayerKind::Flatten) {
      saw_flatten = true;
      CHECK(shapes[i] == Shape{576});  // 64x1x9
    }
  }
  CHECK(saw_flatten);

  // First linear layer is 576->256: 147,712 parameters on its own.
  for (size_t i = 0; i < net.layers.size(); ++i) {
    if (net.layers[i].kind == LayerKind::Linear) {
      CHECK(net.layers[i].in_features == 576);
      CHECK(net.layers[i].out_features == 256);
      CHECK(net.weights[i].size() + net.biases[i].size() == 576 * 256 + 256);
      break;
    }
  }

  SUBCASE("zero image maps to a single finite scalar") {
    auto out = forward(net, TensorF::zeros({1, 3, 66, 200}), Mode::Eval);
    CHECK(out.shape() == Shape{1, 1});
    CHECK(std::isfinite(out[0]));
  }
}

TEST_CASE("pilotnet builder") {
  auto net = build_pilotnet(2);
  CHECK(count_parameters(net) == 252219);
  auto shapes = layer_output_shapes(net.input_shape, net.layers);
  for (size_t i = 0; i < net.layers.size(); ++i) {
    if (net.layers[i].kind == LayerKind::Flatten) CHECK(shapes[i] == Shape{1152});
  }
  auto out = forward(net, TensorF::zeros({1, 3, 66, 200}), Mode::Eval);
  CHECK(out.shape() == Shape{1, 1});
  CHECK(std::isfinite(out[0]));
}

TEST_CASE("build_custom") {
  SUBCASE("a laksnet-equivalent spec reproduces the parameter count") {
    std::vector<LayerSpec> specs{
        LayerSpec::make_conv(3, 16, 3),  LayerSpec::make_relu(), LayerSpec::make_maxpool(),
        LayerSpec::make_conv(16, 32, 3), LayerSpec::make_relu(), LayerSpec::make_maxpool(),
        LayerSpec::make_conv(32, 64, 3), LayerSpec::make_relu(), LayerSpec::make_maxpool(),
        LayerSpec::make_conv(64, 64, 5), LayerSpec::make_relu(), LayerSpec::make_maxpool(),
        LayerSpec::make_dropout(0.25),   LayerSpec::make_flatten(),
        LayerSpec::make_linear(576, 256), LayerSpec::make_relu(),
        LayerSpec::make_dropout(0.5),    LayerSpec::make_linear(256, 1),
    };
    auto net = build_custom(specs, Shape3{3, 66, 200}, 3);
    CHECK(count_parameters(net) == 274017);
  }

  SUBCASE("three conv layers of 3x3 filters chain on 3x66x200") {
    std::vector<LayerSpec> specs{
        LayerSpec::make_conv(3, 16, 3),  LayerSpec::make_relu(), LayerSpec::make_maxpool(),
        LayerSpec::make_conv(16, 32, 3), LayerSpec::make_relu(), LayerSpec::make_maxpool(),
        LayerSpec::make_conv(32, 64, 3), LayerSpec::make_relu(), LayerSpec::make_maxpool(),
        LayerSpec::make_flatten(),
        LayerSpec::make_linear(64 * 6 * 23, 64), LayerSpec::make_relu(),
        LayerSpec::make_linear(64, 1),
    };
    CHECK_NOTHROW(build_custom(specs, Shape3{3, 66, 200}, 4));
  }

  SUBCASE("elu and avgpool variants build and run") {
    std::vector<LayerSpec> specs{
        LayerSpec::make_conv(3, 8, 3), LayerSpec::make_elu(), LayerSpec::make_avgpool(),
        LayerSpec::make_flatten(),
        LayerSpec::make_linear(8 * 32 * 99, 1),
    };
    auto net = build_custom(specs, Shape3{3, 66, 200}, 5);
    auto out = forward(net, TensorF::zeros({2, 3, 66, 200}), Mode::Eval);
    CHECK(out.shape() == Shape{2, 1});
  }

  SUBCASE("empty spec is a configuration error") {
    CHECK_THROWS_AS(build_custom({}, Shape3{3, 66, 200}, 0), ConfigError);
  }

  SUBCASE("non-chaining spec names the first bad layer") {
    std::vector<LayerSpec> specs{
        LayerSpec::make_conv(3, 8, 3),
        LayerSpec::make_conv(16, 8, 3),  // wrong in_channels
    };
    CHECK_THROWS_WITH_AS(build_custom(specs, Shape3{3, 66, 200}, 0),
                         doctest::Contains("layer 1"), ConfigError);
  }
}

TEST_CASE("forward semantics") {
  auto net = build_laksnet(7);
  std::mt19937 rng(19);
  auto batch8 = oracles::random_tensor<float>({8, 3, 66, 200}, rng, -1.0, 1.0);

  SUBCASE("row 0 prediction is independent of batch size in eval mode") {
    TensorF batch1({1, 3, 66, 200});
    for (std::int64_t i = 0; i < batch1.size(); ++i) batch1[i] = batch8[i];
    auto out1 = forward(net, batch1, Mode::Eval);
    auto out8 = forward(net, batch8, Mode::Eval);
    CHECK(out1[0] == out8[0]);  // bitwise
  }

  SUBCASE("eval mode is deterministic") {
    auto a = forward(net, batch8, Mode::Eval);
    auto b = forward(net, batch8, Mode::Eval);
    CHECK((a.vec() - b.vec()).cwiseAbs().maxCoeff() == 0.0f);
  }

  SUBCASE("train mode is deterministic given the dropout seed") {
    RngStream r1(77), r2(77);
    auto a = forward(net, batch8, Mode::Train, &r1);
    auto b = forward(net, batch8, Mode::Train, &r2);
    CHECK((a.vec() - b.vec()).cwiseAbs().maxCoeff() == 0.0f);
  }

  SUBCASE("shape mismatch raises a dimension error") {
    CHECK_THROWS_AS(forward(net, TensorF::zeros({1, 3, 66, 100}), Mode::Eval), DimError);
  }

  SUBCASE("train mode without an rng stream is rejected") {
    CHECK_THROWS_AS(forward(net, batch8, Mode::Train), ConfigError);
  }

  SUBCASE("backward populates a gradient for every parameter tensor") {
    ForwardTrace<float> trace;
    RngStream r(5);
    forward(net, batch8, Mode::Train, &r, &trace);
    TensorF up = TensorF::constant({8, 1}, 1.0f / 8);
    auto g = backward(net, trace, up);
    for (size_t i = 0; i < net.layers.size(); ++i) {
      if (net.weights[i].empty()) continue;
      CHECK(g.weights[i].same_shape(net.weights[i]));
      CHECK(g.biases[i].same_shape(net.biases[i]));
      CHECK(g.weights[i].all_finite());
    }
  }
}

TEST_CASE("end-to-end laksnet gradient matches finite differences") {
  // Double-precision copy of the float-built network; dropout disabled so the
  // probe function is deterministic.
  auto net = build_laksnet<double>(11, DropoutRates{0.0, 0.0});
  std::mt19937 rng(123);
  auto batch = oracles::random_tensor<double>({1, 3, 66, 200}, rng, -1.0, 1.0);

  ForwardTrace<double> trace;
  forward(net, batch, Mode::Eval, nullptr, &trace);
  TensorD up({1, 1});
  up[0] = 1.0;
  auto grads = backward(net, trace, up);

  std::uniform_int_distribution<int> pick(0, 1 << 30);
  int checked = 0;
  double worst = 0.0;
  for (size_t li = 0; li < net.layers.size(); ++li) {
    if (net.weights[li].empty()) continue;
    for (int k = 0; k < 5 && checked < 30; ++k, ++checked) {
      const std::int64_t j = pick(rng) % net.weights[li].size();
      const double eps = 1e-3;
      const double orig = net.weights[li][j];
      net.weights[li][j] = orig + eps;
      const double fp = forward(net, batch, Mode::Eval)[0];
      net.weights[li][j] = orig - eps;
      const double fm = forward(net, batch, Mode::Eval)[0];
      net.weights[li][j] = orig;
      const double fd = (fp - fm) / (2 * eps);
      const double an = grads.weights[li][j];
      const double denom = std::max({std::abs(fd), std::abs(an), 1e-4});
      worst = std::max(worst, std::abs(fd - an) / denom);
    }
  }
  CHECK(checked == 30);
  CHECK(worst <= 1e-3);
}

TEST_CASE("mse_loss") {
  SUBCASE("identical vectors give zero loss") {
    std::vector<float> v{0.1f, -0.2f, 0.3f};
    auto r = mse_loss(v, v);
    CHECK(r.loss == 0.0f);
    for (float g : r.grad) CHECK(g == 0.0f);
  }
  SUBCASE("published fixture columns reproduce the reported MSEs") {
    auto laks = mse_loss(fixtures::kActualAngles, fixtures::kLaksnetPredictions);
    CHECK(std::abs(laks.loss - fixtures::kLaksnetMse) <= fixtures::kMseTolerance);
    auto nvidia = mse_loss(fixtures::kActualAngles, fixtures::kNvidiaPredictions);
    CHECK(std::abs(nvidia.loss - fixtures::kNvidiaMse) <= fixtures::kMseTolerance);
  }
  SUBCASE("empty input is a configuration error") {
    CHECK_THROWS_AS(mse_loss<float>({}, {}), ConfigError);
  }
  SUBCASE("length mismatch is a dimension error") {
    CHECK_THROWS_AS(mse_loss<float>({1.0f}, {1.0f, 2.0f}), DimError);
  }
  SUBCASE("gradient matches finite differences to 1e-6 (quadratic, 64-bit)") {
    std::mt19937 rng(31);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    std::vector<double> y(7), yhat(7);
    for (auto& v : y) v = dist(rng);
    for (auto& v : yhat) v = dist(rng);
    auto r = mse_loss(y, yhat);
    for (size_t i = 0; i < yhat.size(); ++i) {
      const double eps = 1e-5;
      auto yp = yhat;
      yp[i] += eps;
      auto ym = yhat;
      ym[i] -= eps;
      const double fd = (mse_loss(y, yp).loss - mse_loss(y, ym).loss) / (2 * eps);
      CHECK(std::abs(fd - r.grad[i]) / std::max(std::abs(fd), 1e-8) <= 1e-6);
    }
  }
}

TEST_CASE("adam_step") {
  SUBCASE("zero gradients with fresh state leave parameters unchanged") {
    auto net = build_laksnet(3);
    auto before = net.weights;
    auto st = adam_init(net, 0.1);
    adam_step(net, zero_gradients(net), st);
    for (size_t i = 0; i < net.weights.size(); ++i)
      if (!net.weights[i].empty())
        CHECK((net.weights[i].vec() - before[i].vec()).cwiseAbs().maxCoeff() == 0.0f);
  }

  SUBCASE("first step on a scalar reduces to lr * sign(g)") {
    Network<float> net;
    net.input_shape = {1, 1, 1, 1};
    net.layers = {LayerSpec::make_linear(1, 1)};
    net.weights = {TensorF::from({1, 1}, {1.0f})};
    net.biases = {TensorF::zeros({1})};
    auto st = adam_init(net, 0.1);
    Gradients<float> g;
    g.weights = {TensorF::from({1, 1}, {1.0f})};
    g.biases = {TensorF::zeros({1})};
    adam_step(net, g, st);
    CHECK(net.weights[0][0] == doctest::Approx(0.9f).epsilon(1e-5));
    CHECK(st.step_count == 1);
  }

  SUBCASE("100 steps on f(theta)=theta^2 contract toward zero") {
    Network<float> net;
    net.input_shape = {1, 1, 1, 1};
    net.layers = {LayerSpec::make_linear(1, 1)};
    net.weights = {TensorF::from({1, 1}, {1.0f})};
    net.biases = {TensorF::zeros({1})};
    auto st = adam_init(net, 0.1);
    for (int i = 0; i < 100; ++i) {
      Gradients<float> g;
      g.weights = {TensorF::from({1, 1}, {2.0f * net.weights[0][0]})};
      g.biases = {TensorF::zeros({1})};
      adam_step(net, g, st);
    }
    CHECK(std::abs(net.weights[0][0]) < 0.05f);
  }

  SUBCASE("learning rate 0 is the identity") {
    auto net = build_laksnet(5);
    auto before = net.weights;
    auto st = adam_init(net, 0.0);
    std::mt19937 rng(8);
    auto g = zero_gradients(net);
    for (size_t i = 0; i < net.layers.size(); ++i) {
      if (!net.weights[i].empty()) {
        g.weights[i] = oracles::random_tensor<float>(net.weights[i].shape(), rng);
        g.biases[i] = oracles::random_tensor<float>(net.biases[i].shape(), rng);
      }
    }
    adam_step(net, g, st);
    for (size_t i = 0; i < net.weights.size(); ++i)
      if (!net.weights[i].empty())
        CHECK((net.weights[i].vec() - before[i].vec()).cwiseAbs().maxCoeff() == 0.0f);
  }

  SUBCASE("non-finite gradient raises a training error naming the layer") {
    auto net = build_laksnet(5);
    auto st = adam_init(net, 0.1);
    auto g = zero_gradients(net);
    g.weights[0][0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_WITH_AS(adam_step(net, g, st), doctest::Contains("layer 0"), TrainingError);
  }
}

TEST_CASE("weights save/load") {
  auto net = build_laksnet(42);
  auto path = temp_file("laksnet.lnw");
  save_weights(net, path);
  auto loaded = load_weights(path);

  SUBCASE("round trip is bit exact and preserves the layer list") {
    REQUIRE(loaded.layers.size() == net.layers.size());
    CHECK(loaded.input_shape == net.input_shape);
    CHECK(count_parameters(loaded) == 274017);
    for (size_t i = 0; i < net.layers.size(); ++i) {
      CHECK(loaded.layers[i].kind == net.layers[i].kind);
      if (!net.weights[i].empty()) {
        CHECK(std::memcmp(loaded.weights[i].data(), net.weights[i].data(),
                          sizeof(float) * static_cast<size_t>(net.weights[i].size())) == 0);
        CHECK(std::memcmp(loaded.biases[i].data(), net.biases[i].data(),
                          sizeof(float) * static_cast<size_t>(net.biases[i].size())) == 0);
      }
    }
  }

  SUBCASE("truncated file is a corrupt-file error") {
    auto trunc = temp_file("trunc.lnw");
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(trunc, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();
    CHECK_THROWS_AS(load_weights(trunc), CorruptFileError);
  }

  SUBCASE("bit flip is a corrupt-file error (CRC)") {
    auto flipped = temp_file("flip.lnw");
    std::ifstream in(path, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    bytes[bytes.size() / 2] ^= 0x40;
    std::ofstream out(flipped, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.close();
    CHECK_THROWS_AS(load_weights(flipped), CorruptFileError);
  }

  SUBCASE("bad magic is a corrupt-file error") {
    auto bad = temp_file("bad.lnw");
    std::ofstream out(bad, std::ios::binary);
    out << "JUNKJUNKJUNKJUNKJUNK";
    out.close();
    CHECK_THROWS_AS(load_weights(bad), CorruptFileError);
  }
}

TEST_CASE("checkpoint save/load round-trips optimizer state") {
  auto net = build_laksnet(9);
  auto st = adam_init(net, 0.025);
  std::mt19937 rng(14);
  auto g = zero_gradients(net);
  for (size_t i = 0; i < net.layers.size(); ++i) {
    if (!net.weights[i].empty()) {
      g.weights[i] = oracles::random_tensor<float>(net.weights[i].shape(), rng, -0.1, 0.1);
      g.biases[i] = oracles::random_tensor<float>(net.biases[i].shape(), rng, -0.1, 0.1);
    }
  }
  adam_step(net, g, st);
  adam_step(net, g, st);

  auto path = temp_file("resume.ckpt");
  save_checkpoint(net, st, 7, path);
  auto ck = load_checkpoint(path);
  CHECK(ck.epoch == 7);
  CHECK(ck.adam.step_count == 2);
  CHECK(ck.adam.learning_rate == 0.025);
  for (size_t i = 0; i < net.layers.size(); ++i) {
    if (net.weights[i].empty()) continue;
    CHECK(std::memcmp(ck.net.weights[i].data(), net.weights[i].data(),
                      sizeof(float) * static_cast<size_t>(net.weights[i].size())) == 0);
    CHECK(std::memcmp(ck.adam.m_weights[i].data(), st.m_weights[i].data(),
                      sizeof(float) * static_cast<size_t>(st.m_weights[i].size())) == 0);
    CHECK(std::memcmp(ck.adam.v_weights[i].data(), st.v_weights[i].data(),
                      sizeof(float) * static_cast<size_t>(st.v_weights[i].size())) == 0);
  }

  SUBCASE("plain weights loader refuses a checkpoint") {
    CHECK_THROWS_AS(load_weights(path), CorruptFileError);
  }
}
