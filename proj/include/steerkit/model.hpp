#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "steerkit/ops.hpp"
#include "steerkit/tensor.hpp"

namespace steerkit {

enum class LayerKind { Conv, MaxPool, AvgPool, Relu, Elu, Dropout, Flatten, Linear };

inline const char* layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::Conv: return "conv";
    case LayerKind::MaxPool: return "maxpool";
    case LayerKind::AvgPool: return "avgpool";
    case LayerKind::Relu: return "relu";
    case LayerKind::Elu: return "elu";
    case LayerKind::Dropout: return "dropout";
    case LayerKind::Flatten: return "flatten";
    case LayerKind::Linear: return "linear";
  }
  return "?";
}

struct LayerSpec {
  LayerKind kind{};
  ConvSpec conv{};           // Conv
  double rate = 0.0;         // Dropout
  int in_features = 0;       // Linear
  int out_features = 0;      // Linear

  static LayerSpec make_conv(int in_ch, int out_ch, int kernel, int stride = 1) {
    LayerSpec s;
    s.kind = LayerKind::Conv;
    s.conv = ConvSpec{in_ch, out_ch, kernel, kernel, stride};
    return s;
  }
  static LayerSpec make_maxpool() { return LayerSpec{LayerKind::MaxPool}; }
  static LayerSpec make_avgpool() { return LayerSpec{LayerKind::AvgPool}; }
  static LayerSpec make_relu() { return LayerSpec{LayerKind::Relu}; }
  static LayerSpec make_elu() { return LayerSpec{LayerKind::Elu}; }
  static LayerSpec make_dropout(double rate) {
    LayerSpec s;
    s.kind = LayerKind::Dropout;
    s.rate = rate;
    return s;
  }
  static LayerSpec make_flatten() { return LayerSpec{LayerKind::Flatten}; }
  static LayerSpec make_linear(int in_f, int out_f) {
    LayerSpec s;
    s.kind = LayerKind::Linear;
    s.in_features = in_f;
    s.out_features = out_f;
    return s;
  }
};

struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  bool operator==(const Shape3&) const = default;
};

/// Fixed sequential chain: ordered layer specs plus per-layer parameter
/// tensors (empty for parameterless layers). Forward/backward/step take a
/// Network by reference; read-only evaluation is safe to share.
template <typename S>
struct Network {
  Shape3 input_shape{};
  std::vector<LayerSpec> layers;
  std::vector<Tensor<S>> weights;  // parallel to layers
  std::vector<Tensor<S>> biases;   // parallel to layers

  template <typename T>
  Network<T> cast() const {
    Network<T> out;
    out.input_shape = input_shape;
    out.layers = layers;
    out.weights.reserve(weights.size());
    out.biases.reserve(biases.size());
    for (const auto& w : weights) out.weights.push_back(w.template cast<T>());
    for (const auto& b : biases) out.biases.push_back(b.template cast<T>());
    return out;
  }
};

using NetworkF = Network<float>;

/// Runs shape inference down the chain; throws ConfigError naming the first
/// layer whose input does not fit. Returned shapes are per-layer outputs
/// (excluding the batch axis); entry i is the output of layer i.
inline std::vector<Shape> layer_output_shapes(Shape3 input, const std::vector<LayerSpec>& layers) {
  std::vector<Shape> out;
  out.reserve(layers.size());
  // Current activation shape; rank 3 [C,H,W] until flatten, rank 1 [F] after.
  Shape cur{input.channels, input.height, input.width};
  auto bad = [&](size_t i, const std::string& why) {
    throw ConfigError("layer " + std::to_string(i) + " (" + layer_kind_name(layers[i].kind) +
                      "): " + why + " (input " + shape_to_string(cur) + ")");
  };
  for (size_t i = 0; i < layers.size(); ++i) {
    const LayerSpec& l = layers[i];
    switch (l.kind) {
      case LayerKind::Conv: {
        if (cur.size() != 3) bad(i, "expects a [C,H,W] input, have flattened features");
        if (cur[0] != l.conv.in_channels)
          bad(i, "in_channels=" + std::to_string(l.conv.in_channels) + " != incoming C=" + std::to_string(cur[0]));
        const int ho = l.conv.out_extent(cur[1], l.conv.kernel_h);
        const int wo = l.conv.out_extent(cur[2], l.conv.kernel_w);
        if (ho < 1 || wo < 1) bad(i, "kernel does not fit the incoming extents");
        cur = {l.conv.out_channels, ho, wo};
        break;
      }
      case LayerKind::MaxPool:
      case LayerKind::AvgPool: {
        if (cur.size() != 3) bad(i, "expects a [C,H,W] input");
        if (cur[1] < 2 || cur[2] < 2) bad(i, "spatial extent < 2");
        cur = {cur[0], cur[1] / 2, cur[2] / 2};
        break;
      }
      case LayerKind::Relu:
      case LayerKind::Elu:
        break;
      case LayerKind::Dropout:
        if (!(l.rate >= 0.0 && l.rate < 1.0)) bad(i, "rate " + std::to_string(l.rate) + " outside [0,1)");
        break;
      case LayerKind::Flatten: {
        if (cur.size() != 3) bad(i, "input already flat");
        cur = {cur[0] * cur[1] * cur[2]};
        break;
      }
      case LayerKind::Linear: {
        if (cur.size() != 1) bad(i, "expects flattened input; add a flatten layer first");
        if (cur[0] != l.in_features)
          bad(i, "in_features=" + std::to_string(l.in_features) + " != incoming F=" + std::to_string(cur[0]));
        if (l.out_features < 1) bad(i, "out_features must be >= 1");
        cur = {l.out_features};
        break;
      }
    }
    out.push_back(cur);
  }
  return out;
}

namespace detail {

// Fan-in-scaled Gaussian init, std = sqrt(2/fan_in); biases zero.
template <typename S>
void init_params(Network<S>& net, std::uint64_t seed) {
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  net.weights.assign(net.layers.size(), Tensor<S>());
  net.biases.assign(net.layers.size(), Tensor<S>());
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (l.kind == LayerKind::Conv) {
      const auto& c = l.conv;
      net.weights[i] = Tensor<S>({c.out_channels, c.in_channels, c.kernel_h, c.kernel_w});
      net.biases[i] = Tensor<S>({c.out_channels});
      const double fan_in = static_cast<double>(c.in_channels) * c.kernel_h * c.kernel_w;
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
      for (std::int64_t j = 0; j < net.weights[i].size(); ++j)
        net.weights[i][j] = static_cast<S>(dist(rng));
    } else if (l.kind == LayerKind::Linear) {
      net.weights[i] = Tensor<S>({l.in_features, l.out_features});
      net.biases[i] = Tensor<S>({l.out_features});
      std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / l.in_features));
      for (std::int64_t j = 0; j < net.weights[i].size(); ++j)
        net.weights[i][j] = static_cast<S>(dist(rng));
    }
  }
}

}  // namespace detail

/// Builds a network from a spec list, validating that the layers chain.
template <typename S = float>
Network<S> build_custom(const std::vector<LayerSpec>& specs, Shape3 input_shape,
                        std::uint64_t seed) {
  if (specs.empty()) throw ConfigError("empty layer spec list");
  if (input_shape.channels < 1 || input_shape.height < 1 || input_shape.width < 1)
    throw ConfigError("input shape must have positive extents");
  Network<S> net;
  net.input_shape = input_shape;
  net.layers = specs;
  layer_output_shapes(input_shape, specs);  // throws on a non-chaining spec
  detail::init_params(net, seed);
  return net;
}

struct DropoutRates {
  double after_conv = 0.25;
  double before_output = 0.5;
};

/// The four-conv steering regressor: 3x3/3x3/3x3/5x5 kernels with 2x2 max
/// pooling after each conv, 576->256->1 head, 274,017 parameters on a
/// 3x66x200 input.
template <typename S = float>
Network<S> build_laksnet(std::uint64_t seed, DropoutRates rates = {}) {
  std::vector<LayerSpec> specs{
      LayerSpec::make_conv(3, 16, 3),  LayerSpec::make_relu(), LayerSpec::make_maxpool(),
      LayerSpec::make_conv(16, 32, 3), LayerSpec::make_relu(), LayerSpec::make_maxpool(),
      LayerSpec::make_conv(32, 64, 3), LayerSpec::make_relu(), LayerSpec::make_maxpool(),
      LayerSpec::make_conv(64, 64, 5), LayerSpec::make_relu(), LayerSpec::make_maxpool(),
      LayerSpec::make_dropout(rates.after_conv),
      LayerSpec::make_flatten(),
      LayerSpec::make_linear(576, 256), LayerSpec::make_relu(),
      LayerSpec::make_dropout(rates.before_output),
      LayerSpec::make_linear(256, 1),
  };
  return build_custom<S>(specs, Shape3{3, 66, 200}, seed);
}

/// Canonical five-conv NVIDIA-style regressor on 3x66x200: 24/36/48 at 5x5
/// stride 2, 64/64 at 3x3, then 1152->100->50->10->1. 252,219 parameters.
template <typename S = float>
Network<S> build_pilotnet(std::uint64_t seed, double dropout_rate = 0.5) {
  std::vector<LayerSpec> specs{
      LayerSpec::make_conv(3, 24, 5, 2),  LayerSpec::make_relu(),
      LayerSpec::make_conv(24, 36, 5, 2), LayerSpec::make_relu(),
      LayerSpec::make_conv(36, 48, 5, 2), LayerSpec::make_relu(),
      LayerSpec::make_conv(48, 64, 3),    LayerSpec::make_relu(),
      LayerSpec::make_conv(64, 64, 3),    LayerSpec::make_relu(),
      LayerSpec::make_flatten(),
      LayerSpec::make_dropout(dropout_rate),
      LayerSpec::make_linear(1152, 100), LayerSpec::make_relu(),
      LayerSpec::make_linear(100, 50),   LayerSpec::make_relu(),
      LayerSpec::make_linear(50, 10),    LayerSpec::make_relu(),
      LayerSpec::make_linear(10, 1),
  };
  return build_custom<S>(specs, Shape3{3, 66, 200}, seed);
}

template <typename S>
std::int64_t count_parameters(const Network<S>& net) {
  std::int64_t n = 0;
  for (const auto& w : net.weights) n += w.size();
  for (const auto& b : net.biases) n += b.size();
  return n;
}

/// Per-layer activations and stochastic decisions captured during forward,
/// consumed by backward. Keeping the trace outside the Network lets read-only
/// evaluation share one network across workers.
template <typename S>
struct ForwardTrace {
  std::vector<Tensor<S>> inputs;      // input tensor of each layer
  std::vector<ArgmaxMap> argmax;      // parallel; used by maxpool layers
  std::vector<DropoutMask> masks;     // parallel; used by dropout layers
  Tensor<S> output;
};

template <typename S>
Tensor<S> forward(const Network<S>& net, const Tensor<S>& batch, Mode mode,
                  RngStream* rng = nullptr, ForwardTrace<S>* trace = nullptr) {
  if (batch.rank() != 4)
    throw DimError("forward: batch must be rank 4 [N,C,H,W], got " + shape_to_string(batch.shape()));
  const Shape expect{batch.extent(0), net.input_shape.channels, net.input_shape.height,
                     net.input_shape.width};
  if (batch.shape() != expect)
    throw DimError("forward: batch shape " + shape_to_string(batch.shape()) +
                   " does not match network input " + shape_to_string(expect));
  if (trace) {
    trace->inputs.assign(net.layers.size(), Tensor<S>());
    trace->argmax.assign(net.layers.size(), ArgmaxMap{});
    trace->masks.assign(net.layers.size(), DropoutMask{});
  }
  Tensor<S> x = batch;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    const LayerSpec& l = net.layers[i];
    if (trace) trace->inputs[i] = x;
    switch (l.kind) {
      case LayerKind::Conv:
        x = conv2d_forward(x, net.weights[i], net.biases[i], l.conv);
        break;
      case LayerKind::MaxPool: {
        auto r = maxpool2x2_forward(x);
        if (trace) trace->argmax[i] = std::move(r.argmax);
        x = std::move(r.output);
        break;
      }
      case LayerKind::AvgPool:
        x = avgpool2x2_forward(x);
        break;
      case LayerKind::Relu:
        x = relu_forward(x);
        break;
      case LayerKind::Elu:
        x = elu_forward(x);
        break;
      case LayerKind::Dropout: {
        if (mode == Mode::Train && !rng)
          throw ConfigError("train-mode forward through dropout requires an rng stream");
        if (mode == Mode::Train) {
          auto r = dropout(x, l.rate, mode, *rng);
          if (trace) trace->masks[i] = std::move(r.mask);
          x = std::move(r.output);
        } else if (trace) {
          trace->masks[i] = DropoutMask{x.shape(), {}};
        }
        break;
      }
      case LayerKind::Flatten: {
        const int n = x.extent(0);
        x = x.reshaped({n, static_cast<int>(x.size() / n)});
        break;
      }
      case LayerKind::Linear:
        x = linear_forward(x, net.weights[i], net.biases[i]);
        break;
    }
  }
  if (trace) trace->output = x;
  return x;
}

template <typename S>
struct Gradients {
  std::vector<Tensor<S>> weights;  // parallel to net.layers
  std::vector<Tensor<S>> biases;
  Tensor<S> input;
};

template <typename S>
Gradients<S> backward(const Network<S>& net, const ForwardTrace<S>& trace,
                      const Tensor<S>& grad_output) {
  if (trace.inputs.size() != net.layers.size())
    throw DimError("backward: trace does not belong to this network");
  Gradients<S> g;
  g.weights.assign(net.layers.size(), Tensor<S>());
  g.biases.assign(net.layers.size(), Tensor<S>());
  Tensor<S> gx = grad_output;
  if (gx.shape() != trace.output.shape())
    throw DimError("backward: grad shape " + shape_to_string(gx.shape()) +
                   " != forward output shape " + shape_to_string(trace.output.shape()));
  for (size_t ri = net.layers.size(); ri-- > 0;) {
    const LayerSpec& l = net.layers[ri];
    const Tensor<S>& x = trace.inputs[ri];
    switch (l.kind) {
      case LayerKind::Conv: {
        auto cg = conv2d_backward(gx, x, net.weights[ri], l.conv);
        g.weights[ri] = std::move(cg.weights);
        g.biases[ri] = std::move(cg.bias);
        gx = std::move(cg.input);
        break;
      }
      case LayerKind::MaxPool:
        gx = maxpool2x2_backward(gx, trace.argmax[ri], x.shape());
        break;
      case LayerKind::AvgPool:
        gx = avgpool2x2_backward(gx, x.shape());
        break;
      case LayerKind::Relu:
        gx = relu_backward(gx, x);
        break;
      case LayerKind::Elu:
        gx = elu_backward(gx, x);
        break;
      case LayerKind::Dropout:
        gx = dropout_backward(gx, trace.masks[ri], l.rate);
        break;
      case LayerKind::Flatten:
        gx = gx.reshaped(x.shape());
        break;
      case LayerKind::Linear: {
        auto lg = linear_backward(gx, x, net.weights[ri]);
        g.weights[ri] = std::move(lg.weights);
        g.biases[ri] = std::move(lg.bias);
        gx = std::move(lg.input);
        break;
      }
    }
  }
  g.input = std::move(gx);
  return g;
}

/// Human-readable one-line description of a layer, used by inspect output
/// and error messages.
inline std::string layer_to_string(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::Conv:
      return "conv " + std::to_string(l.conv.in_channels) + "->" + std::to_string(l.conv.out_channels) +
             " " + std::to_string(l.conv.kernel_h) + "x" + std::to_string(l.conv.kernel_w) +
             " stride " + std::to_string(l.conv.stride);
    case LayerKind::Dropout:
      return "dropout rate " + std::to_string(l.rate);
    case LayerKind::Linear:
      return "linear " + std::to_string(l.in_features) + "->" + std::to_string(l.out_features);
    default:
      return layer_kind_name(l.kind);
  }
}

}  // namespace steerkit
