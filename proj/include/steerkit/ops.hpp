#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <random>
#include <vector>

#include "steerkit/tensor.hpp"

namespace steerkit {

enum class Mode { Train, Eval };

using RngStream = std::mt19937;

/// Valid (unpadded) cross-correlation geometry. Output extents must stay >= 1.
struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
  int stride = 1;

  int out_extent(int in, int kernel) const { return (in - kernel) / stride + 1; }
};

namespace detail {

inline void check_conv_spec(const ConvSpec& s) {
  if (s.in_channels < 1 || s.out_channels < 1 || s.kernel_h < 1 || s.kernel_w < 1 || s.stride < 1) {
    throw DimError("conv spec has non-positive field (in=" + std::to_string(s.in_channels) +
                   " out=" + std::to_string(s.out_channels) + " kh=" + std::to_string(s.kernel_h) +
                   " kw=" + std::to_string(s.kernel_w) + " stride=" + std::to_string(s.stride) + ")");
  }
}

template <typename S>
void check_conv_shapes(const Tensor<S>& input, const Tensor<S>& weights, const Tensor<S>& bias,
                       const ConvSpec& spec) {
  check_conv_spec(spec);
  if (input.rank() != 4) throw DimError("conv2d: input must be rank 4 [N,C,H,W], got " + shape_to_string(input.shape()));
  if (weights.rank() != 4) throw DimError("conv2d: weights must be rank 4 [Cout,Cin,kh,kw], got " + shape_to_string(weights.shape()));
  if (input.extent(1) != spec.in_channels)
    throw DimError("conv2d: input channel axis C=" + std::to_string(input.extent(1)) +
                   " != spec.in_channels=" + std::to_string(spec.in_channels));
  if (weights.extent(0) != spec.out_channels || weights.extent(1) != spec.in_channels ||
      weights.extent(2) != spec.kernel_h || weights.extent(3) != spec.kernel_w)
    throw DimError("conv2d: weight shape " + shape_to_string(weights.shape()) + " != spec [" +
                   std::to_string(spec.out_channels) + "x" + std::to_string(spec.in_channels) + "x" +
                   std::to_string(spec.kernel_h) + "x" + std::to_string(spec.kernel_w) + "]");
  if (bias.size() != spec.out_channels)
    throw DimError("conv2d: bias length " + std::to_string(bias.size()) +
                   " != out_channels=" + std::to_string(spec.out_channels));
  if (spec.out_extent(input.extent(2), spec.kernel_h) < 1)
    throw DimError("conv2d: H axis too small: in=" + std::to_string(input.extent(2)) +
                   " kernel=" + std::to_string(spec.kernel_h));
  if (spec.out_extent(input.extent(3), spec.kernel_w) < 1)
    throw DimError("conv2d: W axis too small: in=" + std::to_string(input.extent(3)) +
                   " kernel=" + std::to_string(spec.kernel_w));
}

// Gathers the receptive-field patches of one sample into a [Cin*kh*kw, Ho*Wo]
// column-major matrix so the convolution becomes a single matrix product.
template <typename S>
void im2col(const Tensor<S>& input, int n, const ConvSpec& spec,
            Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>& patches) {
  const int C = input.extent(1), H = input.extent(2), W = input.extent(3);
  const int kh = spec.kernel_h, kw = spec.kernel_w, stride = spec.stride;
  const int Ho = spec.out_extent(H, kh), Wo = spec.out_extent(W, kw);
  patches.resize(static_cast<Eigen::Index>(C) * kh * kw, static_cast<Eigen::Index>(Ho) * Wo);
  const S* base = input.data() + input.flat4(n, 0, 0, 0);
  for (int oh = 0; oh < Ho; ++oh) {
    for (int ow = 0; ow < Wo; ++ow) {
      S* col = patches.col(static_cast<Eigen::Index>(oh) * Wo + ow).data();
      const int ih0 = oh * stride, iw0 = ow * stride;
      for (int c = 0; c < C; ++c) {
        const S* plane = base + (static_cast<std::int64_t>(c) * H + ih0) * W + iw0;
        for (int dh = 0; dh < kh; ++dh) {
          for (int dw = 0; dw < kw; ++dw) *col++ = plane[static_cast<std::int64_t>(dh) * W + dw];
        }
      }
    }
  }
}

}  // namespace detail

/// Cross-correlation with valid padding: out[n,co,oh,ow] =
/// bias[co] + sum over (ci,dh,dw) of input[n,ci,oh*s+dh,ow*s+dw] * weights[co,ci,dh,dw].
template <typename S>
Tensor<S> conv2d_forward(const Tensor<S>& input, const Tensor<S>& weights, const Tensor<S>& bias,
                         const ConvSpec& spec) {
  detail::check_conv_shapes(input, weights, bias, spec);
  const int N = input.extent(0);
  const int Ho = spec.out_extent(input.extent(2), spec.kernel_h);
  const int Wo = spec.out_extent(input.extent(3), spec.kernel_w);
  const Eigen::Index K = static_cast<Eigen::Index>(spec.in_channels) * spec.kernel_h * spec.kernel_w;

  Tensor<S> out({N, spec.out_channels, Ho, Wo});
  Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> wmat(
      weights.data(), spec.out_channels, K);
  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> patches;
  for (int n = 0; n < N; ++n) {
    detail::im2col(input, n, spec, patches);
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> omat(
        out.data() + out.flat4(n, 0, 0, 0), spec.out_channels, static_cast<Eigen::Index>(Ho) * Wo);
    omat.noalias() = wmat * patches;
    omat.colwise() += bias.vec();
  }
  return out;
}

template <typename S>
struct ConvGrads {
  Tensor<S> input;
  Tensor<S> weights;
  Tensor<S> bias;
};

template <typename S>
ConvGrads<S> conv2d_backward(const Tensor<S>& grad_out, const Tensor<S>& input,
                             const Tensor<S>& weights, const ConvSpec& spec) {
  Tensor<S> bias_probe({spec.out_channels});
  detail::check_conv_shapes(input, weights, bias_probe, spec);
  const int N = input.extent(0), H = input.extent(2), W = input.extent(3);
  const int Ho = spec.out_extent(H, spec.kernel_h), Wo = spec.out_extent(W, spec.kernel_w);
  if (grad_out.shape() != Shape{N, spec.out_channels, Ho, Wo}) {
    throw DimError("conv2d_backward: grad_out shape " + shape_to_string(grad_out.shape()) +
                   " does not match forward output [" + std::to_string(N) + "x" +
                   std::to_string(spec.out_channels) + "x" + std::to_string(Ho) + "x" +
                   std::to_string(Wo) + "] for the cached input");
  }
  const Eigen::Index K = static_cast<Eigen::Index>(spec.in_channels) * spec.kernel_h * spec.kernel_w;

  ConvGrads<S> g{Tensor<S>(input.shape()), Tensor<S>(weights.shape()), Tensor<S>({spec.out_channels})};
  Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> wmat(
      weights.data(), spec.out_channels, K);
  Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gwmat(
      g.weights.data(), spec.out_channels, K);

  Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic> patches, gpatches;
  for (int n = 0; n < N; ++n) {
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gomat(
        grad_out.data() + grad_out.flat4(n, 0, 0, 0), spec.out_channels,
        static_cast<Eigen::Index>(Ho) * Wo);
    detail::im2col(input, n, spec, patches);
    gwmat.noalias() += gomat * patches.transpose();
    g.bias.vec() += gomat.rowwise().sum();

    // col2im: scatter-add patch gradients back onto the input layout.
    gpatches.noalias() = wmat.transpose() * gomat;
    S* gin = g.input.data() + g.input.flat4(n, 0, 0, 0);
    for (int oh = 0; oh < Ho; ++oh) {
      for (int ow = 0; ow < Wo; ++ow) {
        const S* col = gpatches.col(static_cast<Eigen::Index>(oh) * Wo + ow).data();
        const int ih0 = oh * spec.stride, iw0 = ow * spec.stride;
        for (int c = 0; c < spec.in_channels; ++c) {
          S* plane = gin + (static_cast<std::int64_t>(c) * H + ih0) * W + iw0;
          for (int dh = 0; dh < spec.kernel_h; ++dh) {
            for (int dw = 0; dw < spec.kernel_w; ++dw)
              plane[static_cast<std::int64_t>(dh) * W + dw] += *col++;
          }
        }
      }
    }
  }
  return g;
}

/// Winning input position per pooled element, as flat indices into the input
/// tensor. Shapes are kept so backward can reject a stale map.
struct ArgmaxMap {
  Shape in_shape;
  Shape out_shape;
  std::vector<std::int64_t> flat;
};

template <typename S>
struct PoolResult {
  Tensor<S> output;
  ArgmaxMap argmax;
};

/// 2x2/stride-2 max pooling with floor truncation of odd trailing extents.
/// Ties go to the first occurrence in row-major window scan order.
template <typename S>
PoolResult<S> maxpool2x2_forward(const Tensor<S>& input) {
  if (input.rank() != 4) throw DimError("maxpool2x2: input must be rank 4, got " + shape_to_string(input.shape()));
  const int N = input.extent(0), C = input.extent(1), H = input.extent(2), W = input.extent(3);
  if (H < 2 || W < 2)
    throw DimError("maxpool2x2: spatial extent too small (H=" + std::to_string(H) +
                   ", W=" + std::to_string(W) + "), need >= 2 on both axes");
  const int Ho = H / 2, Wo = W / 2;
  PoolResult<S> r{Tensor<S>({N, C, Ho, Wo}), ArgmaxMap{input.shape(), {N, C, Ho, Wo}, {}}};
  r.argmax.flat.resize(static_cast<size_t>(r.output.size()));
  std::int64_t o = 0;
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      for (int oh = 0; oh < Ho; ++oh) {
        for (int ow = 0; ow < Wo; ++ow, ++o) {
          std::int64_t best_idx = input.flat4(n, c, oh * 2, ow * 2);
          S best = input[best_idx];
          for (int dh = 0; dh < 2; ++dh) {
            for (int dw = 0; dw < 2; ++dw) {
              const std::int64_t idx = input.flat4(n, c, oh * 2 + dh, ow * 2 + dw);
              if (input[idx] > best) {
                best = input[idx];
                best_idx = idx;
              }
            }
          }
          r.output[o] = best;
          r.argmax.flat[static_cast<size_t>(o)] = best_idx;
        }
      }
    }
  }
  return r;
}

template <typename S>
Tensor<S> maxpool2x2_backward(const Tensor<S>& grad_out, const ArgmaxMap& argmax,
                              const Shape& input_shape) {
  if (input_shape != argmax.in_shape)
    throw DimError("maxpool2x2_backward: input shape " + shape_to_string(input_shape) +
                   " does not match the argmax map's " + shape_to_string(argmax.in_shape));
  if (grad_out.shape() != argmax.out_shape)
    throw DimError("maxpool2x2_backward: grad_out shape " + shape_to_string(grad_out.shape()) +
                   " does not match the argmax map's " + shape_to_string(argmax.out_shape));
  Tensor<S> grad_in(input_shape);
  for (std::int64_t o = 0; o < grad_out.size(); ++o) {
    grad_in[argmax.flat[static_cast<size_t>(o)]] += grad_out[o];
  }
  return grad_in;
}

/// 2x2/stride-2 average pooling with the same floor semantics as max pooling.
template <typename S>
Tensor<S> avgpool2x2_forward(const Tensor<S>& input) {
  if (input.rank() != 4) throw DimError("avgpool2x2: input must be rank 4, got " + shape_to_string(input.shape()));
  const int N = input.extent(0), C = input.extent(1), H = input.extent(2), W = input.extent(3);
  if (H < 2 || W < 2)
    throw DimError("avgpool2x2: spatial extent too small (H=" + std::to_string(H) +
                   ", W=" + std::to_string(W) + "), need >= 2 on both axes");
  const int Ho = H / 2, Wo = W / 2;
  Tensor<S> out({N, C, Ho, Wo});
  std::int64_t o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow, ++o)
          out[o] = (input(n, c, oh * 2, ow * 2) + input(n, c, oh * 2, ow * 2 + 1) +
                    input(n, c, oh * 2 + 1, ow * 2) + input(n, c, oh * 2 + 1, ow * 2 + 1)) /
                   static_cast<S>(4);
  return out;
}

template <typename S>
Tensor<S> avgpool2x2_backward(const Tensor<S>& grad_out, const Shape& input_shape) {
  if (input_shape.size() != 4)
    throw DimError("avgpool2x2_backward: input shape must be rank 4, got " + shape_to_string(input_shape));
  const int N = input_shape[0], C = input_shape[1], H = input_shape[2], W = input_shape[3];
  if (grad_out.shape() != Shape{N, C, H / 2, W / 2})
    throw DimError("avgpool2x2_backward: grad_out shape " + shape_to_string(grad_out.shape()) +
                   " does not match pooled " + shape_to_string(input_shape));
  Tensor<S> grad_in(input_shape);
  const int Ho = H / 2, Wo = W / 2;
  std::int64_t o = 0;
  for (int n = 0; n < N; ++n)
    for (int c = 0; c < C; ++c)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow, ++o) {
          const S q = grad_out[o] / static_cast<S>(4);
          grad_in(n, c, oh * 2, ow * 2) = q;
          grad_in(n, c, oh * 2, ow * 2 + 1) = q;
          grad_in(n, c, oh * 2 + 1, ow * 2) = q;
          grad_in(n, c, oh * 2 + 1, ow * 2 + 1) = q;
        }
  return grad_in;
}

namespace detail {

template <typename S>
void check_linear_shapes(const Tensor<S>& input, const Tensor<S>& weights, const Tensor<S>* bias) {
  if (input.rank() != 2) throw DimError("linear: input must be rank 2 [N,F], got " + shape_to_string(input.shape()));
  if (weights.rank() != 2) throw DimError("linear: weights must be rank 2 [F,G], got " + shape_to_string(weights.shape()));
  if (input.extent(1) != weights.extent(0))
    throw DimError("linear: inner extent mismatch, input F=" + std::to_string(input.extent(1)) +
                   " vs weights F=" + std::to_string(weights.extent(0)));
  if (bias && bias->size() != weights.extent(1))
    throw DimError("linear: bias length " + std::to_string(bias->size()) +
                   " != output extent G=" + std::to_string(weights.extent(1)));
}

}  // namespace detail

/// Affine map out = input * weights + bias. Rows are processed one at a time
/// so a sample's result does not depend on its batch neighbours.
template <typename S>
Tensor<S> linear_forward(const Tensor<S>& input, const Tensor<S>& weights, const Tensor<S>& bias) {
  detail::check_linear_shapes(input, weights, &bias);
  const int N = input.extent(0), F = input.extent(1), G = weights.extent(1);
  Tensor<S> out({N, G});
  Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> wmat(
      weights.data(), F, G);
  for (int n = 0; n < N; ++n) {
    Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>> row(input.data() + static_cast<std::int64_t>(n) * F, F);
    Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> orow(out.data() + static_cast<std::int64_t>(n) * G, G);
    orow.noalias() = row * wmat;
    orow += bias.vec().transpose();
  }
  return out;
}

template <typename S>
struct LinearGrads {
  Tensor<S> input;
  Tensor<S> weights;
  Tensor<S> bias;
};

template <typename S>
LinearGrads<S> linear_backward(const Tensor<S>& grad_out, const Tensor<S>& input,
                               const Tensor<S>& weights) {
  detail::check_linear_shapes(input, weights, static_cast<const Tensor<S>*>(nullptr));
  const int N = input.extent(0), F = input.extent(1), G = weights.extent(1);
  if (grad_out.shape() != Shape{N, G})
    throw DimError("linear_backward: grad_out shape " + shape_to_string(grad_out.shape()) +
                   " does not match forward output [" + std::to_string(N) + "x" + std::to_string(G) + "]");
  LinearGrads<S> g{Tensor<S>({N, F}), Tensor<S>({F, G}), Tensor<S>({G})};
  Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> wmat(weights.data(), F, G);
  Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> in(input.data(), N, F);
  Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> go(grad_out.data(), N, G);
  Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gin(g.input.data(), N, F);
  Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> gw(g.weights.data(), F, G);
  gin.noalias() = go * wmat.transpose();
  gw.noalias() = in.transpose() * go;
  g.bias.vec() = go.colwise().sum().transpose();
  return g;
}

template <typename S>
Tensor<S> relu_forward(const Tensor<S>& input) {
  return Tensor<S>(input.shape(), input.vec().cwiseMax(S(0)));
}

/// Subgradient at exactly 0 is defined as 0.
template <typename S>
Tensor<S> relu_backward(const Tensor<S>& grad_out, const Tensor<S>& input) {
  if (!grad_out.same_shape(input))
    throw DimError("relu_backward: grad_out shape " + shape_to_string(grad_out.shape()) +
                   " != cached input shape " + shape_to_string(input.shape()));
  Tensor<S> g(input.shape());
  g.array() = (input.array() > S(0)).select(grad_out.vec(), Tensor<S>(input.shape()).vec()).array();
  return g;
}

template <typename S>
Tensor<S> elu_forward(const Tensor<S>& input, S alpha = S(1)) {
  Tensor<S> out(input.shape());
  out.array() = (input.array() > S(0)).select(input.vec(), alpha * (input.array().exp() - S(1))).array();
  return out;
}

template <typename S>
Tensor<S> elu_backward(const Tensor<S>& grad_out, const Tensor<S>& input, S alpha = S(1)) {
  if (!grad_out.same_shape(input))
    throw DimError("elu_backward: grad_out shape " + shape_to_string(grad_out.shape()) +
                   " != cached input shape " + shape_to_string(input.shape()));
  Tensor<S> g(input.shape());
  auto slope = (input.array() > S(0))
                   .select(Tensor<S>::constant(input.shape(), S(1)).vec(),
                           alpha * input.array().exp());
  g.array() = grad_out.array() * slope.array();
  return g;
}

struct DropoutMask {
  Shape shape;
  std::vector<std::uint8_t> keep;  // empty means identity (eval mode / rate 0)
};

template <typename S>
struct DropoutResult {
  Tensor<S> output;
  DropoutMask mask;
};

/// Inverted dropout: kept elements are scaled by 1/(1-rate) at train time so
/// eval mode is the identity.
template <typename S>
DropoutResult<S> dropout(const Tensor<S>& input, double rate, Mode mode, RngStream& rng) {
  if (!(rate >= 0.0 && rate < 1.0))
    throw ConfigError("dropout rate must be in [0,1), got " + std::to_string(rate));
  if (mode == Mode::Eval || rate == 0.0) {
    return DropoutResult<S>{input, DropoutMask{input.shape(), {}}};
  }
  DropoutResult<S> r{Tensor<S>(input.shape()), DropoutMask{input.shape(), {}}};
  r.mask.keep.resize(static_cast<size_t>(input.size()));
  const S scale = static_cast<S>(1.0 / (1.0 - rate));
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  for (std::int64_t i = 0; i < input.size(); ++i) {
    const bool keep = uni(rng) >= rate;
    r.mask.keep[static_cast<size_t>(i)] = keep ? 1 : 0;
    r.output[i] = keep ? input[i] * scale : S(0);
  }
  return r;
}

template <typename S>
Tensor<S> dropout_backward(const Tensor<S>& grad_out, const DropoutMask& mask, double rate) {
  if (grad_out.shape() != mask.shape)
    throw DimError("dropout_backward: grad_out shape " + shape_to_string(grad_out.shape()) +
                   " != mask shape " + shape_to_string(mask.shape));
  if (mask.keep.empty()) return grad_out;
  Tensor<S> g(grad_out.shape());
  const S scale = static_cast<S>(1.0 / (1.0 - rate));
  for (std::int64_t i = 0; i < grad_out.size(); ++i) {
    g[i] = mask.keep[static_cast<size_t>(i)] ? grad_out[i] * scale : S(0);
  }
  return g;
}

}  // namespace steerkit
