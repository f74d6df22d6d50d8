#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "steerkit/model.hpp"
#include "steerkit/tensor.hpp"

namespace steerkit {

/// Adam moment buffers mirroring a network's parameter tensors.
template <typename S>
struct AdamState {
  std::int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double learning_rate = 1e-3;
  std::vector<Tensor<S>> m_weights, v_weights;  // parallel to net.layers
  std::vector<Tensor<S>> m_biases, v_biases;
};

template <typename S>
AdamState<S> adam_init(const Network<S>& net, double learning_rate, double beta1 = 0.9,
                       double beta2 = 0.999, double epsilon = 1e-8) {
  AdamState<S> st;
  st.learning_rate = learning_rate;
  st.beta1 = beta1;
  st.beta2 = beta2;
  st.epsilon = epsilon;
  auto zero_like = [](const std::vector<Tensor<S>>& src) {
    std::vector<Tensor<S>> out;
    out.reserve(src.size());
    for (const auto& t : src) out.push_back(t.empty() ? Tensor<S>() : Tensor<S>(t.shape()));
    return out;
  };
  st.m_weights = zero_like(net.weights);
  st.v_weights = zero_like(net.weights);
  st.m_biases = zero_like(net.biases);
  st.v_biases = zero_like(net.biases);
  return st;
}

namespace detail {

template <typename S>
void adam_update_one(Tensor<S>& param, const Tensor<S>& grad, Tensor<S>& m, Tensor<S>& v,
                     const AdamState<S>& st, std::int64_t t, const std::string& where) {
  if (grad.empty()) return;
  if (!grad.same_shape(param))
    throw DimError("adam_step: gradient shape " + shape_to_string(grad.shape()) +
                   " != parameter shape " + shape_to_string(param.shape()) + " at " + where);
  if (!grad.all_finite()) throw TrainingError("adam_step: non-finite gradient at " + where);
  const S b1 = static_cast<S>(st.beta1), b2 = static_cast<S>(st.beta2);
  const S bc1 = static_cast<S>(1.0 - std::pow(st.beta1, static_cast<double>(t)));
  const S bc2 = static_cast<S>(1.0 - std::pow(st.beta2, static_cast<double>(t)));
  const S lr = static_cast<S>(st.learning_rate);
  const S eps = static_cast<S>(st.epsilon);
  m.vec() = b1 * m.vec() + (S(1) - b1) * grad.vec();
  v.array() = b2 * v.array() + (S(1) - b2) * grad.array().square();
  param.array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

}  // namespace detail

/// One bias-corrected Adam step over every parameter tensor of the network.
template <typename S>
void adam_step(Network<S>& net, const Gradients<S>& grads, AdamState<S>& st) {
  if (grads.weights.size() != net.layers.size())
    throw DimError("adam_step: gradients do not belong to this network");
  const std::int64_t t = st.step_count + 1;
  for (size_t i = 0; i < net.layers.size(); ++i) {
    if (net.weights[i].empty()) continue;
    const std::string where = "layer " + std::to_string(i) + " (" + layer_kind_name(net.layers[i].kind) + ")";
    detail::adam_update_one(net.weights[i], grads.weights[i], st.m_weights[i], st.v_weights[i], st, t, where + " weight");
    detail::adam_update_one(net.biases[i], grads.biases[i], st.m_biases[i], st.v_biases[i], st, t, where + " bias");
  }
  st.step_count = t;
}

}  // namespace steerkit
