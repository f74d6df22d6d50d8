#pragma once

#include <string>
#include <vector>

#include "steerkit/errors.hpp"
#include "steerkit/tensor.hpp"

namespace steerkit {

template <typename S>
struct MseResult {
  S loss{};
  std::vector<S> grad;  // d loss / d predicted_i = -2 (y_i - yhat_i) / n
};

/// Mean squared error between actual and predicted steering angles.
template <typename S>
MseResult<S> mse_loss(const std::vector<S>& actual, const std::vector<S>& predicted) {
  if (actual.empty()) throw ConfigError("mse_loss: empty input");
  if (actual.size() != predicted.size())
    throw DimError("mse_loss: length mismatch, actual n=" + std::to_string(actual.size()) +
                   " vs predicted n=" + std::to_string(predicted.size()));
  const S n = static_cast<S>(actual.size());
  MseResult<S> r;
  r.grad.resize(actual.size());
  S acc = 0;
  for (size_t i = 0; i < actual.size(); ++i) {
    const S d = actual[i] - predicted[i];
    acc += d * d;
    r.grad[i] = S(-2) * d / n;
  }
  r.loss = acc / n;
  return r;
}

/// Open-loop evaluation record: actual/predicted angle pairs and their MSE.
struct EvalReport {
  int n = 0;
  std::vector<float> actual;
  std::vector<float> predicted;
  double mse = 0.0;
};

}  // namespace steerkit
