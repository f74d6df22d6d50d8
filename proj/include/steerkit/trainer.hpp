#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "steerkit/data.hpp"
#include "steerkit/loss.hpp"
#include "steerkit/model.hpp"

namespace steerkit {

/// One dataset entry: a frame (on disk or in memory) and its steering label.
struct LabeledFrame {
  std::filesystem::path path;   // empty when `image` is set
  std::optional<ImageU8> image; // in-memory frame, used when present
  float label = 0.0f;
};

using Dataset = std::vector<LabeledFrame>;

/// Expands log records into labeled frames. `cameras` selects which of the
/// three views contribute; side cameras get the steering correction applied.
Dataset dataset_from_records(const std::vector<DrivingLogRecord>& records,
                             const std::vector<Camera>& cameras, float correction);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  int checkpoint_every = 10;  // epochs; 0 disables
  bool augment = true;
  AugmentConfig aug;
  int crop_top = 0;
  int crop_bottom = 0;
  double dropout_conv = 0.25;
  double dropout_fc = 0.5;

  std::filesystem::path metrics_path;     // JSONL, one object per epoch; empty disables
  std::filesystem::path checkpoint_path;  // single rolling checkpoint file; empty disables
  std::optional<std::filesystem::path> resume_from;

  // Injectable time source for the per-epoch "seconds" metric; tests pin it.
  std::function<double()> clock;
};

struct EpochMetrics {
  int epoch = 0;
  double train_mse = 0.0;
  double val_mse = 0.0;
  double wall_seconds = 0.0;
  double learning_rate = 0.0;
};

std::string metrics_to_json(const EpochMetrics& m);

struct TrainResult {
  Network<float> net;
  AdamState<float> adam;
  std::vector<EpochMetrics> metrics;
};

/// Runs the training loop on an initial network: per epoch a fresh shuffle,
/// forward, MSE loss, backward and Adam step per batch, then an eval-mode
/// validation pass. Deterministic for a given seed; resuming from an epoch-k
/// checkpoint reproduces the uninterrupted run exactly.
TrainResult train(const TrainConfig& cfg, const Dataset& dataset, Network<float> net);

/// Eval-mode predictions over a dataset (no augmentation, dropout off).
EvalReport evaluate(const Network<float>& net, const Dataset& dataset, int crop_top = 0,
                    int crop_bottom = 0);

/// Worker-parallelism cap: STEERKIT_THREADS when set, otherwise a small
/// hardware-based default. Always >= 1.
int worker_count();

}  // namespace steerkit
