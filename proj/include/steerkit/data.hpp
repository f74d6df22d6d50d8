#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "steerkit/image.hpp"
#include "steerkit/ops.hpp"
#include "steerkit/tensor.hpp"

namespace steerkit {

/// One row of the simulator driving log. Steering sign convention:
/// positive = right turn, zero = straight.
struct DrivingLogRecord {
  std::filesystem::path center_path;
  std::filesystem::path left_path;
  std::filesystem::path right_path;
  float steering = 0.0f;
  float throttle = 0.0f;
  float brake = 0.0f;
  float speed = 0.0f;
};

/// Parses a 7-column, headerless driving log. Recorded image paths are
/// stripped to their basename and resolved against the log's directory
/// (or its IMG/ subdirectory when present).
std::vector<DrivingLogRecord> parse_driving_log(const std::filesystem::path& path);

/// One log row rendered back to the 7-column text form.
std::string serialize_driving_log_row(const DrivingLogRecord& rec);

/// Preprocessed training sample: planar [3,66,200] tensor in [-1,1].
struct Sample {
  TensorF image;
  float label = 0.0f;
};

constexpr int kInputHeight = 66;
constexpr int kInputWidth = 200;

/// Vertical crop, bilinear resize to 66x200, channel reorder to planar,
/// normalize p -> p/127.5 - 1.
TensorF preprocess(const ImageU8& raw, int crop_top = 0, int crop_bottom = 0);

enum class Camera { Center, Left, Right };

/// Picks one of the three camera frames and adjusts the steering label:
/// left-camera frames get +correction (steer back right), right-camera
/// frames get -correction.
std::pair<std::filesystem::path, float> select_camera(const DrivingLogRecord& rec, Camera which,
                                                      float correction);

struct AugmentConfig {
  double flip_prob = 0.5;
  double max_rotation_deg = 5.0;  // must stay <= 15
  int max_crop_jitter = 4;        // pixels, applied before resize
};

/// Raw-image augmentation applied before preprocess: horizontal flip with
/// label negation, small rotation about the centre, crop jitter.
std::pair<ImageU8, float> augment(const ImageU8& raw, float label, RngStream& rng,
                                  const AugmentConfig& cfg);

/// Full shuffled permutation split into batch index lists; the last partial
/// batch is kept.
std::vector<std::vector<int>> make_batch_plan(int n_samples, int batch_size, std::uint64_t seed);

/// In-memory batching of preprocessed samples.
std::vector<std::pair<TensorF, std::vector<float>>> make_batches(const std::vector<Sample>& samples,
                                                                 int batch_size,
                                                                 std::uint64_t seed);

/// Stacks sample images into one [N,3,66,200] batch tensor.
TensorF stack_images(const std::vector<const TensorF*>& images);

}  // namespace steerkit
