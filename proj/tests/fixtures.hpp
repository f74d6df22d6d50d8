#pragma once

// Published 30-image steering-angle fixtures: the recorded (actual) angles
// and the predictions of four reference models, plus their reported MSEs.

#include <array>
#include <string>
#include <vector>

namespace fixtures {

inline const std::vector<float> kActualAngles = {
    -0.341f, 0.000f, 0.000f, -0.072f, -0.418f, -0.116f, 0.000f, 0.000f, 0.000f, 0.000f,
    0.000f,  0.000f, 0.000f, -0.071f, -0.391f, -0.279f, 0.000f, 0.000f, 0.000f, 0.000f,
    0.000f,  0.000f, 0.000f, 0.000f,  0.000f,  0.000f,  0.000f, 0.000f, 0.000f, 0.000f};

inline const std::vector<float> kLaksnetPredictions = {
    -0.348f, -0.355f, -0.363f, -0.375f, -0.355f, -0.350f, -0.325f, -0.251f, -0.280f, -0.375f,
    -0.360f, -0.383f, -0.417f, -0.464f, -0.395f, -0.402f, -0.264f, -0.219f, -0.206f, -0.238f,
    -0.237f, -0.280f, -0.278f, -0.251f, -0.335f, -0.305f, -0.483f, -0.342f, -0.381f, -0.345f};

inline const std::vector<float> kNvidiaPredictions = {
    -0.079f, -0.082f, -0.098f, -0.186f, -0.079f, -0.094f, -0.032f, -0.060f, -0.030f, -0.036f,
    -0.032f, -0.068f, -0.024f, -0.059f, -0.064f, -0.055f, -0.045f, -0.029f, -0.049f, -0.048f,
    -0.056f, -0.042f, -0.044f, -0.036f, -0.053f, -0.040f, -0.051f, -0.051f, -0.074f, -0.083f};

inline const std::vector<float> kAlexnetPredictions = {
    -0.133f, -0.033f, -0.289f, -0.053f, -0.035f, -0.206f, -0.225f, -0.169f, 0.001f,  -0.197f,
    -0.297f, -0.023f, -0.032f, -0.130f, 0.001f,  -0.057f, -0.044f, -0.020f, -0.147f, -0.065f,
    -0.012f, -0.228f, 0.034f,  -0.135f, -0.007f, -0.184f, -0.068f, -0.077f, -0.244f, -0.151f};

inline const std::vector<float> kNasnetLargePredictions = {
    3.315f, 3.294f, 3.458f, 3.507f, 3.459f, 3.563f, 3.421f, 3.511f, 3.576f, 3.652f,
    3.742f, 3.632f, 3.742f, 3.745f, 3.978f, 3.722f, 3.901f, 3.840f, 3.818f, 3.703f,
    3.794f, 3.583f, 3.625f, 3.692f, 3.771f, 3.762f, 3.651f, 3.557f, 3.518f, 3.589f};

constexpr double kLaksnetMse = 0.091;
constexpr double kNvidiaMse = 0.014;
constexpr double kAlexnetMse = 0.031;
constexpr double kNasnetLargeMse = 13.682;
constexpr double kMseTolerance = 0.002;  // table entries are rounded to 3 decimals

// Simulator driving-log rows as produced in training mode.
inline const std::vector<std::string> kDrivingLogRows = {
    "center_216.jpg,left_216.jpg,right_216.jpg,0,0.3325,0,0.2858",
    "center_316.jpg,left_316.jpg,right_316.jpg,0,0.6327,0,0.8770",
    "center_424.jpg,left_424.jpg,right_424.jpg,-0.1215,0.9266,0,1.8474",
    "center_535.jpg,left_535.jpg,right_535.jpg,-0.4860,1,0,3.2320",
    "center_637.jpg,left_637.jpg,right_637.jpg,-0.1827,1,0,4.4072",
    "center_739.jpg,left_739.jpg,right_739.jpg,0,1,0,5.5639",
};

struct LogRowValues {
  float steering, throttle, brake, speed;
};

inline const std::vector<LogRowValues> kDrivingLogValues = {
    {0.0f, 0.3325f, 0.0f, 0.2858f},    {0.0f, 0.6327f, 0.0f, 0.8770f},
    {-0.1215f, 0.9266f, 0.0f, 1.8474f}, {-0.4860f, 1.0f, 0.0f, 3.2320f},
    {-0.1827f, 1.0f, 0.0f, 4.4072f},   {0.0f, 1.0f, 0.0f, 5.5639f},
};

}  // namespace fixtures
