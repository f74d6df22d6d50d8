#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "steerkit/image.hpp"

namespace steerkit {

/// Closed-loop track: ordered centerline points (meters) forming a
/// non-self-intersecting polygon, plus the drivable half width.
struct TrackDefinition {
  std::string name;
  double half_width = 4.0;
  std::vector<Eigen::Vector2d> centerline;
};

/// Throws ConfigError if the track breaks an invariant (fewer than 8 points,
/// repeated consecutive points, self-intersection).
void validate_track(const TrackDefinition& track);

TrackDefinition make_oval_track();
TrackDefinition make_scurve_track();

void save_track(const TrackDefinition& track, const std::filesystem::path& path);
TrackDefinition load_track(const std::filesystem::path& path);

/// Planar kinematic pose. Heading is measured so that positive steering
/// rotates the heading toward the right vector (-sin h, cos h); the whole
/// module (offsets, rendering, steering signs) shares that convention.
struct CarState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // wrapped to (-pi, pi]
  double speed = 0.0;    // m/s, >= 0
  double wheelbase = 2.5;
};

struct VehicleParams {
  double wheelbase = 2.5;
  double max_steer_rad = 25.0 * M_PI / 180.0;
  double max_accel = 4.0;   // m/s^2 at full throttle
  double drag = 0.5;        // 1/s
};

/// Kinematic bicycle step. Steering is clamped to [-1,1] and scaled by the
/// maximum steer angle; throttle is clamped to [0,1]; speed never drops
/// below zero.
CarState step(const CarState& state, double steering, double throttle, double dt,
              const VehicleParams& params = {});

/// Precomputed segment/arc tables plus a coarse spatial index for fast
/// point-to-centerline queries during rendering.
class TrackGeometry {
 public:
  explicit TrackGeometry(const TrackDefinition& track);

  struct Nearest {
    double distance = 0.0;       // unsigned meters
    double signed_offset = 0.0;  // positive = right of travel direction
    double arc = 0.0;            // arc position of the projection
    int segment = 0;
  };

  Nearest nearest(const Eigen::Vector2d& p) const;

  /// Grid-accelerated query that only resolves points within `band` meters
  /// of the centerline; returns nothing for points farther than that.
  std::optional<Nearest> nearest_within_band(const Eigen::Vector2d& p) const;
  double band() const { return band_; }

  Eigen::Vector2d point_at_arc(double s) const;
  Eigen::Vector2d direction_at_arc(double s) const;
  double total_length() const { return total_length_; }
  const TrackDefinition& track() const { return track_; }

 private:
  Nearest nearest_among(const Eigen::Vector2d& p, const std::vector<int>& segments) const;

  TrackDefinition track_;
  std::vector<Eigen::Vector2d> dirs_;     // unit direction per segment
  std::vector<double> lengths_;           // per segment
  std::vector<double> arc_start_;         // cumulative arc at segment start
  double total_length_ = 0.0;

  // Coarse grid over the band around the centerline.
  double band_ = 0.0;
  double cell_ = 5.0;
  double min_x_ = 0.0, min_y_ = 0.0;
  int grid_w_ = 0, grid_h_ = 0;
  std::vector<std::vector<int>> cells_;
};

/// Signed perpendicular distance from the car to the nearest centerline
/// segment; positive = right of travel direction.
double lateral_offset(const CarState& state, const TrackDefinition& track);
double lateral_offset(const CarState& state, const TrackGeometry& geom);
bool off_track(const CarState& state, const TrackDefinition& track);

struct CameraRig {
  double height = 1.5;           // m above ground
  double focal_px = 90.0;
  int horizon_row = 24;
  double lateral_offset = 0.0;   // m, positive = right of car centre
  double forward_offset = 0.5;   // m ahead of the rear axle
  double max_view = 60.0;        // m, ground beyond this renders as haze
};

constexpr int kFrameHeight = 70;
constexpr int kFrameWidth = 320;

/// Deterministic schematic rasterization of the road scene at the raw
/// simulator frame size 70x320x3: sky, haze, grass, road with border stripes
/// and centre dashes, and the car hood. `seed` only shifts the per-frame
/// brightness, so one frame is bit-reproducible given (state, track, seed).
ImageU8 render(const CarState& state, const TrackDefinition& track, std::uint64_t seed,
               const CameraRig& rig = {});
ImageU8 render(const CarState& state, const TrackGeometry& geom, std::uint64_t seed,
               const CameraRig& rig = {});

/// Pure-pursuit steering label toward a lookahead point on the centerline,
/// normalized by the maximum steer angle and clamped to [-1,1].
double oracle_steering(const CarState& state, const TrackDefinition& track,
                       double lookahead = 8.0, const VehicleParams& params = {});
double oracle_steering(const CarState& state, const TrackGeometry& geom, double lookahead = 8.0,
                       const VehicleParams& params = {});

struct EpisodeResult {
  double survived_seconds = 0.0;
  double mean_speed = 0.0;
  bool off_track = false;
  std::vector<CarState> trace;  // one state per completed step
};

/// Closed-loop policy: maps the rendered frame (null when `needs_image` is
/// false) and current state to a steering command.
struct Policy {
  std::function<double(const ImageU8* frame, const CarState& state)> act;
  bool needs_image = true;
};

Policy make_oracle_policy(const TrackDefinition& track, double lookahead = 8.0,
                          VehicleParams params = {});
Policy make_constant_policy(double steering);

struct EpisodeConfig {
  double cap_seconds = 60.0;
  double dt = 0.01;
  double target_speed = 4.47;  // ~10 mph
  double throttle_kp = 0.5;
  std::uint64_t render_seed = 0;
  VehicleParams vehicle;
  CameraRig camera;
};

/// Drives the loop render -> policy -> step until the car leaves the track
/// or the cap elapses; survived_seconds is the metric.
EpisodeResult run_episode(const Policy& policy, const TrackDefinition& track,
                          const EpisodeConfig& cfg = {});

/// Proportional speed controller shared with the drive server.
double speed_controller_throttle(double speed, double target, double kp);

struct SynthConfig {
  double frame_dt = 0.05;          // one log row per tick
  double camera_spacing = 1.2;     // m between center and side cameras
  double steering_noise = 0.25;    // OU noise scale on the applied steering
  double noise_timescale = 1.2;    // s
  double lookahead = 8.0;
  double target_speed = 4.47;
  double throttle_kp = 0.5;
  int jpeg_quality = 90;
  VehicleParams vehicle;
  CameraRig camera;
};

/// Drives the track with the steering oracle plus exploration noise and
/// writes `frames` log rows with three camera frames each, in the exact
/// layout the data module consumes (driving_log.csv + IMG/). The logged
/// steering is the clean oracle command; the noise only moves the car.
void synth_dataset(const TrackDefinition& track, int frames, std::uint64_t seed,
                   const std::filesystem::path& out_dir, const SynthConfig& cfg = {});

}  // namespace steerkit
