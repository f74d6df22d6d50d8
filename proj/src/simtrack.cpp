#include "steerkit/simtrack.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <random>

#include <json.hpp>

#include "steerkit/data.hpp"
#include "steerkit/serialize.hpp"

namespace steerkit {

namespace {

Eigen::Vector2d forward_vec(double heading) { return {std::cos(heading), std::sin(heading)}; }
// Positive steering rotates the heading toward this vector.
Eigen::Vector2d right_vec(double heading) { return {-std::sin(heading), std::cos(heading)}; }

double wrap_angle(double a) {
  a = std::fmod(a + M_PI, 2.0 * M_PI);
  if (a <= 0.0) a += 2.0 * M_PI;
  return a - M_PI;
}

bool segments_intersect(const Eigen::Vector2d& a, const Eigen::Vector2d& b,
                        const Eigen::Vector2d& c, const Eigen::Vector2d& d) {
  auto cross = [](const Eigen::Vector2d& u, const Eigen::Vector2d& v) {
    return u.x() * v.y() - u.y() * v.x();
  };
  const double d1 = cross(b - a, c - a);
  const double d2 = cross(b - a, d - a);
  const double d3 = cross(d - c, a - c);
  const double d4 = cross(d - c, b - c);
  return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
}

}  // namespace

void validate_track(const TrackDefinition& track) {
  const auto& pts = track.centerline;
  if (pts.size() < 8)
    throw ConfigError("track '" + track.name + "' needs >= 8 centerline points, has " +
                      std::to_string(pts.size()));
  if (!(track.half_width > 0))
    throw ConfigError("track '" + track.name + "' half_width must be positive");
  const size_t n = pts.size();
  for (size_t i = 0; i < n; ++i) {
    if ((pts[(i + 1) % n] - pts[i]).norm() < 1e-9)
      throw ConfigError("track '" + track.name + "': consecutive points " + std::to_string(i) +
                        " and " + std::to_string((i + 1) % n) + " coincide");
  }
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = i + 1; j < n; ++j) {
      // Skip segments sharing an endpoint (neighbours and the closing pair).
      if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
      if (segments_intersect(pts[i], pts[(i + 1) % n], pts[j], pts[(j + 1) % n]))
        throw ConfigError("track '" + track.name + "': centerline self-intersects between segments " +
                          std::to_string(i) + " and " + std::to_string(j));
    }
  }
}

TrackDefinition make_oval_track() {
  TrackDefinition t;
  t.name = "oval";
  t.half_width = 4.0;
  const double straight = 80.0, radius = 30.0, step = 2.0;
  // Counterclockwise stadium: two straights joined by semicircles.
  for (double s = 0.0; s < straight; s += step) t.centerline.emplace_back(s, 0.0);
  for (double a = -M_PI / 2; a < M_PI / 2; a += step / radius)
    t.centerline.emplace_back(straight + radius * std::cos(a), radius + radius * std::sin(a));
  for (double s = straight; s > 0.0; s -= step) t.centerline.emplace_back(s, 2 * radius);
  for (double a = M_PI / 2; a < 3 * M_PI / 2; a += step / radius)
    t.centerline.emplace_back(radius * std::cos(a), radius + radius * std::sin(a));
  validate_track(t);
  return t;
}

TrackDefinition make_scurve_track() {
  TrackDefinition t;
  t.name = "scurve";
  t.half_width = 4.0;
  const double straight = 110.0, radius = 30.0, step = 2.0;
  const double amp = 4.0;
  // Stadium whose straights carry tapered S-shaped sweeps.
  auto wiggle = [&](double u) {  // u in [0,1] along a straight
    const double envelope = std::sin(M_PI * u) * std::sin(M_PI * u);
    return amp * std::sin(4.0 * M_PI * u) * envelope;
  };
  for (double s = 0.0; s < straight; s += step)
    t.centerline.emplace_back(s, wiggle(s / straight));
  for (double a = -M_PI / 2; a < M_PI / 2; a += step / radius)
    t.centerline.emplace_back(straight + radius * std::cos(a), radius + radius * std::sin(a));
  for (double s = straight; s > 0.0; s -= step)
    t.centerline.emplace_back(s, 2 * radius - wiggle(s / straight));
  for (double a = M_PI / 2; a < 3 * M_PI / 2; a += step / radius)
    t.centerline.emplace_back(radius * std::cos(a), radius + radius * std::sin(a));
  validate_track(t);
  return t;
}

void save_track(const TrackDefinition& track, const std::filesystem::path& path) {
  nlohmann::json j;
  j["name"] = track.name;
  j["half_width"] = track.half_width;
  auto& pts = j["centerline"] = nlohmann::json::array();
  for (const auto& p : track.centerline) pts.push_back({p.x(), p.y()});
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open track file " + path.string() + " for writing");
  out << j.dump(2) << "\n";
}

TrackDefinition load_track(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open track file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("track file " + path.string() + ": " + e.what());
  }
  TrackDefinition t;
  try {
    t.name = j.at("name").get<std::string>();
    t.half_width = j.at("half_width").get<double>();
    for (const auto& p : j.at("centerline")) t.centerline.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("track file " + path.string() + ": " + e.what());
  }
  validate_track(t);
  return t;
}

CarState step(const CarState& state, double steering, double throttle, double dt,
              const VehicleParams& params) {
  if (!(dt > 0.0 && dt <= 0.1)) throw ConfigError("step: dt must be in (0, 0.1], got " + std::to_string(dt));
  const double s = std::clamp(steering, -1.0, 1.0);
  const double thr = std::clamp(throttle, 0.0, 1.0);
  CarState next = state;
  next.x = state.x + state.speed * std::cos(state.heading) * dt;
  next.y = state.y + state.speed * std::sin(state.heading) * dt;
  next.heading = wrap_angle(state.heading +
                            state.speed / params.wheelbase * std::tan(params.max_steer_rad * s) * dt);
  next.speed = std::max(0.0, state.speed + (params.max_accel * thr - params.drag * state.speed) * dt);
  next.wheelbase = params.wheelbase;
  return next;
}

TrackGeometry::TrackGeometry(const TrackDefinition& track) : track_(track) {
  validate_track(track_);
  const size_t n = track_.centerline.size();
  dirs_.resize(n);
  lengths_.resize(n);
  arc_start_.resize(n);
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d d = track_.centerline[(i + 1) % n] - track_.centerline[i];
    lengths_[i] = d.norm();
    dirs_[i] = d / lengths_[i];
    arc_start_[i] = acc;
    acc += lengths_[i];
  }
  total_length_ = acc;

  // Grid cells list every segment passing within the band of interest
  // (road + stripes + slack); points whose cell has no entries are farther
  // than the band from the centerline.
  band_ = track_.half_width + 3.0;
  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
  for (const auto& p : track_.centerline) {
    min_x = std::min(min_x, p.x());
    max_x = std::max(max_x, p.x());
    min_y = std::min(min_y, p.y());
    max_y = std::max(max_y, p.y());
  }
  min_x_ = min_x - band_ - cell_;
  min_y_ = min_y - band_ - cell_;
  grid_w_ = static_cast<int>((max_x + band_ + cell_ - min_x_) / cell_) + 1;
  grid_h_ = static_cast<int>((max_y + band_ + cell_ - min_y_) / cell_) + 1;
  cells_.assign(static_cast<size_t>(grid_w_) * grid_h_, {});
  const double reach = band_ + cell_;  // cell diagonal slack folded in below
  for (size_t i = 0; i < n; ++i) {
    const Eigen::Vector2d a = track_.centerline[i];
    const Eigen::Vector2d b = track_.centerline[(i + 1) % n];
    const double lo_x = std::min(a.x(), b.x()) - reach, hi_x = std::max(a.x(), b.x()) + reach;
    const double lo_y = std::min(a.y(), b.y()) - reach, hi_y = std::max(a.y(), b.y()) + reach;
    for (int gy = std::max(0, static_cast<int>((lo_y - min_y_) / cell_));
         gy <= std::min(grid_h_ - 1, static_cast<int>((hi_y - min_y_) / cell_)); ++gy) {
      for (int gx = std::max(0, static_cast<int>((lo_x - min_x_) / cell_));
           gx <= std::min(grid_w_ - 1, static_cast<int>((hi_x - min_x_) / cell_)); ++gx) {
        cells_[static_cast<size_t>(gy) * grid_w_ + gx].push_back(static_cast<int>(i));
      }
    }
  }
}

TrackGeometry::Nearest TrackGeometry::nearest_among(const Eigen::Vector2d& p,
                                                    const std::vector<int>& segments) const {
  Nearest best;
  best.distance = 1e300;
  for (int i : segments) {
    const Eigen::Vector2d& a = track_.centerline[static_cast<size_t>(i)];
    const double t = std::clamp((p - a).dot(dirs_[static_cast<size_t>(i)]), 0.0,
                                lengths_[static_cast<size_t>(i)]);
    const Eigen::Vector2d proj = a + t * dirs_[static_cast<size_t>(i)];
    const double d = (p - proj).norm();
    if (d < best.distance) {
      best.distance = d;
      best.segment = i;
      best.arc = arc_start_[static_cast<size_t>(i)] + t;
      const Eigen::Vector2d& dir = dirs_[static_cast<size_t>(i)];
      const Eigen::Vector2d right(-dir.y(), dir.x());
      best.signed_offset = (p - proj).dot(right) >= 0 ? d : -d;
    }
  }
  return best;
}

TrackGeometry::Nearest TrackGeometry::nearest(const Eigen::Vector2d& p) const {
  std::vector<int> all(track_.centerline.size());
  for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  return nearest_among(p, all);
}

std::optional<TrackGeometry::Nearest> TrackGeometry::nearest_within_band(
    const Eigen::Vector2d& p) const {
  const int gx = static_cast<int>((p.x() - min_x_) / cell_);
  const int gy = static_cast<int>((p.y() - min_y_) / cell_);
  if (gx < 0 || gy < 0 || gx >= grid_w_ || gy >= grid_h_) return std::nullopt;
  const auto& segs = cells_[static_cast<size_t>(gy) * grid_w_ + gx];
  if (segs.empty()) return std::nullopt;
  Nearest n = nearest_among(p, segs);
  if (n.distance > band_) return std::nullopt;
  return n;
}

Eigen::Vector2d TrackGeometry::point_at_arc(double s) const {
  s = std::fmod(s, total_length_);
  if (s < 0) s += total_length_;
  // Binary search over cumulative arc starts.
  size_t lo = 0, hi = arc_start_.size();
  while (lo + 1 < hi) {
    const size_t mid = (lo + hi) / 2;
    if (arc_start_[mid] <= s) lo = mid;
    else hi = mid;
  }
  return track_.centerline[lo] + (s - arc_start_[lo]) * dirs_[lo];
}

Eigen::Vector2d TrackGeometry::direction_at_arc(double s) const {
  s = std::fmod(s, total_length_);
  if (s < 0) s += total_length_;
  size_t lo = 0, hi = arc_start_.size();
  while (lo + 1 < hi) {
    const size_t mid = (lo + hi) / 2;
    if (arc_start_[mid] <= s) lo = mid;
    else hi = mid;
  }
  return dirs_[lo];
}

double lateral_offset(const CarState& state, const TrackGeometry& geom) {
  return geom.nearest({state.x, state.y}).signed_offset;
}

double lateral_offset(const CarState& state, const TrackDefinition& track) {
  return lateral_offset(state, TrackGeometry(track));
}

bool off_track(const CarState& state, const TrackDefinition& track) {
  return std::abs(lateral_offset(state, track)) > track.half_width;
}

namespace {

struct Shade {
  std::uint8_t r, g, b;
};

Shade road_shade(double dist) {
  const double v = 96.0 + 38.0 * std::exp(-dist / 30.0);
  const auto c = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
  return {c, c, static_cast<std::uint8_t>(std::min(255, c + 4))};
}

Shade grass_shade(double dist) {
  const double k = std::exp(-dist / 45.0);
  return {static_cast<std::uint8_t>(58 + 30 * k), static_cast<std::uint8_t>(122 + 34 * k),
          static_cast<std::uint8_t>(48 + 22 * k)};
}

int brightness_jitter(std::uint64_t seed) {
  std::uint64_t x = seed + 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  x ^= x >> 31;
  return static_cast<int>(x % 21) - 10;
}

}  // namespace

ImageU8 render(const CarState& state, const TrackGeometry& geom, std::uint64_t seed,
               const CameraRig& rig) {
  ImageU8 img;
  img.height = kFrameHeight;
  img.width = kFrameWidth;
  img.pixels.resize(static_cast<size_t>(kFrameHeight) * kFrameWidth * 3);

  const Eigen::Vector2d fwd = forward_vec(state.heading);
  const Eigen::Vector2d right = right_vec(state.heading);
  const Eigen::Vector2d cam =
      Eigen::Vector2d(state.x, state.y) + rig.forward_offset * fwd + rig.lateral_offset * right;
  const double cx = (kFrameWidth - 1) / 2.0;
  const int jitter = brightness_jitter(seed);
  const double stripe = 0.35, dash_half = 0.12, dash_period = 6.0, dash_on = 2.5;

  auto put = [&](int row, int col, Shade s) {
    img.at(row, col, 0) = static_cast<std::uint8_t>(std::clamp(s.r + jitter, 0, 255));
    img.at(row, col, 1) = static_cast<std::uint8_t>(std::clamp(s.g + jitter, 0, 255));
    img.at(row, col, 2) = static_cast<std::uint8_t>(std::clamp(s.b + jitter, 0, 255));
  };

  for (int row = 0; row < kFrameHeight; ++row) {
    if (row <= rig.horizon_row) {
      // Sky gradient toward the horizon.
      const double k = static_cast<double>(row) / std::max(1, rig.horizon_row);
      const Shade sky{static_cast<std::uint8_t>(96 + 60 * k), static_cast<std::uint8_t>(140 + 52 * k),
                      static_cast<std::uint8_t>(205 + 30 * k)};
      for (int col = 0; col < kFrameWidth; ++col) put(row, col, sky);
      continue;
    }
    const double forward_dist = rig.height * rig.focal_px / (row - rig.horizon_row);
    if (forward_dist > rig.max_view) {
      for (int col = 0; col < kFrameWidth; ++col) put(row, col, Shade{168, 178, 188});
      continue;
    }
    for (int col = 0; col < kFrameWidth; ++col) {
      const double lateral = forward_dist * (col - cx) / rig.focal_px;
      const Eigen::Vector2d ground = cam + forward_dist * fwd + lateral * right;
      const auto hit = geom.nearest_within_band(ground);
      if (!hit) {
        put(row, col, grass_shade(forward_dist));
        continue;
      }
      const double off = std::abs(hit->signed_offset);
      const double hw = geom.track().half_width;
      if (off > hw) {
        put(row, col, grass_shade(forward_dist));
      } else if (off > hw - stripe) {
        put(row, col, Shade{232, 232, 228});
      } else if (off < dash_half && std::fmod(hit->arc, dash_period) < dash_on) {
        put(row, col, Shade{212, 186, 64});
      } else {
        put(row, col, road_shade(forward_dist));
      }
    }
  }

  // Hood quad fixed to the car body, projected through the same pinhole.
  {
    struct Corner {
      double fwd, right, up;
    };
    const Corner corners[4] = {{1.2, -0.85, 0.55}, {1.2, 0.85, 0.55}, {2.2, 0.65, 0.8},
                               {2.2, -0.65, 0.8}};
    double u[4], v[4];
    for (int i = 0; i < 4; ++i) {
      // Corner position relative to the camera mount, in car axes.
      const double qf = corners[i].fwd - rig.forward_offset;
      const double qr = corners[i].right - rig.lateral_offset;
      const double qu = corners[i].up - rig.height;
      u[i] = cx + rig.focal_px * qr / qf;
      v[i] = rig.horizon_row - rig.focal_px * qu / qf;
    }
    const int row_lo = std::max(0, static_cast<int>(std::floor(std::min({v[0], v[1], v[2], v[3]}))));
    const int col_lo = std::max(0, static_cast<int>(std::floor(std::min({u[0], u[1], u[2], u[3]}))));
    const int col_hi =
        std::min(kFrameWidth - 1, static_cast<int>(std::ceil(std::max({u[0], u[1], u[2], u[3]}))));
    for (int row = row_lo; row < kFrameHeight; ++row) {
      for (int col = col_lo; col <= col_hi; ++col) {
        // Point-in-quad by winding over the 4 edges.
        bool inside = true;
        for (int e = 0; e < 4 && inside; ++e) {
          const double ex = u[(e + 1) % 4] - u[e], ey = v[(e + 1) % 4] - v[e];
          if (ex * (row - v[e]) - ey * (col - u[e]) < 0) inside = false;
        }
        if (inside) {
          const Shade hood{40, 40, 46};
          put(row, col, hood);
        }
      }
    }
  }
  return img;
}

ImageU8 render(const CarState& state, const TrackDefinition& track, std::uint64_t seed,
               const CameraRig& rig) {
  return render(state, TrackGeometry(track), seed, rig);
}

double oracle_steering(const CarState& state, const TrackGeometry& geom, double lookahead,
                       const VehicleParams& params) {
  const Eigen::Vector2d pos(state.x, state.y);
  const auto near = geom.nearest(pos);
  if (near.distance > 2.0 * geom.track().half_width)
    throw ConfigError("oracle_steering: car is " + std::to_string(near.distance) +
                      " m from the centerline, beyond 2x half_width");
  const Eigen::Vector2d target = geom.point_at_arc(near.arc + lookahead);
  const Eigen::Vector2d to_target = target - pos;
  const double dist = to_target.norm();
  const double fx = to_target.dot(forward_vec(state.heading));
  const double ry = to_target.dot(right_vec(state.heading));
  const double alpha = std::atan2(ry, fx);
  const double curvature = 2.0 * std::sin(alpha) / std::max(dist, 1e-6);
  const double steer_angle = std::atan(params.wheelbase * curvature);
  return std::clamp(steer_angle / params.max_steer_rad, -1.0, 1.0);
}

double oracle_steering(const CarState& state, const TrackDefinition& track, double lookahead,
                       const VehicleParams& params) {
  return oracle_steering(state, TrackGeometry(track), lookahead, params);
}

Policy make_oracle_policy(const TrackDefinition& track, double lookahead, VehicleParams params) {
  auto geom = std::make_shared<TrackGeometry>(track);
  return Policy{[geom, lookahead, params](const ImageU8*, const CarState& s) {
                  return oracle_steering(s, *geom, lookahead, params);
                },
                false};
}

Policy make_constant_policy(double steering) {
  return Policy{[steering](const ImageU8*, const CarState&) { return steering; }, false};
}

double speed_controller_throttle(double speed, double target, double kp) {
  return std::clamp(kp * (target - speed), 0.0, 1.0);
}

EpisodeResult run_episode(const Policy& policy, const TrackDefinition& track,
                          const EpisodeConfig& cfg) {
  if (!(cfg.cap_seconds > 0)) throw ConfigError("run_episode: cap must be positive");
  TrackGeometry geom(track);

  CarState state;
  const Eigen::Vector2d p0 = track.centerline[0];
  const Eigen::Vector2d d0 = geom.direction_at_arc(0.0);
  state.x = p0.x();
  state.y = p0.y();
  state.heading = std::atan2(d0.y(), d0.x());
  state.speed = 0.0;
  state.wheelbase = cfg.vehicle.wheelbase;

  EpisodeResult result;
  double speed_sum = 0.0;
  const auto steps = static_cast<long>(std::llround(cfg.cap_seconds / cfg.dt));
  for (long i = 0; i < steps; ++i) {
    double steering = 0.0;
    if (policy.needs_image) {
      const ImageU8 frame = render(state, geom, cfg.render_seed + static_cast<std::uint64_t>(i),
                                   cfg.camera);
      steering = policy.act(&frame, state);
    } else {
      steering = policy.act(nullptr, state);
    }
    const double throttle = speed_controller_throttle(state.speed, cfg.target_speed, cfg.throttle_kp);
    state = step(state, steering, throttle, cfg.dt, cfg.vehicle);
    result.trace.push_back(state);
    speed_sum += state.speed;
    if (std::abs(lateral_offset(state, geom)) > track.half_width) {
      result.off_track = true;
      result.survived_seconds = static_cast<double>(i + 1) * cfg.dt;
      result.mean_speed = speed_sum / static_cast<double>(result.trace.size());
      return result;
    }
  }
  result.survived_seconds = cfg.cap_seconds;
  result.mean_speed = result.trace.empty() ? 0.0 : speed_sum / static_cast<double>(result.trace.size());
  return result;
}

void synth_dataset(const TrackDefinition& track, int frames, std::uint64_t seed,
                   const std::filesystem::path& out_dir, const SynthConfig& cfg) {
  if (frames < 1) throw ConfigError("synth_dataset: frames must be >= 1");
  TrackGeometry geom(track);
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "IMG", ec);
  if (ec) throw IoError("cannot create dataset directory " + (out_dir / "IMG").string() + ": " + ec.message());

  save_track(track, out_dir / "track.json");
  std::ofstream log(out_dir / "driving_log.csv", std::ios::trunc);
  if (!log) throw IoError("cannot open " + (out_dir / "driving_log.csv").string() + " for writing");

  CarState state;
  const Eigen::Vector2d p0 = track.centerline[0];
  const Eigen::Vector2d d0 = geom.direction_at_arc(0.0);
  state.x = p0.x();
  state.y = p0.y();
  state.heading = std::atan2(d0.y(), d0.x());
  state.wheelbase = cfg.vehicle.wheelbase;

  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed ^ 0x73796e7468ull));
  std::normal_distribution<double> gauss(0.0, 1.0);
  double noise = 0.0;

  char name[64];
  for (int i = 0; i < frames; ++i) {
    const double clean = oracle_steering(state, geom, cfg.lookahead, cfg.vehicle);

    const CameraRig rigs[3] = {
        cfg.camera,
        [&] {
          CameraRig r = cfg.camera;
          r.lateral_offset -= cfg.camera_spacing;
          return r;
        }(),
        [&] {
          CameraRig r = cfg.camera;
          r.lateral_offset += cfg.camera_spacing;
          return r;
        }(),
    };
    const char* prefix[3] = {"center", "left", "right"};
    std::string files[3];
    for (int c = 0; c < 3; ++c) {
      std::snprintf(name, sizeof(name), "%s_%06d.jpg", prefix[c], i + 1);
      files[c] = name;
      const ImageU8 frame =
          render(state, geom, seed + static_cast<std::uint64_t>(i) * 3 + static_cast<std::uint64_t>(c),
                 rigs[c]);
      save_jpeg(frame, out_dir / "IMG" / files[c], cfg.jpeg_quality);
    }

    const double throttle = speed_controller_throttle(state.speed, cfg.target_speed, cfg.throttle_kp);
    DrivingLogRecord rec;
    rec.center_path = "IMG/" + files[0];
    rec.left_path = "IMG/" + files[1];
    rec.right_path = "IMG/" + files[2];
    rec.steering = static_cast<float>(clean);
    rec.throttle = static_cast<float>(throttle);
    rec.brake = 0.0f;
    rec.speed = static_cast<float>(state.speed);
    log << rec.center_path.generic_string() << "," << rec.left_path.generic_string() << ","
        << rec.right_path.generic_string() << "," << format_double(rec.steering) << ","
        << format_double(rec.throttle) << "," << format_double(rec.brake) << ","
        << format_double(rec.speed) << "\n";

    // Ornstein-Uhlenbeck exploration noise on the applied command only, so
    // the car visits off-centre states while labels stay clean.
    noise += (-noise / cfg.noise_timescale) * cfg.frame_dt +
             cfg.steering_noise * std::sqrt(cfg.frame_dt) * gauss(rng);
    state = step(state, clean + noise, throttle, cfg.frame_dt, cfg.vehicle);
  }
  if (!log) throw IoError("short write to driving log in " + out_dir.string());
}

}  // namespace steerkit
