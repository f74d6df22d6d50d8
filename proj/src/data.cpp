#include "steerkit/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>

#include "steerkit/serialize.hpp"

namespace steerkit {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

float parse_field(const std::string& raw, int row, int column) {
  const std::string s = trim(raw);
  float v = 0.0f;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw ParseError("driving log row " + std::to_string(row) + ", column " +
                     std::to_string(column) + ": cannot parse '" + raw + "' as a number");
  return v;
}

}  // namespace

std::vector<DrivingLogRecord> parse_driving_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open driving log " + path.string());
  const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
  // Simulator recordings keep frames in an IMG/ directory next to the log.
  const auto img_dir = std::filesystem::is_directory(dir / "IMG") ? dir / "IMG" : dir;
  auto resolve = [&](const std::string& recorded) {
    return img_dir / std::filesystem::path(trim(recorded)).filename();
  };

  std::vector<DrivingLogRecord> records;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields;
    size_t start = 0;
    while (true) {
      const size_t at = line.find(',', start);
      if (at == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, at - start));
      start = at + 1;
    }
    if (fields.size() != 7)
      throw ParseError("driving log row " + std::to_string(row) + ": expected 7 columns, got " +
                       std::to_string(fields.size()));
    DrivingLogRecord rec;
    rec.center_path = resolve(fields[0]);
    rec.left_path = resolve(fields[1]);
    rec.right_path = resolve(fields[2]);
    if (rec.center_path.filename().empty() || rec.left_path.filename().empty() ||
        rec.right_path.filename().empty())
      throw ParseError("driving log row " + std::to_string(row) + ": empty image path");
    rec.steering = parse_field(fields[3], row, 4);
    rec.throttle = parse_field(fields[4], row, 5);
    rec.brake = parse_field(fields[5], row, 6);
    rec.speed = parse_field(fields[6], row, 7);
    records.push_back(std::move(rec));
  }
  return records;
}

std::string serialize_driving_log_row(const DrivingLogRecord& rec) {
  return rec.center_path.filename().string() + "," + rec.left_path.filename().string() + "," +
         rec.right_path.filename().string() + "," + format_double(rec.steering) + "," +
         format_double(rec.throttle) + "," + format_double(rec.brake) + "," +
         format_double(rec.speed);
}

TensorF preprocess(const ImageU8& raw, int crop_top, int crop_bottom) {
  if (!raw.valid()) throw ConfigError("preprocess: invalid image");
  if (crop_top < 0 || crop_bottom < 0 || raw.height < crop_top + crop_bottom + 1)
    throw ConfigError("preprocess: degenerate crop (top=" + std::to_string(crop_top) +
                      ", bottom=" + std::to_string(crop_bottom) + ", height=" +
                      std::to_string(raw.height) + ")");
  const ImageU8 cropped =
      (crop_top || crop_bottom)
          ? crop(raw, crop_top, 0, raw.height - crop_top - crop_bottom, raw.width)
          : raw;
  const ImageU8 resized = resize_bilinear(cropped, kInputHeight, kInputWidth);
  TensorF out({3, kInputHeight, kInputWidth});
  for (int ch = 0; ch < 3; ++ch)
    for (int r = 0; r < kInputHeight; ++r)
      for (int c = 0; c < kInputWidth; ++c)
        out[(static_cast<std::int64_t>(ch) * kInputHeight + r) * kInputWidth + c] =
            static_cast<float>(resized.at(r, c, ch)) / 127.5f - 1.0f;
  return out;
}

std::pair<std::filesystem::path, float> select_camera(const DrivingLogRecord& rec, Camera which,
                                                      float correction) {
  if (correction < 0.0f) throw ConfigError("camera correction must be >= 0");
  switch (which) {
    case Camera::Center:
      return {rec.center_path, rec.steering};
    case Camera::Left:
      return {rec.left_path, rec.steering + correction};
    case Camera::Right:
      return {rec.right_path, rec.steering - correction};
  }
  throw ConfigError("unknown camera");
}

std::pair<ImageU8, float> augment(const ImageU8& raw, float label, RngStream& rng,
                                  const AugmentConfig& cfg) {
  if (cfg.max_rotation_deg > 15.0)
    throw ConfigError("augment: rotation bound " + std::to_string(cfg.max_rotation_deg) +
                      " exceeds 15 degrees");
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  ImageU8 img = raw;
  float out_label = label;
  if (uni(rng) < cfg.flip_prob) {
    img = flip_horizontal(img);
    out_label = -out_label;
  }
  if (cfg.max_rotation_deg > 0.0) {
    std::uniform_real_distribution<double> rot(-cfg.max_rotation_deg, cfg.max_rotation_deg);
    img = rotate_about_center(img, rot(rng));
  }
  if (cfg.max_crop_jitter > 0 && img.height > cfg.max_crop_jitter &&
      img.width > cfg.max_crop_jitter) {
    // Fixed-size window, randomly shifted by up to the jitter bound.
    std::uniform_int_distribution<int> jit(0, cfg.max_crop_jitter);
    const int top = jit(rng), left = jit(rng);
    img = crop(img, top, left, img.height - cfg.max_crop_jitter, img.width - cfg.max_crop_jitter);
  }
  return {std::move(img), out_label};
}

std::vector<std::vector<int>> make_batch_plan(int n_samples, int batch_size, std::uint64_t seed) {
  if (n_samples < 1) throw ConfigError("make_batch_plan: empty dataset");
  if (batch_size < 1) throw ConfigError("make_batch_plan: batch size must be >= 1");
  std::vector<int> order(static_cast<size_t>(n_samples));
  std::iota(order.begin(), order.end(), 0);
  std::mt19937 rng(static_cast<std::mt19937::result_type>(seed));
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::vector<int>> plan;
  for (int at = 0; at < n_samples; at += batch_size) {
    const int take = std::min(batch_size, n_samples - at);
    plan.emplace_back(order.begin() + at, order.begin() + at + take);
  }
  return plan;
}

TensorF stack_images(const std::vector<const TensorF*>& images) {
  if (images.empty()) throw ConfigError("stack_images: empty batch");
  const Shape& one = images.front()->shape();
  TensorF batch({static_cast<int>(images.size()), one[0], one[1], one[2]});
  const std::int64_t stride = images.front()->size();
  for (size_t i = 0; i < images.size(); ++i) {
    if (images[i]->shape() != one)
      throw DimError("stack_images: sample " + std::to_string(i) + " has shape " +
                     shape_to_string(images[i]->shape()) + ", expected " + shape_to_string(one));
    std::copy(images[i]->data(), images[i]->data() + stride,
              batch.data() + static_cast<std::int64_t>(i) * stride);
  }
  return batch;
}

std::vector<std::pair<TensorF, std::vector<float>>> make_batches(const std::vector<Sample>& samples,
                                                                 int batch_size,
                                                                 std::uint64_t seed) {
  auto plan = make_batch_plan(static_cast<int>(samples.size()), batch_size, seed);
  std::vector<std::pair<TensorF, std::vector<float>>> out;
  out.reserve(plan.size());
  for (const auto& idx : plan) {
    std::vector<const TensorF*> imgs;
    std::vector<float> labels;
    imgs.reserve(idx.size());
    labels.reserve(idx.size());
    for (int i : idx) {
      imgs.push_back(&samples[static_cast<size_t>(i)].image);
      labels.push_back(samples[static_cast<size_t>(i)].label);
    }
    out.emplace_back(stack_images(imgs), std::move(labels));
  }
  return out;
}

}  // namespace steerkit
