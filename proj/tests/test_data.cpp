#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "steerkit/data.hpp"
#include "steerkit/serialize.hpp"
#include "fixtures.hpp"

using namespace steerkit;
namespace fs = std::filesystem;

namespace {

fs::path write_log(const char* name, const std::vector<std::string>& rows) {
  auto dir = fs::temp_directory_path() / "steerkit_data_tests";
  fs::create_directories(dir);
  auto path = dir / name;
  std::ofstream out(path, std::ios::trunc);
  for (const auto& r : rows) out << r << "\n";
  return path;
}

ImageU8 gradient_image(int h, int w) {
  ImageU8 img = ImageU8::filled(h, w, 0, 0, 0);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      img.at(r, c, 0) = static_cast<std::uint8_t>((r * 7 + c * 3) % 256);
      img.at(r, c, 1) = static_cast<std::uint8_t>((r * 5 + c * 11) % 256);
      img.at(r, c, 2) = static_cast<std::uint8_t>((r * 13 + c) % 256);
    }
  return img;
}

}  // namespace

TEST_CASE("parse_driving_log fixture rows") {
  auto path = write_log("fixture.csv", fixtures::kDrivingLogRows);
  auto records = parse_driving_log(path);
  REQUIRE(records.size() == fixtures::kDrivingLogRows.size());

  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].steering == fixtures::kDrivingLogValues[i].steering);
    CHECK(records[i].throttle == fixtures::kDrivingLogValues[i].throttle);
    CHECK(records[i].brake == fixtures::kDrivingLogValues[i].brake);
    CHECK(records[i].speed == fixtures::kDrivingLogValues[i].speed);
  }
  // Row 4 spot checks.
  CHECK(records[3].steering == -0.4860f);
  CHECK(records[3].speed == 3.2320f);
  CHECK(records[3].center_path.filename() == "center_535.jpg");
  // Zero steering is straight.
  CHECK(records[0].steering == 0.0f);
}

TEST_CASE("parse_driving_log resolves recorded absolute paths by basename") {
  auto path = write_log("abs.csv",
                        {"/somewhere/else/IMG/center_1.jpg,C:\\sim\\left_1.jpg,right_1.jpg,0.1,0.5,0,2.0"});
  auto records = parse_driving_log(path);
  REQUIRE(records.size() == 1);
  CHECK(records[0].center_path.filename() == "center_1.jpg");
  CHECK(records[0].center_path.parent_path() == path.parent_path());

  SUBCASE("an IMG directory next to the log takes precedence") {
    auto dir = fs::temp_directory_path() / "steerkit_data_tests" / "with_img";
    fs::create_directories(dir / "IMG");
    auto log = dir / "driving_log.csv";
    std::ofstream out(log, std::ios::trunc);
    out << "center_2.jpg,left_2.jpg,right_2.jpg,0,0,0,1\n";
    out.close();
    auto recs = parse_driving_log(log);
    CHECK(recs[0].center_path == dir / "IMG" / "center_2.jpg");
  }
}

TEST_CASE("parse_driving_log error reporting") {
  SUBCASE("wrong column count names the row") {
    auto path = write_log("sixcol.csv", {"a.jpg,b.jpg,c.jpg,0,0,0,1",
                                         "a.jpg,b.jpg,c.jpg,0,0,1"});
    CHECK_THROWS_WITH_AS(parse_driving_log(path), doctest::Contains("row 2"), ParseError);
  }
  SUBCASE("bad numeric names row and column") {
    auto path = write_log("badnum.csv", {"a.jpg,b.jpg,c.jpg,zero,0,0,1"});
    CHECK_THROWS_WITH_AS(parse_driving_log(path), doctest::Contains("column 4"), ParseError);
  }
  SUBCASE("missing file is an IO error") {
    CHECK_THROWS_AS(parse_driving_log("/nonexistent/driving_log.csv"), IoError);
  }
}

TEST_CASE("parse then re-serialize reproduces the numeric columns") {
  auto path = write_log("roundtrip.csv", fixtures::kDrivingLogRows);
  auto records = parse_driving_log(path);
  for (size_t i = 0; i < records.size(); ++i) {
    const auto row = serialize_driving_log_row(records[i]);
    auto again = write_log("roundtrip2.csv", {row});
    auto rec2 = parse_driving_log(again).at(0);
    CHECK(rec2.steering == records[i].steering);
    CHECK(rec2.throttle == records[i].throttle);
    CHECK(rec2.brake == records[i].brake);
    CHECK(rec2.speed == records[i].speed);
  }
}

TEST_CASE("preprocess") {
  SUBCASE("70x320 with zero crop becomes a [3,66,200] tensor in [-1,1]") {
    auto t = preprocess(gradient_image(70, 320));
    CHECK(t.shape() == Shape{3, 66, 200});
    CHECK(t.array().maxCoeff() <= 1.0f);
    CHECK(t.array().minCoeff() >= -1.0f);
  }
  SUBCASE("all-128 pixels map to ~0.0039") {
    auto t = preprocess(ImageU8::filled(70, 320, 128, 128, 128));
    for (std::int64_t i = 0; i < t.size(); ++i)
      CHECK(t[i] == doctest::Approx(128.0f / 127.5f - 1.0f).epsilon(1e-6));
  }
  SUBCASE("all-255 pixels map to exactly 1") {
    auto t = preprocess(ImageU8::filled(70, 320, 255, 255, 255));
    for (std::int64_t i = 0; i < t.size(); ++i) CHECK(t[i] == 1.0f);
  }
  SUBCASE("degenerate crop is a configuration error") {
    CHECK_THROWS_AS(preprocess(gradient_image(70, 320), 40, 30), ConfigError);
  }
  SUBCASE("vertical crop changes the sampled content") {
    auto plain = preprocess(gradient_image(100, 320), 0, 0);
    auto cropped = preprocess(gradient_image(100, 320), 20, 10);
    CHECK((plain.vec() - cropped.vec()).cwiseAbs().maxCoeff() > 0.0f);
  }
}

TEST_CASE("select_camera") {
  DrivingLogRecord rec;
  rec.center_path = "center.jpg";
  rec.left_path = "left.jpg";
  rec.right_path = "right.jpg";
  rec.steering = 0.0f;

  SUBCASE("center label is unchanged for any correction") {
    auto [path, label] = select_camera(rec, Camera::Center, 0.35f);
    CHECK(path == "center.jpg");
    CHECK(label == 0.0f);
  }
  SUBCASE("left camera steers back right") {
    auto [path, label] = select_camera(rec, Camera::Left, 0.2f);
    CHECK(path == "left.jpg");
    CHECK(label == 0.2f);
  }
  SUBCASE("right camera steers back left") {
    auto [path, label] = select_camera(rec, Camera::Right, 0.2f);
    CHECK(label == -0.2f);
  }
  SUBCASE("zero correction makes all three cameras share the label") {
    rec.steering = -0.123f;
    CHECK(select_camera(rec, Camera::Center, 0.0f).second == -0.123f);
    CHECK(select_camera(rec, Camera::Left, 0.0f).second == -0.123f);
    CHECK(select_camera(rec, Camera::Right, 0.0f).second == -0.123f);
  }
  SUBCASE("negative correction is rejected") {
    CHECK_THROWS_AS(select_camera(rec, Camera::Left, -0.1f), ConfigError);
  }
}

TEST_CASE("augment") {
  auto img = gradient_image(70, 320);

  SUBCASE("flip is an involution") {
    auto once = flip_horizontal(img);
    auto twice = flip_horizontal(once);
    CHECK(twice.pixels == img.pixels);
  }
  SUBCASE("rotation by zero degrees is pixel-identical") {
    CHECK(rotate_about_center(img, 0.0).pixels == img.pixels);
  }
  SUBCASE("flip negates the label") {
    // Force the flip branch with flip_prob 1 and no other transforms.
    AugmentConfig cfg{1.0, 0.0, 0};
    RngStream rng(4);
    auto [out, label] = augment(img, -0.341f, rng, cfg);
    CHECK(label == 0.341f);
    CHECK(out.pixels == flip_horizontal(img).pixels);
  }
  SUBCASE("deterministic under a fixed seed") {
    AugmentConfig cfg;
    RngStream a(12), b(12);
    auto ra = augment(img, 0.25f, a, cfg);
    auto rb = augment(img, 0.25f, b, cfg);
    CHECK(ra.first.pixels == rb.first.pixels);
    CHECK(ra.second == rb.second);
  }
  SUBCASE("rotation bound above 15 degrees is rejected") {
    AugmentConfig cfg{0.5, 20.0, 4};
    RngStream rng(1);
    CHECK_THROWS_AS(augment(img, 0.0f, rng, cfg), ConfigError);
  }
  SUBCASE("fully-flipped dataset negates the mean label") {
    std::vector<float> labels{0.1f, -0.2f, 0.35f, 0.0f, -0.05f};
    double mean = 0, flipped_mean = 0;
    for (float l : labels) {
      mean += l;
      flipped_mean += -l;
    }
    CHECK(flipped_mean == -mean);
  }
}

TEST_CASE("make_batch_plan") {
  SUBCASE("100 samples at batch 32 give 32,32,32,4") {
    auto plan = make_batch_plan(100, 32, 1);
    REQUIRE(plan.size() == 4);
    CHECK(plan[0].size() == 32);
    CHECK(plan[1].size() == 32);
    CHECK(plan[2].size() == 32);
    CHECK(plan[3].size() == 4);
  }
  SUBCASE("same seed gives the same order") {
    CHECK(make_batch_plan(57, 8, 9) == make_batch_plan(57, 8, 9));
  }
  SUBCASE("emitted indices form a full permutation") {
    auto plan = make_batch_plan(100, 32, 3);
    std::set<int> seen;
    for (const auto& b : plan) seen.insert(b.begin(), b.end());
    CHECK(seen.size() == 100);
    CHECK(*seen.begin() == 0);
    CHECK(*seen.rbegin() == 99);
  }
  SUBCASE("empty dataset is a configuration error") {
    CHECK_THROWS_AS(make_batch_plan(0, 32, 1), ConfigError);
  }
}

TEST_CASE("make_batches stacks tensors and labels") {
  std::vector<Sample> samples;
  for (int i = 0; i < 5; ++i) {
    Sample s;
    s.image = TensorF::constant({3, 66, 200}, static_cast<float>(i) / 10);
    s.label = static_cast<float>(i);
    samples.push_back(std::move(s));
  }
  auto batches = make_batches(samples, 2, 11);
  REQUIRE(batches.size() == 3);
  CHECK(batches[0].first.shape() == Shape{2, 3, 66, 200});
  CHECK(batches[2].first.shape() == Shape{1, 3, 66, 200});
  // Each stacked row carries its own label.
  for (const auto& [batch, labels] : batches)
    for (size_t r = 0; r < labels.size(); ++r)
      CHECK(batch(static_cast<int>(r), 0, 0, 0) == doctest::Approx(labels[r] / 10));
}

TEST_CASE("jpeg round trip stays close and decodes what it encoded") {
  auto img = gradient_image(70, 320);
  auto bytes = encode_jpeg(img, 95);
  auto back = decode_jpeg(bytes);
  CHECK(back.height == 70);
  CHECK(back.width == 320);
  double err = 0;
  for (size_t i = 0; i < img.pixels.size(); ++i)
    err += std::abs(static_cast<double>(img.pixels[i]) - back.pixels[i]);
  err /= static_cast<double>(img.pixels.size());
  CHECK(err < 12.0);  // lossy but close

  SUBCASE("undecodable bytes raise a parse error") {
    std::vector<std::uint8_t> junk{1, 2, 3, 4, 5};
    CHECK_THROWS_AS(decode_jpeg(junk), ParseError);
  }
}
