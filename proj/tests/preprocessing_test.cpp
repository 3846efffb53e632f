#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "canopy/errors.hpp"
#include "canopy/preprocessing.hpp"

using namespace canopy;

namespace {

RgbImage constant_image(int size, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  RgbImage img = RgbImage::black(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      std::uint8_t* px = img.pixel(y, x);
      px[0] = r;
      px[1] = g;
      px[2] = b;
    }
  return img;
}

// Left half dark, right half bright: mirror-asymmetric.
RgbImage asymmetric_image(int size) {
  RgbImage img = RgbImage::black(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = size / 2; x < size; ++x) {
      std::uint8_t* px = img.pixel(y, x);
      px[0] = px[1] = px[2] = 200;
    }
  return img;
}

AugmentConfig deterministic_config(int target) {
  AugmentConfig c;
  c.crop_scale_min = 1.0;
  c.crop_scale_max = 1.0;
  c.aspect_min = 1.0;
  c.aspect_max = 1.0;
  c.rotation_max_deg = 0.0;
  c.hflip_prob = 0.0;
  c.target_size = target;
  return c;
}

bool all_finite(const FloatImage& img) {
  for (float v : img.data)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace

TEST_CASE("config validation") {
  AugmentConfig c;
  CHECK_NOTHROW(c.validate());
  c.crop_scale_min = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = AugmentConfig{};
  c.hflip_prob = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = AugmentConfig{};
  c.normalize_std = {0.2, 0.0, 0.2};
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("normalization constants on constant tiles") {
  AugmentConfig c;
  c.target_size = 32;

  FloatImage black = preprocess_eval(constant_image(64, 0, 0, 0), c);
  CHECK(black.pixel(5, 5)[0] == doctest::Approx(-0.485 / 0.229).epsilon(1e-4));
  CHECK(black.pixel(5, 5)[0] == doctest::Approx(-2.1179).epsilon(1e-3));
  CHECK(black.pixel(5, 5)[1] == doctest::Approx(-0.456 / 0.224).epsilon(1e-4));
  CHECK(black.pixel(5, 5)[2] == doctest::Approx(-0.406 / 0.225).epsilon(1e-4));

  FloatImage white = preprocess_eval(constant_image(64, 255, 255, 255), c);
  CHECK(white.pixel(5, 5)[0] == doctest::Approx((1.0 - 0.485) / 0.229).epsilon(1e-4));
  CHECK(white.pixel(5, 5)[0] == doctest::Approx(2.2489).epsilon(1e-3));

  FloatImage gray = preprocess_eval(constant_image(64, 128, 128, 128), c);
  double v = 128.0 / 255.0;
  CHECK(gray.pixel(5, 5)[0] == doctest::Approx((v - 0.485) / 0.229).epsilon(1e-4));
  CHECK(gray.pixel(5, 5)[1] == doctest::Approx((v - 0.456) / 0.224).epsilon(1e-4));
  CHECK(gray.pixel(5, 5)[2] == doctest::Approx((v - 0.406) / 0.225).epsilon(1e-4));
}

TEST_CASE("denormalize inverts preprocess_eval") {
  AugmentConfig c;
  c.target_size = 16;
  RgbImage img = asymmetric_image(48);
  FloatImage normalized = preprocess_eval(img, c);
  FloatImage resized = resize_to_float(img, 16);
  denormalize_inplace(normalized, c);
  REQUIRE(normalized.data.size() == resized.data.size());
  for (std::size_t i = 0; i < resized.data.size(); ++i)
    CHECK(normalized.data[i] == doctest::Approx(resized.data[i]).epsilon(1e-6));
}

TEST_CASE("degenerate config takes the pure resize path") {
  AugmentConfig c = deterministic_config(32);
  RgbImage img = asymmetric_image(64);
  Rng rng(77);
  std::uint64_t draws_before = rng.next_u64();
  Rng fresh(77);
  FloatImage a = augment_train(img, c, fresh);
  // No randomness consumed: the stream is untouched.
  CHECK(fresh.next_u64() == draws_before);

  FloatImage b = resize_to_float(img, 32);
  REQUIRE(a.data.size() == b.data.size());
  for (std::size_t i = 0; i < a.data.size(); ++i)
    CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-6));
}

TEST_CASE("hflip is an involution and hits with probability 1") {
  AugmentConfig c = deterministic_config(32);
  c.hflip_prob = 1.0;
  RgbImage img = asymmetric_image(32);
  Rng r1(5);
  FloatImage flipped = augment_train(img, c, r1);
  FloatImage plain = resize_to_float(img, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x)
      for (int ch = 0; ch < 3; ++ch)
        CHECK(flipped.pixel(y, x)[ch] == doctest::Approx(plain.pixel(y, 31 - x)[ch]));
}

TEST_CASE("augmentation is deterministic given the rng state") {
  AugmentConfig c;
  c.target_size = 32;
  RgbImage img = asymmetric_image(96);
  Rng r1(1234), r2(1234);
  FloatImage a = augment_train(img, c, r1);
  FloatImage b = augment_train(img, c, r2);
  CHECK(a.data == b.data);

  Rng r3(1235);
  FloatImage d = augment_train(img, c, r3);
  CHECK(a.data != d.data);
}

TEST_CASE("augmented output is bounded and finite") {
  AugmentConfig c;
  c.target_size = 24;
  RgbImage img = asymmetric_image(80);
  Rng rng(9);
  for (int i = 0; i < 20; ++i) {
    FloatImage out = augment_train(img, c, rng);
    REQUIRE(out.size == 24);
    REQUIRE(out.data.size() == 24u * 24u * 3u);
    CHECK(all_finite(out));
    for (float v : out.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
  }
}

TEST_CASE("rotation fills corners with black") {
  AugmentConfig c = deterministic_config(32);
  c.rotation_max_deg = 45.0;
  RgbImage img = constant_image(64, 250, 250, 250);
  Rng rng(2);
  bool saw_black_corner = false;
  for (int i = 0; i < 10 && !saw_black_corner; ++i) {
    FloatImage out = augment_train(img, c, rng);
    if (out.pixel(0, 0)[0] < 0.05f) saw_black_corner = true;
  }
  CHECK(saw_black_corner);
}

TEST_CASE("tiny inputs are rejected") {
  AugmentConfig c;
  c.target_size = 16;
  Rng rng(1);
  RgbImage tiny = RgbImage::black(1, 1);
  CHECK_THROWS_AS(augment_train(tiny, c, rng), ConfigError);
}
