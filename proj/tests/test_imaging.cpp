#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "pcnn/errors.hpp"
#include "pcnn/imaging.hpp"
#include "pcnn/rng.hpp"

using namespace pcnn;

namespace {

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / name;
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

GrayImage random_image(std::uint64_t seed, std::size_t h, std::size_t w) {
  Xoshiro256pp rng(seed);
  GrayImage img(h, w);
  for (auto& p : img.pixels) p = rng.next_double();
  return img;
}

}  // namespace

TEST_CASE("save/load round trip stays within the quantization bound") {
  const auto img = random_image(81, 13, 19);
  const auto path = temp_file("pcnn_roundtrip.pgm");
  save_image(path, img);
  const auto back = load_image(path);
  REQUIRE(back.height == img.height);
  REQUIRE(back.width == img.width);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    CHECK(std::abs(back.pixels[i] - img.pixels[i]) <= 1.0 / 510.0);
  std::filesystem::remove(path);
}

TEST_CASE("P3 color collapses to the channel mean") {
  const auto path = temp_file("pcnn_p3.ppm");
  write_bytes(path, "P3\n1 1\n255\n30 60 90\n");
  const auto img = load_image(path);
  REQUIRE(img.pixels.size() == 1);
  CHECK(img.pixels[0] == doctest::Approx(60.0 / 255.0).epsilon(1e-15));
  std::filesystem::remove(path);
}

TEST_CASE("P5 2x2 fixture decodes byte-exactly") {
  const auto path = temp_file("pcnn_p5.pgm");
  std::string bytes = "P5\n2 2\n255\n";
  bytes.push_back(static_cast<char>(0));
  bytes.push_back(static_cast<char>(255));
  bytes.push_back(static_cast<char>(128));
  bytes.push_back(static_cast<char>(64));
  write_bytes(path, bytes);
  const auto img = load_image(path);
  REQUIRE(img.height == 2);
  REQUIRE(img.width == 2);
  CHECK(img.at(0, 0) == 0.0);
  CHECK(img.at(0, 1) == 1.0);
  CHECK(img.at(1, 0) == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
  CHECK(img.at(1, 1) == doctest::Approx(64.0 / 255.0).epsilon(1e-15));
  std::filesystem::remove(path);
}

TEST_CASE("P2 with comments parses") {
  const auto path = temp_file("pcnn_p2.pgm");
  write_bytes(path, "P2 # ascii gray\n# size\n2 1\n# depth\n100\n50 100\n");
  const auto img = load_image(path);
  REQUIRE(img.width == 2);
  CHECK(img.at(0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(img.at(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
  std::filesystem::remove(path);
}

TEST_CASE("16-bit P5 reads big-endian samples") {
  const auto path = temp_file("pcnn_p5_16.pgm");
  std::string bytes = "P5\n1 1\n65535\n";
  bytes.push_back(static_cast<char>(0x01));
  bytes.push_back(static_cast<char>(0x00));
  write_bytes(path, bytes);
  const auto img = load_image(path);
  CHECK(img.pixels[0] == doctest::Approx(256.0 / 65535.0).epsilon(1e-15));
  std::filesystem::remove(path);
}

TEST_CASE("malformed image files are rejected") {
  const auto path = temp_file("pcnn_bad.pgm");

  write_bytes(path, "P7\n1 1\n255\nx");
  CHECK_THROWS_AS(load_image(path), io_error);

  write_bytes(path, "P5\n2 2\n255\nab");  // truncated pixel data
  CHECK_THROWS_AS(load_image(path), io_error);

  write_bytes(path, "P5\n2\n");  // truncated header
  CHECK_THROWS_AS(load_image(path), io_error);

  write_bytes(path, "P5\n-2 2\n255\n");  // non-numeric dimension
  CHECK_THROWS_AS(load_image(path), io_error);

  write_bytes(path, "P6\n1 1\n65535\nabcdef");  // 16-bit color unsupported
  CHECK_THROWS_AS(load_image(path), io_error);

  CHECK_THROWS_AS(load_image(temp_file("pcnn_no_such_file.pgm")), io_error);
  std::filesystem::remove(path);
}

TEST_CASE("zero-sigma noise is the identity") {
  const auto img = random_image(82, 9, 9);
  const auto noisy = add_gaussian_noise(img, 0.0, 7);
  CHECK(noisy.pixels == img.pixels);
  CHECK_THROWS_AS(add_gaussian_noise(img, -0.1, 7), std::invalid_argument);
}

TEST_CASE("noise statistics match sigma on an unclamped image") {
  GrayImage img(256, 256);
  for (auto& p : img.pixels) p = 0.5;
  const double sigma = 25.0 / 255.0;
  const auto noisy = add_gaussian_noise(img, sigma, 1234);
  double mean = 0.0;
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    mean += noisy.pixels[i] - img.pixels[i];
  mean /= static_cast<double>(img.pixels.size());
  double var = 0.0;
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const double d = noisy.pixels[i] - img.pixels[i] - mean;
    var += d * d;
  }
  var /= static_cast<double>(img.pixels.size() - 1);
  CHECK(std::abs(std::sqrt(var) - sigma) <= 0.03 * sigma);

  // Mid-gray pixels never clamp at this sigma, so the PSNR sits at the
  // analytic 20*log10(255/25) up to sampling noise.
  CHECK(psnr(noisy, img) == doctest::Approx(20.0 * std::log10(255.0 / 25.0)).epsilon(0.005));
}

TEST_CASE("noise is reproducible per seed") {
  const auto img = random_image(83, 17, 23);
  const auto a = add_gaussian_noise(img, 0.1, 99);
  const auto b = add_gaussian_noise(img, 0.1, 99);
  CHECK(std::memcmp(a.pixels.data(), b.pixels.data(),
                    a.pixels.size() * sizeof(double)) == 0);
  const auto c = add_gaussian_noise(img, 0.1, 100);
  CHECK(a.pixels != c.pixels);
}

TEST_CASE("psnr values") {
  const auto img = random_image(84, 8, 8);
  CHECK(std::isinf(psnr(img, img)));

  GrayImage shifted = img;
  for (auto& p : shifted.pixels) p += 0.1;
  CHECK(psnr(img, shifted) == doctest::Approx(20.0).epsilon(1e-9));
  CHECK(psnr(img, shifted) == psnr(shifted, img));

  GrayImage noisy = img;
  for (auto& p : noisy.pixels) p += 25.0 / 255.0;
  CHECK(psnr(img, noisy) ==
        doctest::Approx(20.0 * std::log10(255.0 / 25.0)).epsilon(1e-12));

  CHECK_THROWS_AS(psnr(img, GrayImage(4, 4)), std::invalid_argument);
}

TEST_CASE("bilateral features") {
  GrayImage one(1, 1);
  one.at(0, 0) = 0.42;
  const auto single = bilateral_features(one, 6.0, 0.1);
  REQUIRE(single.features.count == 1);
  CHECK(single.features.coords[0] == 0.0);
  CHECK(single.features.coords[1] == 0.0);
  CHECK(single.features.coords[2] == doctest::Approx(4.2).epsilon(1e-15));
  CHECK(single.values(0, 0) == 0.42);

  GrayImage img(2, 2);
  img.pixels = {0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0};
  const auto set = bilateral_features(img, 2.0, 0.1);
  REQUIRE(set.features.count == 4);
  // Hand-computed (x/2, y/2, g/0.1) per pixel in row-major order.
  const double expected[4][3] = {
      {0.0, 0.0, 0.0},
      {0.5, 0.0, 10.0},
      {0.0, 0.5, 1.28 / 0.255},
      {0.5, 0.5, 0.64 / 0.255},
  };
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 3; ++k)
      CHECK(set.features.coords[i * 3 + k] ==
            doctest::Approx(expected[i][k]).epsilon(1e-12));

  // Doubling the scales halves the features.
  const auto wide = bilateral_features(img, 4.0, 0.2);
  for (std::size_t i = 0; i < set.features.coords.size(); ++i)
    CHECK(wide.features.coords[i] ==
          doctest::Approx(set.features.coords[i] / 2.0).epsilon(1e-15));

  CHECK_THROWS_AS(bilateral_features(img, 0.0, 0.1), std::invalid_argument);
}

TEST_CASE("position features") {
  GrayImage img(2, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i)
    img.pixels[i] = static_cast<double>(i) / 6.0;
  const auto set = position_features(img, 2.0);
  REQUIRE(set.features.count == 6);
  std::size_t i = 0;
  for (std::size_t y = 0; y < 2; ++y)
    for (std::size_t x = 0; x < 3; ++x, ++i) {
      CHECK(set.features.coords[i * 2 + 0] == doctest::Approx(x / 2.0));
      CHECK(set.features.coords[i * 2 + 1] == doctest::Approx(y / 2.0));
      CHECK(set.values(i, 0) == img.pixels[i]);
    }
}

TEST_CASE("bilinear sampling") {
  GrayImage img(2, 2);
  img.pixels = {0.0, 1.0, 0.5, 0.25};
  CHECK(bilinear_sample(img, 0.0, 0.0) == 0.0);
  CHECK(bilinear_sample(img, 1.0, 0.0) == 1.0);
  CHECK(bilinear_sample(img, 0.5, 0.5) ==
        doctest::Approx((0.0 + 1.0 + 0.5 + 0.25) / 4.0).epsilon(1e-15));
  CHECK(bilinear_sample(img, 0.5, 0.0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("subsample counts, grid mode and fraction domain") {
  const auto img = random_image(85, 12, 10);
  const auto full = subsample(img, 1.0, 5, 3.0, /*on_grid=*/true);
  const auto positions = position_features(img, 3.0);
  CHECK(full.features.coords == positions.features.coords);
  CHECK(full.values.data == positions.values.data);

  const auto cont = subsample(img, 1.0, 5, 3.0);
  CHECK(cont.features.count == img.pixels.size());

  const auto part = subsample(img, 0.25, 5, 3.0);
  CHECK(part.features.count ==
        static_cast<std::size_t>(std::ceil(0.25 * 120)));

  // Grid mode samples integer positions whose values are exact pixels.
  const auto grid = subsample(img, 0.5, 6, 1.0, /*on_grid=*/true);
  for (std::size_t i = 0; i < grid.features.count; ++i) {
    const double x = grid.features.coords[i * 2 + 0];
    const double y = grid.features.coords[i * 2 + 1];
    CHECK(x == std::floor(x));
    CHECK(y == std::floor(y));
    CHECK(grid.values(i, 0) ==
          img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)));
  }

  CHECK_THROWS_AS(subsample(img, 0.0, 5, 3.0), std::invalid_argument);
  CHECK_THROWS_AS(subsample(img, 1.5, 5, 3.0), std::invalid_argument);

  // Same seed, same draw.
  const auto again = subsample(img, 0.25, 5, 3.0);
  CHECK(again.features.coords == part.features.coords);
}

TEST_CASE("rotation stack") {
  const auto img = random_image(86, 2, 2);

  // One angle reduces to position features plus a constant third axis.
  const auto flat = rotation_stack(img, 1, 2.0, 0.5);
  const auto positions = position_features(img, 2.0);
  REQUIRE(flat.features.count == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(flat.features.coords[i * 3 + 0] == positions.features.coords[i * 2 + 0]);
    CHECK(flat.features.coords[i * 3 + 1] == positions.features.coords[i * 2 + 1]);
    CHECK(flat.features.coords[i * 3 + 2] == 0.0);
    CHECK(flat.values(i, 0) == img.pixels[i]);
  }

  // The center pixel of an odd image is a fixed point of the half turn.
  const auto odd = random_image(87, 3, 3);
  const auto spun = rotation_stack(odd, 2, 1.0, 1.0);
  const std::size_t center = 9 + 4;  // second angle block, pixel (1,1)
  CHECK(spun.features.coords[center * 3 + 0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(spun.features.coords[center * 3 + 1] == doctest::Approx(1.0).epsilon(1e-12));

  // 2x2, four angles: all sixteen features, computed by hand from the
  // quarter-turn images of each corner about (0.5, 0.5).
  const auto stack = rotation_stack(img, 4, 1.0, 0.25);
  REQUIRE(stack.features.count == 16);
  const double tau = 6.28318530717958647692;
  const double corners[4][2] = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  // Quarter turn (x,y) -> (1-y, x); assembled per angle t by repeated
  // application.
  auto rotated = [&](int t, int corner, int axis) {
    double x = corners[corner][0], y = corners[corner][1];
    for (int r = 0; r < t; ++r) {
      const double nx = 1.0 - y;
      const double ny = x;
      x = nx;
      y = ny;
    }
    return axis == 0 ? x : y;
  };
  for (int t = 0; t < 4; ++t)
    for (int corner = 0; corner < 4; ++corner) {
      const std::size_t i = t * 4 + corner;
      CHECK(stack.features.coords[i * 3 + 0] ==
            doctest::Approx(rotated(t, corner, 0)).epsilon(1e-9));
      CHECK(stack.features.coords[i * 3 + 1] ==
            doctest::Approx(rotated(t, corner, 1)).epsilon(1e-9));
      CHECK(stack.features.coords[i * 3 + 2] ==
            doctest::Approx(tau * t / 4.0 / 0.25).epsilon(1e-12));
      CHECK(stack.values(i, 0) == img.pixels[corner]);
    }

  CHECK_THROWS_AS(rotation_stack(img, 0, 1.0, 1.0), std::invalid_argument);
}
