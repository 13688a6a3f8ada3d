#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "pcnn/filterbank.hpp"
#include "pcnn/lattice.hpp"

namespace pcnn {

// H x W grayscale image, 64-bit pixels in [0, 1], row-major.
struct GrayImage {
  std::size_t height = 0, width = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t h, std::size_t w)
      : height(h), width(w), pixels(h * w, 0.0) {}

  double& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
  double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
};

// Reads 8/16-bit PGM (P2, P5) and 8-bit PPM (P3, P6); color collapses to
// gray as the mean across channels, values scale to [0, 1]. Throws
// io_error on malformed headers, truncated data or unsupported magics.
GrayImage load_image(const std::filesystem::path& path);

// Writes binary 8-bit PGM with round-half-up quantization.
void save_image(const std::filesystem::path& path, const GrayImage& image);

// Adds N(0, sigma^2) samples pixel by pixel in row-major order and clamps
// to [0, 1]. The noise stream is splitmix64-seeded xoshiro256++ with
// Box-Muller, so a seed pins the output bit-exactly.
GrayImage add_gaussian_noise(const GrayImage& image, double sigma,
                             std::uint64_t seed);

// 10*log10(1/MSE) with signal peak 1.0; +infinity for identical images.
double psnr(const GrayImage& a, const GrayImage& b);

// Samples drawn from an image: features plus one signal value per sample.
struct SampleSet {
  FeatureSet features;
  SignalMatrix values;  // count x 1
};

// One sample per pixel with feature (x/spatial, y/spatial, gray/intensity)
// where (x, y) = (column, row) from the top-left pixel center.
SampleSet bilateral_features(const GrayImage& image, double spatial_scale,
                             double intensity_scale);

// One sample per pixel with feature (x/spatial, y/spatial).
SampleSet position_features(const GrayImage& image, double spatial_scale);

// Bilinear interpolation at a continuous pixel position (clamped at the
// border).
double bilinear_sample(const GrayImage& image, double x, double y);

// Draws ceil(fraction * pixel count) samples. Continuous positions are
// uniform over [0, W-1] x [0, H-1] with bilinearly interpolated values;
// with on_grid set, positions are integer pixels instead (fraction 1 then
// reproduces position_features exactly). Throws std::invalid_argument
// unless 0 < fraction <= 1.
SampleSet subsample(const GrayImage& image, double fraction, std::uint64_t seed,
                    double spatial_scale, bool on_grid = false);

// Stacks n_angles copies of the image rotated by 2*pi*t/n_angles about the
// image center ((W-1)/2, (H-1)/2) into a 3-D feature space
// (x'/spatial, y'/spatial, theta/angle). Rotated positions stay
// continuous; no resampling happens.
SampleSet rotation_stack(const GrayImage& image, int n_angles,
                         double spatial_scale, double angle_scale);

}  // namespace pcnn
