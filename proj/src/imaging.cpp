#include "pcnn/imaging.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "pcnn/errors.hpp"
#include "pcnn/rng.hpp"

namespace pcnn {

namespace {

// Reads the next header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string token;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
      continue;
    }
    if (std::isspace(c)) {
      if (!token.empty()) {
        in.unget();  // leave the delimiter for the binary-data separator
        return token;
      }
      continue;
    }
    token.push_back(static_cast<char>(c));
  }
  if (token.empty()) throw io_error("image header truncated");
  return token;
}

unsigned parse_header_value(std::istream& in, const char* what,
                            unsigned lo, unsigned hi) {
  const std::string token = next_token(in);
  unsigned value = 0;
  for (char c : token) {
    if (!std::isdigit(static_cast<unsigned char>(c)))
      throw io_error(std::string("malformed image header field: ") + what);
    value = value * 10 + static_cast<unsigned>(c - '0');
    if (value > hi)
      throw io_error(std::string("image header field out of range: ") + what);
  }
  if (value < lo)
    throw io_error(std::string("image header field out of range: ") + what);
  return value;
}

double ascii_sample(std::istream& in, unsigned maxval) {
  const unsigned v = parse_header_value(in, "pixel", 0, 65535);
  if (v > maxval) throw io_error("pixel value exceeds maxval");
  return static_cast<double>(v);
}

double binary_sample(std::istream& in, unsigned maxval) {
  if (maxval > 255) {
    // 16-bit samples are big-endian per the netpbm convention.
    const int hi = in.get(), lo = in.get();
    if (hi == EOF || lo == EOF) throw io_error("image data truncated");
    return static_cast<double>((hi << 8) | lo);
  }
  const int v = in.get();
  if (v == EOF) throw io_error("image data truncated");
  return static_cast<double>(v);
}

}  // namespace

GrayImage load_image(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open image: " + path.string());

  const std::string magic = next_token(in);
  const bool ascii = magic == "P2" || magic == "P3";
  const bool color = magic == "P3" || magic == "P6";
  if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6")
    throw io_error("unsupported image magic '" + magic + "' in " + path.string());

  const unsigned width = parse_header_value(in, "width", 1, 1u << 20);
  const unsigned height = parse_header_value(in, "height", 1, 1u << 20);
  const unsigned maxval = parse_header_value(in, "maxval", 1, 65535);
  if (color && maxval > 255)
    throw io_error("16-bit color images are not supported: " + path.string());
  if (!ascii) {
    // Exactly one whitespace byte separates the header from binary data.
    const int sep = in.get();
    if (sep == EOF || !std::isspace(sep))
      throw io_error("malformed image header separator");
  }

  GrayImage image(height, width);
  const double scale = 1.0 / maxval;
  const int channels = color ? 3 : 1;
  for (auto& pixel : image.pixels) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c)
      acc += ascii ? ascii_sample(in, maxval) : binary_sample(in, maxval);
    pixel = acc * scale / channels;
  }
  return image;
}

void save_image(const std::filesystem::path& path, const GrayImage& image) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open image for writing: " + path.string());
  out << "P5\n" << image.width << " " << image.height << "\n255\n";
  for (double p : image.pixels) {
    const double clamped = std::clamp(p, 0.0, 1.0);
    const int q = static_cast<int>(std::floor(clamped * 255.0 + 0.5));
    out.put(static_cast<char>(std::clamp(q, 0, 255)));
  }
  if (!out) throw io_error("failed writing image: " + path.string());
}

GrayImage add_gaussian_noise(const GrayImage& image, double sigma,
                             std::uint64_t seed) {
  if (sigma < 0.0) throw std::invalid_argument("noise sigma must be >= 0");
  GaussianSampler sampler(seed);
  GrayImage out(image.height, image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i)
    out.pixels[i] = std::clamp(image.pixels[i] + sigma * sampler.next(), 0.0, 1.0);
  return out;
}

double psnr(const GrayImage& a, const GrayImage& b) {
  if (a.height != b.height || a.width != b.width)
    throw std::invalid_argument("psnr: image dimensions differ");
  double mse = 0.0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    const double d = a.pixels[i] - b.pixels[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.pixels.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

SampleSet bilateral_features(const GrayImage& image, double spatial_scale,
                             double intensity_scale) {
  if (!(spatial_scale > 0.0) || !(intensity_scale > 0.0))
    throw std::invalid_argument("feature scales must be > 0");
  SampleSet set;
  set.features = FeatureSet(3, image.pixels.size());
  set.values = SignalMatrix(image.pixels.size(), 1);
  std::size_t i = 0;
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x, ++i) {
      const double g = image.at(y, x);
      set.features.coords[i * 3 + 0] = static_cast<double>(x) / spatial_scale;
      set.features.coords[i * 3 + 1] = static_cast<double>(y) / spatial_scale;
      set.features.coords[i * 3 + 2] = g / intensity_scale;
      set.values(i, 0) = g;
    }
  return set;
}

SampleSet position_features(const GrayImage& image, double spatial_scale) {
  if (!(spatial_scale > 0.0))
    throw std::invalid_argument("feature scales must be > 0");
  SampleSet set;
  set.features = FeatureSet(2, image.pixels.size());
  set.values = SignalMatrix(image.pixels.size(), 1);
  std::size_t i = 0;
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x, ++i) {
      set.features.coords[i * 2 + 0] = static_cast<double>(x) / spatial_scale;
      set.features.coords[i * 2 + 1] = static_cast<double>(y) / spatial_scale;
      set.values(i, 0) = image.at(y, x);
    }
  return set;
}

double bilinear_sample(const GrayImage& image, double x, double y) {
  x = std::clamp(x, 0.0, static_cast<double>(image.width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(image.height - 1));
  const auto x0 = static_cast<std::size_t>(std::floor(x));
  const auto y0 = static_cast<std::size_t>(std::floor(y));
  const std::size_t x1 = std::min(x0 + 1, image.width - 1);
  const std::size_t y1 = std::min(y0 + 1, image.height - 1);
  const double fx = x - static_cast<double>(x0);
  const double fy = y - static_cast<double>(y0);
  const double top = (1.0 - fx) * image.at(y0, x0) + fx * image.at(y0, x1);
  const double bottom = (1.0 - fx) * image.at(y1, x0) + fx * image.at(y1, x1);
  return (1.0 - fy) * top + fy * bottom;
}

SampleSet subsample(const GrayImage& image, double fraction, std::uint64_t seed,
                    double spatial_scale, bool on_grid) {
  if (!(fraction > 0.0) || fraction > 1.0)
    throw std::invalid_argument("subsample fraction must be in (0, 1]");
  if (!(spatial_scale > 0.0))
    throw std::invalid_argument("feature scales must be > 0");

  if (on_grid && fraction == 1.0) return position_features(image, spatial_scale);

  const auto total = static_cast<double>(image.pixels.size());
  const auto count = static_cast<std::size_t>(std::ceil(fraction * total));
  SampleSet set;
  set.features = FeatureSet(2, count);
  set.values = SignalMatrix(count, 1);
  Xoshiro256pp rng(seed);
  for (std::size_t i = 0; i < count; ++i) {
    double x, y;
    if (on_grid) {
      x = std::min(static_cast<double>(image.width - 1),
                   std::floor(rng.next_double() * image.width));
      y = std::min(static_cast<double>(image.height - 1),
                   std::floor(rng.next_double() * image.height));
    } else {
      x = rng.next_double() * static_cast<double>(image.width - 1);
      y = rng.next_double() * static_cast<double>(image.height - 1);
    }
    set.features.coords[i * 2 + 0] = x / spatial_scale;
    set.features.coords[i * 2 + 1] = y / spatial_scale;
    set.values(i, 0) = bilinear_sample(image, x, y);
  }
  return set;
}

SampleSet rotation_stack(const GrayImage& image, int n_angles,
                         double spatial_scale, double angle_scale) {
  if (n_angles < 1) throw std::invalid_argument("n_angles must be >= 1");
  if (!(spatial_scale > 0.0) || !(angle_scale > 0.0))
    throw std::invalid_argument("feature scales must be > 0");

  constexpr double kTau = 6.28318530717958647692;
  const double cx = (static_cast<double>(image.width) - 1.0) / 2.0;
  const double cy = (static_cast<double>(image.height) - 1.0) / 2.0;
  const std::size_t pixels = image.pixels.size();

  SampleSet set;
  set.features = FeatureSet(3, pixels * n_angles);
  set.values = SignalMatrix(pixels * n_angles, 1);
  std::size_t i = 0;
  for (int t = 0; t < n_angles; ++t) {
    const double theta = kTau * t / n_angles;
    const double c = std::cos(theta), s = std::sin(theta);
    for (std::size_t y = 0; y < image.height; ++y)
      for (std::size_t x = 0; x < image.width; ++x, ++i) {
        const double dx = static_cast<double>(x) - cx;
        const double dy = static_cast<double>(y) - cy;
        set.features.coords[i * 3 + 0] = (cx + c * dx - s * dy) / spatial_scale;
        set.features.coords[i * 3 + 1] = (cy + s * dx + c * dy) / spatial_scale;
        set.features.coords[i * 3 + 2] = theta / angle_scale;
        set.values(i, 0) = image.at(y, x);
      }
  }
  return set;
}

}  // namespace pcnn
