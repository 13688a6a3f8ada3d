#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pcnn/autodiff.hpp"
#include "pcnn/imaging.hpp"

namespace pcnn {

// Denoiser architectures: the unfiltered baseline, a single spatial
// convolution, the Gaussian bilateral filter on the lattice, its trained
// variant, and the sum of the spatial and lattice branches.
enum class ModelKind { Noisy, Cnn, PcnnGauss, PcnnTrained, CnnPcnn };

ModelKind parse_model_kind(const std::string& name);
std::string model_kind_name(ModelKind kind);

struct DenoiseConfig {
  double noise_sigma = 25.0 / 255.0;
  double spatial_scale = 6.0;
  double intensity_scale = 0.1;
  int neighborhood = 2;
  double kernel_sigma = 1.0;
  int conv_kernel_size = 5;
  double lr_cnn = 0.03;
  double lr_pcnn = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int epochs = 10;
  std::size_t crop = 128;
  std::size_t train_subset = 50;
  std::uint64_t seed = 0;
};

// Trainable state. The lattice branch filters the noisy values with the
// learnable kernel and divides by a fixed Gaussian-filtered unit mass, so
// at initialization it is exactly the normalized bilateral filter. In the
// combined model the spatial branch starts at zero and learns a residual
// correction on top of the bilateral output.
struct DenoiseModel {
  ModelKind kind = ModelKind::Noisy;
  Kernel pconv_kernel;
  Conv2DLayer conv{1, 1, 1};
};

DenoiseModel init_model(ModelKind kind, const DenoiseConfig& config);

// Per-image lattice state shared between filtering and training: the
// frame over the noisy image's bilateral features, the noisy values, and
// the reciprocal of the Gaussian-filtered unit mass.
struct PcnnContext {
  std::shared_ptr<const PermutohedralFrame> frame;
  SignalMatrix values;
  std::vector<double> inv_mass;
};

PcnnContext make_pcnn_context(const GrayImage& noisy, const DenoiseConfig& config);

// Full-image filtering with the model's current weights; output clamped
// to [0, 1].
GrayImage denoise_image(const DenoiseModel& model, const GrayImage& noisy,
                        const DenoiseConfig& config);

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_psnr = 0.0;
};

// Trains in place: one seeded random crop per train image per epoch, fixed
// image order, per-image frozen noise. Returns one log entry per epoch
// with the epoch-average training loss and the mean PSNR over the val
// images. Optimizer state (when the caller wants it persisted) is
// returned through the optional pointers.
std::vector<EpochLog> train_model(DenoiseModel& model,
                                  const std::vector<std::filesystem::path>& train_paths,
                                  const std::vector<std::filesystem::path>& val_paths,
                                  const DenoiseConfig& config,
                                  std::vector<double>* pconv_velocity = nullptr,
                                  std::vector<double>* conv_velocity = nullptr);

struct EvalEntry {
  std::string name;
  double psnr = 0.0;
};
struct EvalResult {
  std::vector<EvalEntry> per_image;
  double mean = 0.0;
};

// Adds seeded noise to each test image, filters it and reports PSNR
// against the clean original.
EvalResult evaluate_model(const DenoiseModel& model,
                          const std::vector<std::filesystem::path>& test_paths,
                          const DenoiseConfig& config);

// Sweeps spatial scale {2,4,6,8,10} x intensity scale {0.05,0.1,0.2,0.3}
// of the Gaussian-filter model over the val set and returns the best pair.
std::pair<double, double> cross_validate_scales(
    const std::vector<std::filesystem::path>& val_paths,
    const DenoiseConfig& config);

// Sorted .pgm/.ppm files of a dataset directory; throws io_error when the
// directory is missing or holds no images.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

GrayImage crop_image(const GrayImage& image, std::size_t y0, std::size_t x0,
                     std::size_t height, std::size_t width);

// Checkpoint directory layout: kernel.pcnv for the lattice kernel,
// conv.txt for spatial weights, optimizer.txt ("name value" lines) for
// hyperparameters and velocities.
void save_checkpoint(const std::filesystem::path& dir, const DenoiseModel& model,
                     const DenoiseConfig& config,
                     const std::vector<double>& pconv_velocity,
                     const std::vector<double>& conv_velocity);
DenoiseModel load_checkpoint(const std::filesystem::path& dir, ModelKind kind,
                             const DenoiseConfig& config);

// Substream salts for the seeded generators.
inline constexpr std::uint64_t kSeedTrainNoise = 1;
inline constexpr std::uint64_t kSeedValNoise = 2;
inline constexpr std::uint64_t kSeedTestNoise = 3;
inline constexpr std::uint64_t kSeedCrop = 4;
inline constexpr std::uint64_t kSeedInit = 5;

}  // namespace pcnn
