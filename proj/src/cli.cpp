#include "pcnn/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "pcnn/denoise.hpp"
#include "pcnn/errors.hpp"
#include "pcnn/rng.hpp"

namespace pcnn {

namespace {

std::string fmt(const char* format, double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, value);
  return buf;
}

// Applies a "key = value" config file ('#' comments) by appending the
// file's settings as flags for any option the user did not pass
// explicitly. Unknown keys surface as ordinary parse errors.
std::vector<std::string> expand_config(const std::vector<std::string>& args) {
  std::string path;
  std::vector<std::string> expanded;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      path = args[++i];
      continue;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      continue;
    }
    expanded.push_back(args[i]);
  }
  if (path.empty()) return expanded;

  std::ifstream in(path);
  if (!in) throw io_error("cannot open config file: " + path);
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw std::invalid_argument("malformed config line: " + line);
      continue;
    }
    auto trim = [](std::string s) {
      const auto first = s.find_first_not_of(" \t\r");
      const auto last = s.find_last_not_of(" \t\r");
      return first == std::string::npos ? std::string()
                                        : s.substr(first, last - first + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::invalid_argument("malformed config line: " + line);
    const std::string flag = "--" + key;
    bool given = false;
    for (const auto& a : expanded)
      if (a == flag || a.rfind(flag + "=", 0) == 0) given = true;
    if (given) continue;  // explicit flags win
    expanded.push_back(flag);
    expanded.push_back(value);
  }
  return expanded;
}

// Shared experiment options; each subcommand registers the subset it uses.
struct CommonOptions {
  std::uint64_t seed = 0;
  std::string model = "pcnn-trained";
  double sigma = 25.0 / 255.0;
  double scale_spatial = 6.0;
  double scale_intensity = 0.1;
  unsigned neighborhood = 2;
  double kernel_sigma = 1.0;
  unsigned epochs = 10;
  double lr = -1.0;  // negative: keep the per-model default
  double momentum = 0.9;
  double weight_decay = 5e-4;
  unsigned crop = 128;
  unsigned train_subset = 50;
};

DenoiseConfig to_config(const CommonOptions& o) {
  DenoiseConfig cfg;
  cfg.noise_sigma = o.sigma;
  cfg.spatial_scale = o.scale_spatial;
  cfg.intensity_scale = o.scale_intensity;
  cfg.neighborhood = static_cast<int>(o.neighborhood);
  cfg.kernel_sigma = o.kernel_sigma;
  cfg.momentum = o.momentum;
  cfg.weight_decay = o.weight_decay;
  cfg.epochs = static_cast<int>(o.epochs);
  cfg.crop = o.crop;
  cfg.train_subset = o.train_subset;
  cfg.seed = o.seed;
  if (o.lr >= 0.0) {
    // One flag drives whichever branches the selected model trains.
    cfg.lr_cnn = o.lr;
    cfg.lr_pcnn = o.lr;
  }
  return cfg;
}

void add_seed_option(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--seed", o.seed, "base seed for all random streams");
}

void add_feature_options(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--scale-spatial", o.scale_spatial, "spatial feature scale, pixels");
  cmd->add_option("--scale-intensity", o.scale_intensity, "intensity feature scale");
  cmd->add_option("--neighborhood", o.neighborhood, "lattice kernel neighborhood size");
  cmd->add_option("--kernel-sigma", o.kernel_sigma,
                  "Gaussian kernel width, lattice steps");
}

void add_training_options(CLI::App* cmd, CommonOptions& o) {
  cmd->add_option("--sigma", o.sigma, "noise standard deviation");
  cmd->add_option("--epochs", o.epochs, "training epochs");
  cmd->add_option("--lr", o.lr, "learning rate (overrides the per-model default)");
  cmd->add_option("--momentum", o.momentum, "SGD momentum");
  cmd->add_option("--weight-decay", o.weight_decay, "SGD weight decay");
  cmd->add_option("--crop", o.crop, "training crop size, pixels");
  cmd->add_option("--train-subset", o.train_subset, "number of training images used");
}

// Normalized lattice filtering of an image with an arbitrary single-channel
// kernel: value and unit-mass channels through the same kernel, then the
// pixelwise ratio.
GrayImage filter_normalized(const FeatureSet& in_features,
                            const FeatureSet& out_features, int radius,
                            const Kernel& kernel, const SignalMatrix& values,
                            std::size_t out_h, std::size_t out_w) {
  const auto frame = build_frame(in_features, out_features, radius);
  SignalMatrix stacked(values.rows, 2);
  for (std::size_t i = 0; i < values.rows; ++i) {
    stacked(i, 0) = values(i, 0);
    stacked(i, 1) = 1.0;
  }
  Kernel pair = make_kernel(kernel.dim, kernel.radius, 2, 2);
  for (int n = 0; n < kernel.offset_count(); ++n) {
    pair.at(0, 0, n) = kernel.at(0, 0, n);
    pair.at(1, 1, n) = kernel.at(0, 0, n);
  }
  const auto filtered = slice(frame, convolve(frame, splat(frame, stacked), pair));
  GrayImage out(out_h, out_w);
  double mean = 0.0;
  for (std::size_t i = 0; i < values.rows; ++i) mean += values(i, 0);
  mean /= static_cast<double>(values.rows);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    const double mass = filtered(i, 1);
    out.pixels[i] =
        std::clamp(mass > 1e-12 ? filtered(i, 0) / mass : mean, 0.0, 1.0);
  }
  return out;
}

int cmd_bilateral(const std::string& in_path, const std::string& out_path,
                  const std::string& ref_path, const CommonOptions& o,
                  std::ostream& out) {
  const GrayImage image = load_image(in_path);
  const auto set = bilateral_features(image, o.scale_spatial, o.scale_intensity);
  const auto kernel =
      gaussian_kernel(3, static_cast<int>(o.neighborhood), o.kernel_sigma);
  const GrayImage filtered =
      filter_normalized(set.features, set.features,
                        static_cast<int>(o.neighborhood), kernel, set.values,
                        image.height, image.width);
  save_image(out_path, filtered);
  if (!ref_path.empty()) {
    const GrayImage ref = load_image(ref_path);
    out << "psnr " << fmt("%.6f", psnr(filtered, ref)) << "\n";
  }
  return 0;
}

int cmd_train(const std::string& train_dir, const std::string& val_dir,
              const std::string& out_dir, const CommonOptions& o,
              bool cross_validate, std::ostream& out) {
  const ModelKind kind = parse_model_kind(o.model);
  if (kind == ModelKind::Noisy)
    throw std::invalid_argument("model 'noisy' has nothing to train");
  DenoiseConfig cfg = to_config(o);
  const auto train_paths = list_images(train_dir);
  const auto val_paths = list_images(val_dir);

  if (cross_validate) {
    const auto [ss, si] = cross_validate_scales(val_paths, cfg);
    cfg.spatial_scale = ss;
    cfg.intensity_scale = si;
    out << "scales " << fmt("%.6g", ss) << " " << fmt("%.6g", si) << "\n";
  }

  DenoiseModel model = init_model(kind, cfg);
  std::vector<double> pconv_velocity, conv_velocity;
  const auto log =
      train_model(model, train_paths, val_paths, cfg, &pconv_velocity,
                  &conv_velocity);

  std::filesystem::create_directories(out_dir);
  save_checkpoint(out_dir, model, cfg, pconv_velocity, conv_velocity);
  std::ofstream log_file(std::filesystem::path(out_dir) / "train_log.txt");
  if (!log_file) throw io_error("cannot write training log in " + out_dir);
  for (const auto& entry : log) {
    const std::string line = std::to_string(entry.epoch) + " " +
                             fmt("%.10g", entry.train_loss) + " " +
                             fmt("%.6f", entry.val_psnr);
    log_file << line << "\n";
    out << line << "\n";
  }
  return 0;
}

int cmd_eval(const std::string& test_dir, const std::string& checkpoint,
             const std::string& out_file, const CommonOptions& o,
             std::ostream& out) {
  const ModelKind kind = parse_model_kind(o.model);
  const DenoiseConfig cfg = to_config(o);
  DenoiseModel model;
  const bool needs_weights = kind == ModelKind::Cnn ||
                             kind == ModelKind::PcnnTrained ||
                             kind == ModelKind::CnnPcnn;
  if (checkpoint.empty()) {
    if (needs_weights)
      throw std::invalid_argument("--checkpoint is required for model " + o.model);
    model = init_model(kind, cfg);
  } else {
    model = load_checkpoint(checkpoint, kind, cfg);
  }

  const auto result = evaluate_model(model, list_images(test_dir), cfg);
  std::ofstream file(out_file);
  if (!file) throw io_error("cannot write results to " + out_file);
  for (const auto& entry : result.per_image) {
    const std::string line = entry.name + " " + fmt("%.6f", entry.psnr);
    file << line << "\n";
    out << line << "\n";
  }
  const std::string mean_line = "mean " + fmt("%.6f", result.mean);
  file << mean_line << "\n";
  out << mean_line << "\n";
  return 0;
}

int cmd_gradcheck(std::uint64_t seed, double eps, std::ostream& out) {
  const auto report = run_standard_grad_checks(seed, eps);
  for (const auto& item : report.items)
    out << item.name << " " << fmt("%.3e", item.error) << "\n";
  out << "worst " << fmt("%.3e", report.worst) << "\n";
  return report.worst < 1e-5 ? 0 : 3;
}

int cmd_bench(unsigned dim, unsigned radius, unsigned points, unsigned repeats,
              std::uint64_t seed, std::ostream& out) {
  if (points == 0) throw std::invalid_argument("--points must be >= 1");
  if (repeats == 0) throw std::invalid_argument("--repeats must be >= 1");
  const int d = static_cast<int>(dim);
  Xoshiro256pp rng(seed);
  FeatureSet features(d, points);
  for (auto& c : features.coords) c = rng.next_double() * 30.0;

  using clock = std::chrono::steady_clock;
  auto best = [&](auto&& body) {
    double ns = std::numeric_limits<double>::infinity();
    for (unsigned r = 0; r < repeats; ++r) {
      const auto start = clock::now();
      body();
      const auto stop = clock::now();
      ns = std::min(ns, std::chrono::duration<double, std::nano>(stop - start)
                            .count() /
                            static_cast<double>(points));
    }
    return ns;
  };

  std::optional<PermutohedralFrame> frame;
  const double build_ns = best([&] {
    frame = build_frame(features, features, static_cast<int>(radius));
  });
  const auto kernel = gaussian_kernel(d, static_cast<int>(radius), 1.0);
  SignalMatrix values(points, 1);
  for (auto& v : values.data) v = rng.next_double();
  SignalMatrix lattice;
  const double splat_ns = best([&] { lattice = splat(*frame, values); });
  SignalMatrix convolved;
  const double conv_ns = best([&] { convolved = convolve(*frame, lattice, kernel); });
  SignalMatrix sliced;
  const double slice_ns = best([&] { sliced = slice(*frame, convolved); });

  out << "stage ns_per_sample\n";
  out << "build " << fmt("%.1f", build_ns) << "\n";
  out << "splat " << fmt("%.1f", splat_ns) << "\n";
  out << "convolve " << fmt("%.1f", conv_ns) << "\n";
  out << "slice " << fmt("%.1f", slice_ns) << "\n";
  out << "nodes " << frame->node_count << "\n";
  return 0;
}

int cmd_rotate_demo(const std::string& in_path, const std::string& out_path,
                    unsigned angles, double angle_scale, const CommonOptions& o,
                    std::ostream&) {
  const GrayImage image = load_image(in_path);
  const auto stack = rotation_stack(image, static_cast<int>(angles),
                                    o.scale_spatial, angle_scale);

  // Read the filtered stack back at angle zero on the pixel grid.
  FeatureSet out_features(3, image.pixels.size());
  std::size_t i = 0;
  for (std::size_t y = 0; y < image.height; ++y)
    for (std::size_t x = 0; x < image.width; ++x, ++i) {
      out_features.coords[i * 3 + 0] = static_cast<double>(x) / o.scale_spatial;
      out_features.coords[i * 3 + 1] = static_cast<double>(y) / o.scale_spatial;
      out_features.coords[i * 3 + 2] = 0.0;
    }

  const auto kernel =
      gaussian_kernel(3, static_cast<int>(o.neighborhood), o.kernel_sigma);
  const GrayImage filtered = filter_normalized(
      stack.features, out_features, static_cast<int>(o.neighborhood),
      kernel, stack.values, image.height, image.width);
  save_image(out_path, filtered);
  return 0;
}

int cmd_resample_demo(const std::string& in_path, double train_fraction,
                      double test_fraction, const CommonOptions& o,
                      std::ostream& out) {
  const GrayImage image = load_image(in_path);
  const auto splat_set =
      subsample(image, train_fraction, mix_seed(o.seed, 11), o.scale_spatial);
  const SampleSet slice_set =
      test_fraction == 1.0
          ? position_features(image, o.scale_spatial)
          : subsample(image, test_fraction, mix_seed(o.seed, 12), o.scale_spatial);

  const auto kernel =
      gaussian_kernel(2, static_cast<int>(o.neighborhood), o.kernel_sigma);
  const auto frame = build_frame(splat_set.features, slice_set.features,
                                 static_cast<int>(o.neighborhood));
  SignalMatrix stacked(splat_set.values.rows, 2);
  for (std::size_t i = 0; i < stacked.rows; ++i) {
    stacked(i, 0) = splat_set.values(i, 0);
    stacked(i, 1) = 1.0;
  }
  Kernel pair = make_kernel(2, static_cast<int>(o.neighborhood), 2, 2);
  for (int n = 0; n < kernel.offset_count(); ++n) {
    pair.at(0, 0, n) = kernel.at(0, 0, n);
    pair.at(1, 1, n) = kernel.at(0, 0, n);
  }
  const auto filtered = slice(frame, convolve(frame, splat(frame, stacked), pair));

  double mean = 0.0;
  for (std::size_t i = 0; i < splat_set.values.rows; ++i)
    mean += splat_set.values(i, 0);
  mean /= static_cast<double>(splat_set.values.rows);

  double mse = 0.0;
  for (std::size_t i = 0; i < slice_set.values.rows; ++i) {
    const double mass = filtered(i, 1);
    const double value =
        std::clamp(mass > 1e-12 ? filtered(i, 0) / mass : mean, 0.0, 1.0);
    const double diff = value - slice_set.values(i, 0);
    mse += diff * diff;
  }
  mse /= static_cast<double>(slice_set.values.rows);
  const double reconstruction =
      mse == 0.0 ? std::numeric_limits<double>::infinity()
                 : 10.0 * std::log10(1.0 / mse);
  out << "psnr " << fmt("%.6f", reconstruction) << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"permutohedral lattice convolution toolkit"};
  app.require_subcommand(1);

  CommonOptions o;

  std::string config_path;
  std::string in_path, out_path, ref_path;
  auto* bilateral = app.add_subcommand(
      "bilateral", "Gaussian bilateral filtering on the lattice");
  bilateral->add_option("--in", in_path, "input image (PGM/PPM)")->required();
  bilateral->add_option("--out", out_path, "output image (PGM)")->required();
  bilateral->add_option("--ref", ref_path, "reference image for PSNR");
  add_feature_options(bilateral, o);
  add_seed_option(bilateral, o);
  bilateral->add_option("--config", config_path, "key = value settings file");

  std::string train_dir, val_dir, train_out;
  bool cross_validate = false;
  auto* train = app.add_subcommand("train", "train a denoiser");
  train->add_option("--train-dir", train_dir, "training image directory")->required();
  train->add_option("--val-dir", val_dir, "validation image directory")->required();
  train->add_option("--out", train_out, "checkpoint/log output directory")->required();
  train->add_option("--model", o.model, "cnn, pcnn-gauss, pcnn-trained or cnn+pcnn");
  train->add_flag("--cross-validate", cross_validate,
                  "sweep feature scales on the val set first");
  add_feature_options(train, o);
  add_training_options(train, o);
  add_seed_option(train, o);
  train->add_option("--config", config_path, "key = value settings file");

  std::string test_dir, checkpoint, eval_out;
  auto* eval = app.add_subcommand("eval", "evaluate a denoiser on a test set");
  eval->add_option("--test-dir", test_dir, "test image directory")->required();
  eval->add_option("--checkpoint", checkpoint, "checkpoint directory");
  eval->add_option("--out", eval_out, "result file")->required();
  eval->add_option("--model", o.model,
                   "noisy, cnn, pcnn-gauss, pcnn-trained or cnn+pcnn");
  add_feature_options(eval, o);
  eval->add_option("--sigma", o.sigma, "noise standard deviation");
  add_seed_option(eval, o);
  eval->add_option("--config", config_path, "key = value settings file");

  double eps = 1e-5;
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "certify analytic gradients against finite differences");
  gradcheck->add_option("--eps", eps, "finite-difference step");
  add_seed_option(gradcheck, o);
  gradcheck->add_option("--config", config_path, "key = value settings file");

  unsigned dim = 3, points = 100000, repeats = 3;
  auto* bench = app.add_subcommand("bench", "time the pipeline stages");
  bench->add_option("--dim", dim, "feature dimension")->check(CLI::Range(1u, 8u));
  bench->add_option("--neighborhood", o.neighborhood, "kernel neighborhood size");
  bench->add_option("--points", points, "number of samples");
  bench->add_option("--repeats", repeats, "timing repetitions");
  add_seed_option(bench, o);

  unsigned angles = 8;
  double angle_scale = 0.25;
  CommonOptions rot;
  rot.scale_spatial = 2.0;
  rot.neighborhood = 1;
  auto* rotate = app.add_subcommand(
      "rotate-demo", "filter a stack of rotated copies and slice at angle 0");
  rotate->add_option("--in", in_path, "input image")->required();
  rotate->add_option("--out", out_path, "output image")->required();
  rotate->add_option("--angles", angles, "number of rotations")
      ->check(CLI::Range(1u, 256u));
  rotate->add_option("--angle-scale", angle_scale, "rotation feature scale");
  add_feature_options(rotate, rot);
  add_seed_option(rotate, rot);
  rotate->add_option("--config", config_path, "key = value settings file");

  // Reconstruction wants a lattice near pixel pitch and a tight kernel, so
  // the resample command carries its own feature defaults.
  double train_fraction = 1.0, test_fraction = 1.0;
  CommonOptions ro;
  ro.scale_spatial = 1.0;
  ro.neighborhood = 1;
  ro.kernel_sigma = 0.5;
  auto* resample = app.add_subcommand(
      "resample-demo", "splat a pixel subsample, slice at another sample set");
  resample->add_option("--in", in_path, "input image")->required();
  resample->add_option("--train-fraction", train_fraction, "splat-side fraction");
  resample->add_option("--test-fraction", test_fraction, "slice-side fraction");
  add_feature_options(resample, ro);
  add_seed_option(resample, ro);
  resample->add_option("--config", config_path, "key = value settings file");

  std::vector<std::string> expanded;
  try {
    expanded = expand_config(args);
  } catch (const io_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  std::vector<const char*> argv;
  argv.push_back("pcnn");
  for (const auto& a : expanded) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (bilateral->parsed())
      return cmd_bilateral(in_path, out_path, ref_path, o, out);
    if (train->parsed())
      return cmd_train(train_dir, val_dir, train_out, o, cross_validate, out);
    if (eval->parsed()) return cmd_eval(test_dir, checkpoint, eval_out, o, out);
    if (gradcheck->parsed()) return cmd_gradcheck(o.seed, eps, out);
    if (bench->parsed())
      return cmd_bench(dim, o.neighborhood, points, repeats, o.seed, out);
    if (rotate->parsed())
      return cmd_rotate_demo(in_path, out_path, angles, angle_scale, rot, out);
    if (resample->parsed())
      return cmd_resample_demo(in_path, train_fraction, test_fraction, ro, out);
  } catch (const io_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const numeric_error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

int run_cli(const std::vector<std::string>& args) {
  return run_cli(args, std::cout, std::cerr);
}

}  // namespace pcnn
