#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pcnn/filterbank.hpp"

namespace pcnn {

// Trainable permutohedral convolution layer. Forward runs
// slice(convolve(splat(x))) and caches the splatted lattice signal; the
// backward pass pushes the output gradient through the three adjoints and
// accumulates the kernel gradient from the cached signal. One instance
// must not run forward/backward concurrently.
class PConvLayer {
 public:
  PConvLayer(std::shared_ptr<const PermutohedralFrame> frame, Kernel kernel);

  SignalMatrix forward(const SignalMatrix& values_in);

  struct Gradients {
    SignalMatrix input;
    Kernel kernel;  // same shape as the layer kernel
  };

  // Requires a previous forward call. grad_out has the forward output's
  // shape. Steps: slice-adjoint, kernel gradient from the cached lattice
  // signal, convolution with the transposed kernel, splat-adjoint.
  Gradients backward(const SignalMatrix& grad_out) const;

  Kernel& kernel() { return kernel_; }
  const Kernel& kernel() const { return kernel_; }
  const PermutohedralFrame& frame() const { return *frame_; }

 private:
  std::shared_ptr<const PermutohedralFrame> frame_;
  Kernel kernel_;
  SignalMatrix cached_lattice_;
  bool has_cache_ = false;
};

// Zero-padded spatial cross-correlation with an odd square kernel; output
// spatial size equals input size. Bias-free.
class Conv2DLayer {
 public:
  Conv2DLayer(int kernel_size, int c_in, int c_out);  // zero weights

  // Uniform init in [-r, r] with r = 1/sqrt(c_in * k * k).
  static Conv2DLayer fan_in_init(int kernel_size, int c_in, int c_out,
                                 std::uint64_t seed);

  // image rows = height * width (row-major pixels), cols = c_in.
  SignalMatrix forward(const SignalMatrix& image, std::size_t height,
                       std::size_t width);

  struct Gradients {
    SignalMatrix input;
    std::vector<double> weights;
  };
  Gradients backward(const SignalMatrix& grad_out) const;

  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  int kernel_size() const { return k_; }
  int c_in() const { return c_in_; }
  int c_out() const { return c_out_; }

 private:
  double weight(int co, int ci, int ky, int kx) const {
    return weights_[((static_cast<std::size_t>(co) * c_in_ + ci) * k_ + ky) * k_ + kx];
  }

  int k_, c_in_, c_out_;
  std::vector<double> weights_;
  SignalMatrix cached_input_;
  std::size_t cached_h_ = 0, cached_w_ = 0;
  bool has_cache_ = false;
};

// Elementwise sum combiner; backward duplicates the gradient.
SignalMatrix sum_forward(const SignalMatrix& a, const SignalMatrix& b);
std::pair<SignalMatrix, SignalMatrix> sum_backward(const SignalMatrix& grad_out);

// loss = (1/(2R)) * sum (pred - target)^2 with R the number of rows;
// grad = (pred - target) / R. Row-count normalization keeps learning
// rates transferable across image sizes.
struct LossResult {
  double value = 0.0;
  SignalMatrix grad;
};
LossResult euclidean_loss(const SignalMatrix& pred, const SignalMatrix& target);

// SGD with momentum and weight decay:
// v <- mu*v - lr*(g + decay*p); p <- p + v. One velocity buffer per
// parameter block, matched by index.
class SgdOptimizer {
 public:
  SgdOptimizer(double lr, double momentum, double weight_decay)
      : lr_(lr), momentum_(momentum), decay_(weight_decay) {}

  void step(std::size_t block, std::span<double> params,
            std::span<const double> grads);

  double lr() const { return lr_; }
  double momentum() const { return momentum_; }
  double weight_decay() const { return decay_; }
  const std::vector<double>& velocity(std::size_t block) const {
    return velocity_[block];
  }

 private:
  double lr_, momentum_, decay_;
  std::vector<std::vector<double>> velocity_;
};

// Central-difference check of an analytic gradient. `objective`
// re-evaluates the scalar loss from current state; every entry of
// `values` is perturbed by +-eps in turn. Returns the worst relative
// error with denominator max(|analytic|, |numeric|, 1e-8).
double grad_check(const std::function<double()>& objective,
                  std::span<double> values, std::span<const double> analytic,
                  double eps);

struct GradCheckItem {
  std::string name;
  double error;
};
struct GradCheckReport {
  double worst = 0.0;
  std::vector<GradCheckItem> items;
};

// Fixed-seed gradient certification over the standard instances:
// permutohedral convolution (random and delta-kernel), spatial
// convolution, the sum combiner and the loss itself.
GradCheckReport run_standard_grad_checks(std::uint64_t seed, double eps);

}  // namespace pcnn
