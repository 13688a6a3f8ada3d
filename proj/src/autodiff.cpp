#include "pcnn/autodiff.hpp"

#include <cmath>
#include <stdexcept>

#include "pcnn/rng.hpp"

namespace pcnn {

PConvLayer::PConvLayer(std::shared_ptr<const PermutohedralFrame> frame,
                       Kernel kernel)
    : frame_(std::move(frame)), kernel_(std::move(kernel)) {
  if (kernel_.offset_count() != frame_->offset_table.count())
    throw std::invalid_argument("kernel offset count does not match frame");
}

SignalMatrix PConvLayer::forward(const SignalMatrix& values_in) {
  cached_lattice_ = splat(*frame_, values_in);
  has_cache_ = true;
  return slice(*frame_, convolve(*frame_, cached_lattice_, kernel_));
}

PConvLayer::Gradients PConvLayer::backward(const SignalMatrix& grad_out) const {
  if (!has_cache_)
    throw std::logic_error("PConvLayer::backward called before forward");
  if (grad_out.rows != frame_->output_count ||
      grad_out.cols != static_cast<std::size_t>(kernel_.c_out))
    throw std::invalid_argument("grad_out shape does not match forward output");

  // Gradient w.r.t. the convolution output lives on the lattice.
  const SignalMatrix g_lattice = slice_adjoint(*frame_, grad_out);

  // Kernel gradient: correlate the lattice gradient with the cached
  // splatted input over every neighbor offset.
  Gradients grads;
  grads.kernel = make_kernel(kernel_.dim, kernel_.radius, kernel_.c_out,
                             kernel_.c_in);
  const int n_off = frame_->offset_table.count();
  const int c_in = kernel_.c_in;
  const int c_out = kernel_.c_out;
  for (std::int32_t j = 0; j < frame_->node_count; ++j) {
    const std::int32_t* nbr =
        frame_->neighbor_table.data() + static_cast<std::size_t>(j) * n_off;
    const double* g = g_lattice.data.data() + static_cast<std::size_t>(j) * c_out;
    for (int n = 0; n < n_off; ++n) {
      const std::int32_t source = nbr[n];
      if (source < 0) continue;
      const double* cached =
          cached_lattice_.data.data() + static_cast<std::size_t>(source) * c_in;
      double* gw = grads.kernel.weights.data() + n;
      for (int co = 0; co < c_out; ++co)
        for (int ci = 0; ci < c_in; ++ci)
          gw[static_cast<std::size_t>(co * c_in + ci) * n_off] +=
              g[co] * cached[ci];
    }
  }

  // Input gradient: adjoint convolution, then adjoint splat.
  const Kernel transposed = transpose_kernel(kernel_, frame_->offset_table);
  grads.input = splat_adjoint(*frame_, convolve(*frame_, g_lattice, transposed));
  return grads;
}

Conv2DLayer::Conv2DLayer(int kernel_size, int c_in, int c_out)
    : k_(kernel_size), c_in_(c_in), c_out_(c_out) {
  if (kernel_size < 1 || kernel_size % 2 == 0)
    throw std::invalid_argument("conv2d kernel size must be odd and positive");
  if (c_in < 1 || c_out < 1)
    throw std::invalid_argument("conv2d channel counts must be >= 1");
  weights_.assign(
      static_cast<std::size_t>(c_out) * c_in * kernel_size * kernel_size, 0.0);
}

Conv2DLayer Conv2DLayer::fan_in_init(int kernel_size, int c_in, int c_out,
                                     std::uint64_t seed) {
  Conv2DLayer layer(kernel_size, c_in, c_out);
  const double r =
      1.0 / std::sqrt(static_cast<double>(c_in) * kernel_size * kernel_size);
  Xoshiro256pp rng(seed);
  for (auto& w : layer.weights_) w = (2.0 * rng.next_double() - 1.0) * r;
  return layer;
}

SignalMatrix Conv2DLayer::forward(const SignalMatrix& image, std::size_t height,
                                  std::size_t width) {
  if (image.rows != height * width ||
      image.cols != static_cast<std::size_t>(c_in_))
    throw std::invalid_argument("conv2d input shape mismatch");
  cached_input_ = image;
  cached_h_ = height;
  cached_w_ = width;
  has_cache_ = true;

  const int h = static_cast<int>(height), w = static_cast<int>(width);
  const int r = k_ / 2;
  SignalMatrix out(height * width, c_out_);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int co = 0; co < c_out_; ++co) {
        double acc = 0.0;
        for (int ci = 0; ci < c_in_; ++ci)
          for (int ky = 0; ky < k_; ++ky) {
            const int yy = y + ky - r;
            if (yy < 0 || yy >= h) continue;
            for (int kx = 0; kx < k_; ++kx) {
              const int xx = x + kx - r;
              if (xx < 0 || xx >= w) continue;
              acc += weight(co, ci, ky, kx) *
                     image(static_cast<std::size_t>(yy) * width + xx, ci);
            }
          }
        out(static_cast<std::size_t>(y) * width + x, co) = acc;
      }
  return out;
}

Conv2DLayer::Gradients Conv2DLayer::backward(const SignalMatrix& grad_out) const {
  if (!has_cache_)
    throw std::logic_error("Conv2DLayer::backward called before forward");
  if (grad_out.rows != cached_h_ * cached_w_ ||
      grad_out.cols != static_cast<std::size_t>(c_out_))
    throw std::invalid_argument("grad_out shape does not match forward output");

  const int h = static_cast<int>(cached_h_), w = static_cast<int>(cached_w_);
  const int r = k_ / 2;
  Gradients grads;
  grads.input = SignalMatrix(cached_h_ * cached_w_, c_in_);
  grads.weights.assign(weights_.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int co = 0; co < c_out_; ++co) {
        const double g = grad_out(static_cast<std::size_t>(y) * cached_w_ + x, co);
        if (g == 0.0) continue;
        for (int ci = 0; ci < c_in_; ++ci)
          for (int ky = 0; ky < k_; ++ky) {
            const int yy = y + ky - r;
            if (yy < 0 || yy >= h) continue;
            for (int kx = 0; kx < k_; ++kx) {
              const int xx = x + kx - r;
              if (xx < 0 || xx >= w) continue;
              const std::size_t pixel = static_cast<std::size_t>(yy) * cached_w_ + xx;
              grads.input(pixel, ci) += weight(co, ci, ky, kx) * g;
              grads.weights[((static_cast<std::size_t>(co) * c_in_ + ci) * k_ + ky) * k_ + kx] +=
                  g * cached_input_(pixel, ci);
            }
          }
      }
  return grads;
}

SignalMatrix sum_forward(const SignalMatrix& a, const SignalMatrix& b) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw std::invalid_argument("sum_forward shape mismatch");
  SignalMatrix out(a.rows, a.cols);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = a.data[i] + b.data[i];
  return out;
}

std::pair<SignalMatrix, SignalMatrix> sum_backward(const SignalMatrix& grad_out) {
  return {grad_out, grad_out};
}

LossResult euclidean_loss(const SignalMatrix& pred, const SignalMatrix& target) {
  if (pred.rows != target.rows || pred.cols != target.cols)
    throw std::invalid_argument("euclidean_loss shape mismatch");
  LossResult result;
  result.grad = SignalMatrix(pred.rows, pred.cols);
  const double inv_rows = 1.0 / static_cast<double>(pred.rows);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double diff = pred.data[i] - target.data[i];
    total += diff * diff;
    result.grad.data[i] = diff * inv_rows;
  }
  result.value = 0.5 * total * inv_rows;
  return result;
}

void SgdOptimizer::step(std::size_t block, std::span<double> params,
                        std::span<const double> grads) {
  if (params.size() != grads.size())
    throw std::invalid_argument("sgd parameter/gradient size mismatch");
  if (velocity_.size() <= block) velocity_.resize(block + 1);
  auto& v = velocity_[block];
  if (v.empty()) v.assign(params.size(), 0.0);
  if (v.size() != params.size())
    throw std::invalid_argument("sgd velocity shape mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    v[i] = momentum_ * v[i] - lr_ * (grads[i] + decay_ * params[i]);
    params[i] += v[i];
  }
}

double grad_check(const std::function<double()>& objective,
                  std::span<double> values, std::span<const double> analytic,
                  double eps) {
  if (values.size() != analytic.size())
    throw std::invalid_argument("grad_check value/gradient size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + eps;
    const double up = objective();
    values[i] = saved - eps;
    const double down = objective();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

namespace {

SignalMatrix random_matrix(Xoshiro256pp& rng, std::size_t rows, std::size_t cols) {
  SignalMatrix m(rows, cols);
  for (auto& v : m.data) v = 2.0 * rng.next_double() - 1.0;
  return m;
}

FeatureSet random_features(Xoshiro256pp& rng, int d, std::size_t n, double range) {
  FeatureSet f(d, n);
  for (auto& c : f.coords) c = (2.0 * rng.next_double() - 1.0) * range;
  return f;
}

void check_pconv(GradCheckReport& report, std::uint64_t seed, double eps,
                 bool delta) {
  Xoshiro256pp rng(seed);
  const int d = 3, s = 1;
  const auto fin = random_features(rng, d, 50, 2.0);
  const auto fout = random_features(rng, d, 40, 2.0);
  auto frame = std::make_shared<PermutohedralFrame>(build_frame(fin, fout, s));

  Kernel kernel;
  if (delta) {
    kernel = delta_kernel(d, s, 2);
  } else {
    kernel = make_kernel(d, s, 2, 2);
    for (auto& w : kernel.weights) w = 2.0 * rng.next_double() - 1.0;
  }
  PConvLayer layer(std::move(frame), std::move(kernel));

  SignalMatrix x = random_matrix(rng, fin.count, 2);
  const SignalMatrix target = random_matrix(rng, fout.count, 2);
  const auto objective = [&] {
    return euclidean_loss(layer.forward(x), target).value;
  };

  const auto out = layer.forward(x);
  const auto loss = euclidean_loss(out, target);
  const auto grads = layer.backward(loss.grad);

  const char* tag = delta ? "pconv-delta" : "pconv";
  report.items.push_back(
      {std::string(tag) + "/input",
       grad_check(objective, x.data, grads.input.data, eps)});
  report.items.push_back(
      {std::string(tag) + "/kernel",
       grad_check(objective, layer.kernel().weights, grads.kernel.weights, eps)});
}

void check_conv2d(GradCheckReport& report, std::uint64_t seed, double eps) {
  Xoshiro256pp rng(seed);
  const std::size_t h = 6, w = 6;
  Conv2DLayer layer = Conv2DLayer::fan_in_init(3, 1, 1, rng.next());
  SignalMatrix x = random_matrix(rng, h * w, 1);
  const SignalMatrix target = random_matrix(rng, h * w, 1);
  const auto objective = [&] {
    return euclidean_loss(layer.forward(x, h, w), target).value;
  };

  const auto out = layer.forward(x, h, w);
  const auto loss = euclidean_loss(out, target);
  const auto grads = layer.backward(loss.grad);
  report.items.push_back(
      {"conv2d/input", grad_check(objective, x.data, grads.input.data, eps)});
  report.items.push_back(
      {"conv2d/weights",
       grad_check(objective, layer.weights(), grads.weights, eps)});
}

void check_sum(GradCheckReport& report, std::uint64_t seed, double eps) {
  Xoshiro256pp rng(seed);
  SignalMatrix a = random_matrix(rng, 12, 2);
  SignalMatrix b = random_matrix(rng, 12, 2);
  const SignalMatrix target = random_matrix(rng, 12, 2);
  const auto objective = [&] {
    return euclidean_loss(sum_forward(a, b), target).value;
  };
  const auto loss = euclidean_loss(sum_forward(a, b), target);
  const auto [ga, gb] = sum_backward(loss.grad);
  report.items.push_back({"sum/a", grad_check(objective, a.data, ga.data, eps)});
  report.items.push_back({"sum/b", grad_check(objective, b.data, gb.data, eps)});
}

void check_loss(GradCheckReport& report, std::uint64_t seed, double eps) {
  Xoshiro256pp rng(seed);
  SignalMatrix pred = random_matrix(rng, 20, 2);
  const SignalMatrix target = random_matrix(rng, 20, 2);
  const auto objective = [&] { return euclidean_loss(pred, target).value; };
  const auto loss = euclidean_loss(pred, target);
  report.items.push_back(
      {"loss/pred", grad_check(objective, pred.data, loss.grad.data, eps)});
}

}  // namespace

GradCheckReport run_standard_grad_checks(std::uint64_t seed, double eps) {
  GradCheckReport report;
  check_pconv(report, mix_seed(seed, 1), eps, false);
  check_pconv(report, mix_seed(seed, 2), eps, true);
  check_conv2d(report, mix_seed(seed, 3), eps);
  check_sum(report, mix_seed(seed, 4), eps);
  check_loss(report, mix_seed(seed, 5), eps);
  for (const auto& item : report.items)
    report.worst = std::max(report.worst, item.error);
  return report;
}

}  // namespace pcnn
