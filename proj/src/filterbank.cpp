#include "pcnn/filterbank.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "pcnn/errors.hpp"

namespace pcnn {

namespace {

int expected_offsets(int d, int s) {
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i <= d; ++i) {
    outer *= s + 1;
    inner *= s;
  }
  return static_cast<int>(outer - inner);
}

void check_kernel_shape(const Kernel& kernel, const PermutohedralFrame& frame) {
  if (kernel.offset_count() != frame.offset_table.count())
    throw std::invalid_argument("kernel offset count does not match frame");
  if (kernel.c_out < 1 || kernel.c_in < 1)
    throw std::invalid_argument("kernel channel counts must be >= 1");
}

}  // namespace

Kernel make_kernel(int d, int s, int c_out, int c_in) {
  if (c_out < 1 || c_in < 1)
    throw std::invalid_argument("kernel channel counts must be >= 1");
  Kernel kernel;
  kernel.dim = d;
  kernel.radius = s;
  kernel.c_out = c_out;
  kernel.c_in = c_in;
  kernel.weights.assign(
      static_cast<std::size_t>(c_out) * c_in * expected_offsets(d, s), 0.0);
  return kernel;
}

Kernel delta_kernel(int d, int s, int channels) {
  Kernel kernel = make_kernel(d, s, channels, channels);
  const OffsetTable table = neighbor_offsets(d, s);
  for (int c = 0; c < channels; ++c) kernel.at(c, c, table.zero_index) = 1.0;
  return kernel;
}

Kernel gaussian_kernel(int d, int s, double sigma) {
  if (!(sigma > 0.0))
    throw std::invalid_argument("gaussian kernel sigma must be > 0");
  const OffsetTable table = neighbor_offsets(d, s);
  Kernel kernel = make_kernel(d, s, 1, 1);
  const double step2 = static_cast<double>(d) * d + d;  // |u_0|^2
  double total = 0.0;
  for (int n = 0; n < table.count(); ++n) {
    double norm2 = 0.0;
    for (std::int32_t c : table.offset(n))
      norm2 += static_cast<double>(c) * c;
    const double w = std::exp(-norm2 / (2.0 * sigma * sigma * step2));
    kernel.weights[n] = w;
    total += w;
  }
  for (auto& w : kernel.weights) w /= total;
  return kernel;
}

Kernel transpose_kernel(const Kernel& kernel, const OffsetTable& table) {
  if (kernel.offset_count() != table.count())
    throw std::invalid_argument("kernel offset count does not match table");
  Kernel out = make_kernel(kernel.dim, kernel.radius, kernel.c_in, kernel.c_out);
  for (int co = 0; co < kernel.c_out; ++co)
    for (int ci = 0; ci < kernel.c_in; ++ci)
      for (int n = 0; n < table.count(); ++n)
        out.at(ci, co, n) = kernel.at(co, ci, table.negation[n]);
  return out;
}

PermutohedralFrame build_frame(const FeatureSet& features_in,
                               const FeatureSet& features_out, int radius) {
  if (features_in.count == 0 || features_out.count == 0)
    throw std::invalid_argument("feature sets must be non-empty");
  if (features_in.dim != features_out.dim)
    throw std::invalid_argument("input/output feature dimensions differ");
  const int d = features_in.dim;

  PermutohedralFrame frame;
  frame.dim = d;
  frame.radius = radius;
  frame.input_count = features_in.count;
  frame.output_count = features_out.count;
  frame.offset_table = neighbor_offsets(d, radius);

  LatticeMap map(d, features_in.count + features_out.count);
  std::vector<double> elevated(d + 1);
  SimplexLocation loc;

  auto enter = [&](const FeatureSet& set, std::vector<SplatEntry>& entries) {
    entries.reserve(set.count * (d + 1));
    for (std::size_t i = 0; i < set.count; ++i) {
      elevate(set.feature(i), elevated);
      locate(elevated, loc);
      for (int k = 0; k <= d; ++k) {
        const std::int32_t node = map.insert(loc.vertex(k));
        entries.push_back({static_cast<std::int32_t>(i), node,
                           loc.barycentric[k]});
      }
    }
  };

  enter(features_in, frame.splat_entries);
  if (&features_out == &features_in) {
    frame.slice_entries = frame.splat_entries;
  } else {
    enter(features_out, frame.slice_entries);
  }

  frame.node_count = map.size();
  const int n_off = frame.offset_table.count();
  frame.neighbor_table.assign(
      static_cast<std::size_t>(frame.node_count) * n_off, PermutohedralFrame::kNoNode);
  std::vector<std::int32_t> target(d);
  for (std::int32_t j = 0; j < frame.node_count; ++j) {
    const auto key = map.key(j);
    for (int n = 0; n < n_off; ++n) {
      const auto offset = frame.offset_table.offset(n);
      for (int t = 0; t < d; ++t) target[t] = key[t] + offset[t];
      frame.neighbor_table[static_cast<std::size_t>(j) * n_off + n] =
          map.lookup(target);
    }
  }

  frame.node_keys.assign(map.key(0).data(),
                         map.key(0).data() + static_cast<std::size_t>(frame.node_count) * d);
  return frame;
}

SignalMatrix splat(const PermutohedralFrame& frame, const SignalMatrix& values) {
  if (values.rows != frame.input_count)
    throw std::invalid_argument("splat: value rows do not match input count");
  SignalMatrix out(frame.node_count, values.cols);
  for (const SplatEntry& e : frame.splat_entries) {
    const double* src = values.data.data() + e.sample * values.cols;
    double* dst = out.data.data() + e.node * values.cols;
    for (std::size_t c = 0; c < values.cols; ++c) dst[c] += e.weight * src[c];
  }
  return out;
}

SignalMatrix slice(const PermutohedralFrame& frame,
                   const SignalMatrix& lattice_values) {
  if (lattice_values.rows != static_cast<std::size_t>(frame.node_count))
    throw std::invalid_argument("slice: lattice rows do not match node count");
  SignalMatrix out(frame.output_count, lattice_values.cols);
  for (const SplatEntry& e : frame.slice_entries) {
    const double* src = lattice_values.data.data() + e.node * lattice_values.cols;
    double* dst = out.data.data() + e.sample * lattice_values.cols;
    for (std::size_t c = 0; c < lattice_values.cols; ++c)
      dst[c] += e.weight * src[c];
  }
  return out;
}

SignalMatrix splat_adjoint(const PermutohedralFrame& frame,
                           const SignalMatrix& lattice_values) {
  if (lattice_values.rows != static_cast<std::size_t>(frame.node_count))
    throw std::invalid_argument("splat_adjoint: lattice rows do not match node count");
  SignalMatrix out(frame.input_count, lattice_values.cols);
  for (const SplatEntry& e : frame.splat_entries) {
    const double* src = lattice_values.data.data() + e.node * lattice_values.cols;
    double* dst = out.data.data() + e.sample * lattice_values.cols;
    for (std::size_t c = 0; c < lattice_values.cols; ++c)
      dst[c] += e.weight * src[c];
  }
  return out;
}

SignalMatrix slice_adjoint(const PermutohedralFrame& frame,
                           const SignalMatrix& values) {
  if (values.rows != frame.output_count)
    throw std::invalid_argument("slice_adjoint: value rows do not match output count");
  SignalMatrix out(frame.node_count, values.cols);
  for (const SplatEntry& e : frame.slice_entries) {
    const double* src = values.data.data() + e.sample * values.cols;
    double* dst = out.data.data() + e.node * values.cols;
    for (std::size_t c = 0; c < values.cols; ++c) dst[c] += e.weight * src[c];
  }
  return out;
}

SignalMatrix convolve(const PermutohedralFrame& frame,
                      const SignalMatrix& lattice_values, const Kernel& kernel) {
  check_kernel_shape(kernel, frame);
  if (lattice_values.rows != static_cast<std::size_t>(frame.node_count))
    throw std::invalid_argument("convolve: lattice rows do not match node count");
  if (lattice_values.cols != static_cast<std::size_t>(kernel.c_in))
    throw std::invalid_argument("convolve: channel count does not match kernel");

  const int n_off = frame.offset_table.count();
  const int c_in = kernel.c_in;
  const int c_out = kernel.c_out;
  SignalMatrix out(frame.node_count, c_out);

  for (std::int32_t j = 0; j < frame.node_count; ++j) {
    const std::int32_t* nbr =
        frame.neighbor_table.data() + static_cast<std::size_t>(j) * n_off;
    double* dst = out.data.data() + static_cast<std::size_t>(j) * c_out;
    for (int n = 0; n < n_off; ++n) {
      const std::int32_t source = nbr[n];
      if (source < 0) continue;
      const double* src =
          lattice_values.data.data() + static_cast<std::size_t>(source) * c_in;
      const double* w = kernel.weights.data() + n;
      for (int co = 0; co < c_out; ++co)
        for (int ci = 0; ci < c_in; ++ci)
          dst[co] += w[static_cast<std::size_t>(co * c_in + ci) * n_off] * src[ci];
    }
  }
  return out;
}

SignalMatrix dense_oracle(const PermutohedralFrame& frame, const Kernel& kernel) {
  check_kernel_shape(kernel, frame);
  const std::size_t m = frame.node_count;
  const int c_in = kernel.c_in;
  const int c_out = kernel.c_out;
  const int n_off = frame.offset_table.count();

  // Splat matrix, M x N_in (channel independent).
  SignalMatrix splat_m(m, frame.input_count);
  for (const SplatEntry& e : frame.splat_entries)
    splat_m(e.node, e.sample) += e.weight;

  // Convolution applied to the splat matrix, (M * c_out) x (N_in * c_in).
  SignalMatrix conv_splat(m * c_out, frame.input_count * c_in);
  for (std::size_t j = 0; j < m; ++j) {
    for (int n = 0; n < n_off; ++n) {
      const std::int32_t source = frame.neighbor(static_cast<std::int32_t>(j), n);
      if (source < 0) continue;
      for (int co = 0; co < c_out; ++co)
        for (int ci = 0; ci < c_in; ++ci) {
          const double w = kernel.at(co, ci, n);
          if (w == 0.0) continue;
          for (std::size_t i = 0; i < frame.input_count; ++i)
            conv_splat(j * c_out + co, i * c_in + ci) += w * splat_m(source, i);
        }
    }
  }

  // Slice on the left.
  SignalMatrix oracle(frame.output_count * c_out, frame.input_count * c_in);
  for (const SplatEntry& e : frame.slice_entries)
    for (int co = 0; co < c_out; ++co)
      for (std::size_t col = 0; col < oracle.cols; ++col)
        oracle(e.sample * c_out + co, col) +=
            e.weight * conv_splat(static_cast<std::size_t>(e.node) * c_out + co, col);
  return oracle;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char bytes[4];
  for (int i = 0; i < 4; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 4);
}

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4))
    throw io_error("kernel file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in) {
  unsigned char bytes[8];
  if (!in.read(reinterpret_cast<char*>(bytes), 8))
    throw io_error("kernel file truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(v);
}

constexpr char kKernelMagic[4] = {'P', 'C', 'N', 'V'};
constexpr std::uint32_t kKernelVersion = 1;

}  // namespace

void save_kernel(const std::filesystem::path& path, const Kernel& kernel) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot open kernel file for writing: " + path.string());
  out.write(kKernelMagic, 4);
  put_u32(out, kKernelVersion);
  put_u32(out, static_cast<std::uint32_t>(kernel.dim));
  put_u32(out, static_cast<std::uint32_t>(kernel.radius));
  put_u32(out, static_cast<std::uint32_t>(kernel.c_out));
  put_u32(out, static_cast<std::uint32_t>(kernel.c_in));
  for (double w : kernel.weights) put_f64(out, w);
  if (!out) throw io_error("failed writing kernel file: " + path.string());
}

Kernel load_kernel(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open kernel file: " + path.string());
  char magic[4];
  if (!in.read(magic, 4)) throw io_error("kernel file truncated");
  if (std::memcmp(magic, kKernelMagic, 4) != 0)
    throw io_error("not a kernel file (bad magic): " + path.string());
  const std::uint32_t version = get_u32(in);
  if (version != kKernelVersion)
    throw io_error("unsupported kernel file version");
  const auto d = static_cast<int>(get_u32(in));
  const auto s = static_cast<int>(get_u32(in));
  const auto c_out = static_cast<int>(get_u32(in));
  const auto c_in = static_cast<int>(get_u32(in));
  if (d < 1 || s < 0 || c_out < 1 || c_in < 1)
    throw io_error("kernel file has invalid shape fields");

  Kernel kernel = make_kernel(d, s, c_out, c_in);
  for (auto& w : kernel.weights) {
    w = get_f64(in);
    if (!std::isfinite(w)) throw io_error("kernel file has non-finite weight");
  }
  char extra;
  if (in.read(&extra, 1)) throw io_error("kernel file has trailing bytes");
  return kernel;
}

}  // namespace pcnn
