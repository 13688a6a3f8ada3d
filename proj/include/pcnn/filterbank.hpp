#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "pcnn/lattice.hpp"

namespace pcnn {

// Dense signal values: rows are samples (or lattice nodes), columns are
// channels.
struct SignalMatrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> data;  // row-major

  SignalMatrix() = default;
  SignalMatrix(std::size_t r, std::size_t c)
      : rows(r), cols(c), data(r * c, 0.0) {}

  double& operator()(std::size_t r, std::size_t c) {
    return data[r * cols + c];
  }
  double operator()(std::size_t r, std::size_t c) const {
    return data[r * cols + c];
  }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const {
    return {data.data() + r * cols, cols};
  }
};

// Learnable filter weights over the lattice neighborhood, indexed
// (out channel, in channel, offset) in the canonical offset order.
struct Kernel {
  int dim = 0;
  int radius = 0;
  int c_out = 1;
  int c_in = 1;
  std::vector<double> weights;

  int offset_count() const {
    const int ch = c_out * c_in;
    return ch == 0 ? 0 : static_cast<int>(weights.size()) / ch;
  }
  double& at(int co, int ci, int n) {
    return weights[static_cast<std::size_t>(co * c_in + ci) * offset_count() + n];
  }
  double at(int co, int ci, int n) const {
    return weights[static_cast<std::size_t>(co * c_in + ci) * offset_count() + n];
  }
};

// All-zero kernel of the right shape.
Kernel make_kernel(int d, int s, int c_out, int c_in);

// Weight 1 at the zero offset for matching channels, 0 elsewhere; the
// identity of the lattice convolution.
Kernel delta_kernel(int d, int s, int channels = 1);

// Gaussian weights w_n ~ exp(-|o_n|^2 / (2 sigma^2 |u_0|^2)) normalized to
// sum to one; |u_0|^2 = d^2 + d, so sigma is measured in lattice neighbor
// steps. Single channel. Throws std::invalid_argument for sigma <= 0.
Kernel gaussian_kernel(int d, int s, double sigma);

// The kernel of the adjoint convolution: channels swapped and offsets
// negated, w'[ci,co,n] = w[co,ci,negation[n]].
Kernel transpose_kernel(const Kernel& kernel, const OffsetTable& table);

struct SplatEntry {
  std::int32_t sample;
  std::int32_t node;
  double weight;
};

// Immutable binding of an input and an output feature set to the lattice:
// node table, barycentric splat/slice entries and the per-node
// neighborhood adjacency. Queries are safe from concurrent readers.
struct PermutohedralFrame {
  static constexpr std::int32_t kNoNode = -1;

  int dim = 0;
  int radius = 0;
  std::int32_t node_count = 0;
  std::size_t input_count = 0;
  std::size_t output_count = 0;
  OffsetTable offset_table;
  std::vector<SplatEntry> splat_entries;   // input_count * (d+1)
  std::vector<SplatEntry> slice_entries;   // output_count * (d+1)
  std::vector<std::int32_t> neighbor_table;  // node_count * offset count
  std::vector<std::int32_t> node_keys;       // node_count * dim

  std::int32_t neighbor(std::int32_t node, int n) const {
    return neighbor_table[static_cast<std::size_t>(node) * offset_table.count() + n];
  }
  std::span<const std::int32_t> node_key(std::int32_t node) const {
    return {node_keys.data() + static_cast<std::size_t>(node) * dim,
            static_cast<std::size_t>(dim)};
  }
};

// Builds the frame: the node set is the union of simplex vertices touched
// by any input or output feature (output-only nodes carry zero signal but
// keep the convolution defined wherever slicing reads). Deterministic
// given input order. Passing the same object for both sets shares the
// located simplices.
PermutohedralFrame build_frame(const FeatureSet& features_in,
                               const FeatureSet& features_out, int radius);

// l_j = sum over splat entries (i,j,b) of b * v_i. N_in x C -> M x C.
SignalMatrix splat(const PermutohedralFrame& frame, const SignalMatrix& values);

// l'_j = sum_n sum_ci w[co,ci,n] * l[neighbor(j,n), ci]; absent neighbors
// contribute zero. M x C_in -> M x C_out.
SignalMatrix convolve(const PermutohedralFrame& frame,
                      const SignalMatrix& lattice_values, const Kernel& kernel);

// v'_k = sum over slice entries (k,j,b) of b * l_j. M x C -> N_out x C.
SignalMatrix slice(const PermutohedralFrame& frame,
                   const SignalMatrix& lattice_values);

// Transpose of splat (M x C -> N_in x C) and of slice (N_out x C -> M x C);
// the adjoint building blocks of backpropagation.
SignalMatrix splat_adjoint(const PermutohedralFrame& frame,
                           const SignalMatrix& lattice_values);
SignalMatrix slice_adjoint(const PermutohedralFrame& frame,
                           const SignalMatrix& values);

// Materializes slice * convolve * splat as one dense matrix, rows indexed
// (output sample k, out channel co) as k*c_out+co and columns
// (input sample i, in channel ci) as i*c_in+ci. Test oracle for small
// instances only: cost is O(M^2 * channels^2).
SignalMatrix dense_oracle(const PermutohedralFrame& frame, const Kernel& kernel);

// Kernel file: magic "PCNV", little-endian u32 version (=1), u32 d, s,
// c_out, c_in, then the weights as little-endian 64-bit floats in
// canonical (co, ci, n) order. Throws io_error on malformed files.
void save_kernel(const std::filesystem::path& path, const Kernel& kernel);
Kernel load_kernel(const std::filesystem::path& path);

}  // namespace pcnn
