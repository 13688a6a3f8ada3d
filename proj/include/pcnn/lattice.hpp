#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace pcnn {

// Pure geometry of the permutohedral lattice A_d*: the lattice is the
// projection of Z^{d+1} onto the hyperplane orthogonal to the all-ones
// vector, scaled so that lattice points have integer coordinates. A point
// whose d+1 coordinates are all congruent to k modulo d+1 is a
// "remainder-k" point; every simplex of the tessellation has exactly one
// vertex of each remainder.
//
// Lattice points are addressed by their first d integer coordinates; the
// last coordinate is always the negated sum of the others.

// A set of feature vectors, row-major, all of dimension `dim`. Coordinates
// are expected to be pre-scaled (units of lattice standard deviations).
struct FeatureSet {
  int dim = 0;
  std::size_t count = 0;
  std::vector<double> coords;  // count * dim

  FeatureSet() = default;
  FeatureSet(int d, std::size_t n) : dim(d), count(n), coords(n * d, 0.0) {}

  std::span<const double> feature(std::size_t i) const {
    return {coords.data() + i * dim, static_cast<std::size_t>(dim)};
  }
  std::span<double> feature(std::size_t i) {
    return {coords.data() + i * dim, static_cast<std::size_t>(dim)};
  }
};

// Embeds a d-dimensional feature into the zero-sum hyperplane of R^{d+1}.
// The embedding is a scaled isometry: distances are multiplied by
// (d+1)*sqrt(2/3). Output coordinates sum to zero by construction.
// Throws std::invalid_argument for d = 0 or non-finite coordinates.
void elevate(std::span<const double> feature, std::span<double> elevated);
std::vector<double> elevate(std::span<const double> feature);

// The enclosing simplex of an elevated point: one vertex per remainder
// class, each stored as the first d integer coordinates of the lattice
// point, plus barycentric weights and the rank permutation of the
// rounding residual.
struct SimplexLocation {
  int dim = 0;
  std::vector<std::int32_t> vertices;  // (d+1) vertices * d coordinates
  std::vector<double> barycentric;     // d+1, nonnegative, sums to 1
  std::vector<std::int32_t> rank;      // permutation of 0..d

  std::span<const std::int32_t> vertex(int k) const {
    return {vertices.data() + static_cast<std::size_t>(k) * dim,
            static_cast<std::size_t>(dim)};
  }
};

// Finds the enclosing simplex of an elevated point, the barycentric
// weights of the point inside it, and the residual rank permutation.
// Vertex k is the remainder-k vertex. The point is reconstructed by
// sum_k barycentric[k] * vertex_k.
void locate(std::span<const double> elevated, SimplexLocation& out);
SimplexLocation locate(std::span<const double> elevated);

// Expands a d-entry key to all d+1 coordinates (last = negated sum).
void expand_key(std::span<const std::int32_t> key, std::span<std::int32_t> full);

// The lattice convolution neighborhood for dimension d and size s: the set
// { sum_i c_i * u_i : c in {0..s}^{d+1}, min_i c_i = 0 } where
// u_i = (d+1)*e_i - 1. Offsets are ordered lexicographically by the
// generating coefficient vector c, so index 0 is always the zero offset.
struct OffsetTable {
  int dim = 0;
  int radius = 0;
  std::vector<std::int32_t> offsets;   // count * (d+1), full coordinates
  std::vector<std::int32_t> negation;  // index of the negated offset
  int zero_index = 0;

  int count() const {
    return dim == 0 ? 0 : static_cast<int>(offsets.size()) / (dim + 1);
  }
  std::span<const std::int32_t> offset(int n) const {
    return {offsets.data() + static_cast<std::size_t>(n) * (dim + 1),
            static_cast<std::size_t>(dim + 1)};
  }
};

// Enumerates the neighborhood; the table has (s+1)^{d+1} - s^{d+1} entries.
OffsetTable neighbor_offsets(int d, int s);

// Exact-key hash table assigning dense indices 0..M-1 to lattice points.
// Open addressing with linear probing; equality is always checked on the
// full key, the hash only steers probing. Single-threaded while building;
// safe for concurrent lookups afterwards.
class LatticeMap {
 public:
  static constexpr std::int32_t kAbsent = -1;

  explicit LatticeMap(int dim, std::size_t expected = 0);

  // Returns the existing index if the key is present, otherwise assigns
  // the next free index.
  std::int32_t insert(std::span<const std::int32_t> key);

  // Returns kAbsent for keys never inserted.
  std::int32_t lookup(std::span<const std::int32_t> key) const;

  std::int32_t size() const { return static_cast<std::int32_t>(count_); }
  int dim() const { return dim_; }

  // The key stored for a node index, first d coordinates.
  std::span<const std::int32_t> key(std::int32_t index) const {
    return {keys_.data() + static_cast<std::size_t>(index) * dim_,
            static_cast<std::size_t>(dim_)};
  }

 private:
  std::uint64_t hash(std::span<const std::int32_t> key) const;
  bool equal(std::int32_t index, std::span<const std::int32_t> key) const;
  void grow();

  int dim_;
  std::size_t count_ = 0;
  std::vector<std::int32_t> keys_;   // count_ * dim_
  std::vector<std::int32_t> table_;  // capacity slots, kAbsent = empty
  std::uint64_t mask_ = 0;
};

}  // namespace pcnn
