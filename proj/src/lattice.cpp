#include "pcnn/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <map>
#include <numeric>
#include <stdexcept>

namespace pcnn {

namespace {

void check_dim(int d) {
  if (d < 1) throw std::invalid_argument("lattice dimension must be >= 1");
}

}  // namespace

void elevate(std::span<const double> feature, std::span<double> elevated) {
  const int d = static_cast<int>(feature.size());
  check_dim(d);
  if (elevated.size() != feature.size() + 1)
    throw std::invalid_argument("elevated output must have d+1 entries");
  for (double c : feature) {
    if (!std::isfinite(c))
      throw std::invalid_argument("feature coordinate is not finite");
  }

  // Scaled features accumulate back to front; the column vectors of this
  // embedding are mutually orthogonal with norm (d+1)*sqrt(2/3), so the
  // result sums to zero and preserves distances up to that factor.
  const double scale = (d + 1) * std::sqrt(2.0 / 3.0);
  double sum = 0.0;
  for (int i = d; i > 0; --i) {
    const double alpha = scale / std::sqrt(static_cast<double>(i) * (i + 1));
    const double scaled = alpha * feature[i - 1];
    elevated[i] = sum - i * scaled;
    sum += scaled;
  }
  elevated[0] = sum;
}

std::vector<double> elevate(std::span<const double> feature) {
  std::vector<double> out(feature.size() + 1);
  elevate(feature, out);
  return out;
}

void locate(std::span<const double> elevated, SimplexLocation& out) {
  const int d = static_cast<int>(elevated.size()) - 1;
  check_dim(d);
  for (double c : elevated) {
    if (!std::isfinite(c))
      throw std::invalid_argument("elevated coordinate is not finite");
    if (std::abs(c) > 0x1.0p30)
      throw std::invalid_argument("elevated coordinate exceeds key range");
  }

  out.dim = d;
  out.vertices.assign(static_cast<std::size_t>(d + 1) * d, 0);
  out.barycentric.assign(d + 2, 0.0);
  out.rank.assign(d + 1, 0);

  // Round each coordinate to the nearest multiple of d+1 (ties go down).
  thread_local std::vector<std::int32_t> rounded;
  rounded.assign(d + 1, 0);
  const double inv = 1.0 / (d + 1);
  std::int64_t excess = 0;
  for (int i = 0; i <= d; ++i) {
    const double v = elevated[i] * inv;
    const double up = std::ceil(v) * (d + 1);
    const double down = std::floor(v) * (d + 1);
    rounded[i] = static_cast<std::int32_t>(
        up - elevated[i] < elevated[i] - down ? up : down);
    excess += rounded[i];
  }
  excess /= (d + 1);

  // Rank the rounding residuals in descending order, ties to the lower
  // coordinate index.
  for (int i = 0; i <= d; ++i) {
    const double ri = elevated[i] - rounded[i];
    int r = 0;
    for (int j = 0; j <= d; ++j) {
      const double rj = elevated[j] - rounded[j];
      if (ri < rj || (ri == rj && j < i)) ++r;
    }
    out.rank[i] = r;
  }

  // If the rounded point left the zero-sum plane, walk the worst-rounded
  // coordinates one multiple back toward it. Afterwards `rank` is again
  // the descending residual order for the corrected point.
  if (excess > 0) {
    for (int i = 0; i <= d; ++i) {
      if (out.rank[i] >= d + 1 - excess) {
        rounded[i] -= d + 1;
        out.rank[i] += static_cast<std::int32_t>(excess) - (d + 1);
      } else {
        out.rank[i] += static_cast<std::int32_t>(excess);
      }
    }
  } else if (excess < 0) {
    for (int i = 0; i <= d; ++i) {
      if (out.rank[i] < -excess) {
        rounded[i] += d + 1;
        out.rank[i] += (d + 1) + static_cast<std::int32_t>(excess);
      } else {
        out.rank[i] += static_cast<std::int32_t>(excess);
      }
    }
  }

  // Barycentric weights from the sorted residual differences; the fold-back
  // term closes the telescoping sum so the weights add up to one.
  for (int i = 0; i <= d; ++i) {
    const double v = (elevated[i] - rounded[i]) * inv;
    out.barycentric[d - out.rank[i]] += v;
    out.barycentric[d + 1 - out.rank[i]] -= v;
  }
  out.barycentric[0] += 1.0 + out.barycentric[d + 1];
  out.barycentric.resize(d + 1);

  // The remainder-k vertex moves k steps up from the rounded point in rank
  // order; coordinates with rank >= d+1-k wrap one lattice period down.
  for (int k = 0; k <= d; ++k) {
    std::int32_t* vertex = out.vertices.data() + static_cast<std::size_t>(k) * d;
    for (int i = 0; i < d; ++i) {
      vertex[i] = rounded[i] + k;
      if (out.rank[i] > d - k) vertex[i] -= d + 1;
    }
  }
}

SimplexLocation locate(std::span<const double> elevated) {
  SimplexLocation out;
  locate(elevated, out);
  return out;
}

void expand_key(std::span<const std::int32_t> key, std::span<std::int32_t> full) {
  std::int64_t sum = 0;
  for (std::size_t i = 0; i < key.size(); ++i) {
    full[i] = key[i];
    sum += key[i];
  }
  full[key.size()] = static_cast<std::int32_t>(-sum);
}

OffsetTable neighbor_offsets(int d, int s) {
  check_dim(d);
  if (s < 0) throw std::invalid_argument("neighborhood size must be >= 0");

  OffsetTable table;
  table.dim = d;
  table.radius = s;

  // Enumerate coefficient vectors c in {0..s}^{d+1} lexicographically and
  // keep the canonical representatives (min coefficient zero). The offset
  // for c has coordinate j equal to c_j*(d+1) - sum(c).
  std::vector<int> c(d + 1, 0);
  std::vector<std::vector<int>> kept;
  for (;;) {
    if (*std::min_element(c.begin(), c.end()) == 0) kept.push_back(c);
    int pos = d;
    while (pos >= 0 && c[pos] == s) c[pos--] = 0;
    if (pos < 0) break;
    ++c[pos];
  }

  std::map<std::vector<int>, int> index_of;
  for (std::size_t n = 0; n < kept.size(); ++n) {
    const auto& cv = kept[n];
    const int total = std::accumulate(cv.begin(), cv.end(), 0);
    for (int j = 0; j <= d; ++j)
      table.offsets.push_back(static_cast<std::int32_t>(cv[j] * (d + 1) - total));
    index_of.emplace(cv, static_cast<int>(n));
    if (total == 0) table.zero_index = static_cast<int>(n);
  }

  // Negation in coefficient space: the canonical representative of -c is
  // max(c) - c, which lands back inside the enumerated box.
  table.negation.resize(kept.size());
  for (std::size_t n = 0; n < kept.size(); ++n) {
    std::vector<int> neg(d + 1);
    const int top = *std::max_element(kept[n].begin(), kept[n].end());
    for (int j = 0; j <= d; ++j) neg[j] = top - kept[n][j];
    table.negation[n] = static_cast<std::int32_t>(index_of.at(neg));
  }
  return table;
}

LatticeMap::LatticeMap(int dim, std::size_t expected) : dim_(dim) {
  check_dim(dim);
  std::size_t capacity = 16;
  while (capacity < 2 * expected + 1) capacity *= 2;
  table_.assign(capacity, kAbsent);
  mask_ = capacity - 1;
  keys_.reserve(expected * dim);
}

std::uint64_t LatticeMap::hash(std::span<const std::int32_t> key) const {
  std::uint64_t h = 0x9E3779B97F4A7C15ull;
  for (std::int32_t v : key) {
    h ^= static_cast<std::uint64_t>(static_cast<std::uint32_t>(v));
    h *= 0xBF58476D1CE4E5B9ull;
    h ^= h >> 29;
  }
  return h;
}

bool LatticeMap::equal(std::int32_t index,
                       std::span<const std::int32_t> key) const {
  const std::int32_t* stored = keys_.data() + static_cast<std::size_t>(index) * dim_;
  for (int i = 0; i < dim_; ++i)
    if (stored[i] != key[i]) return false;
  return true;
}

std::int32_t LatticeMap::insert(std::span<const std::int32_t> key) {
  if (static_cast<int>(key.size()) != dim_)
    throw std::invalid_argument("key dimension mismatch");
  if (2 * (count_ + 1) > table_.size()) grow();

  std::uint64_t slot = hash(key) & mask_;
  for (;;) {
    const std::int32_t occupant = table_[slot];
    if (occupant == kAbsent) {
      const auto index = static_cast<std::int32_t>(count_++);
      keys_.insert(keys_.end(), key.begin(), key.end());
      table_[slot] = index;
      return index;
    }
    if (equal(occupant, key)) return occupant;
    slot = (slot + 1) & mask_;
  }
}

std::int32_t LatticeMap::lookup(std::span<const std::int32_t> key) const {
  if (static_cast<int>(key.size()) != dim_)
    throw std::invalid_argument("key dimension mismatch");
  std::uint64_t slot = hash(key) & mask_;
  for (;;) {
    const std::int32_t occupant = table_[slot];
    if (occupant == kAbsent) return kAbsent;
    if (equal(occupant, key)) return occupant;
    slot = (slot + 1) & mask_;
  }
}

void LatticeMap::grow() {
  std::vector<std::int32_t> fresh(table_.size() * 2, kAbsent);
  const std::uint64_t fresh_mask = fresh.size() - 1;
  for (std::size_t index = 0; index < count_; ++index) {
    const std::span<const std::int32_t> k{
        keys_.data() + index * dim_, static_cast<std::size_t>(dim_)};
    std::uint64_t slot = hash(k) & fresh_mask;
    while (fresh[slot] != kAbsent) slot = (slot + 1) & fresh_mask;
    fresh[slot] = static_cast<std::int32_t>(index);
  }
  table_ = std::move(fresh);
  mask_ = fresh_mask;
}

}  // namespace pcnn
