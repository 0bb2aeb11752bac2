#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "pilotwave/grid.hpp"

namespace pilotwave {

// Subset of the particle labels {1,...,N}, stored as a bitmask.
class IndexSet {
 public:
  IndexSet() = default;

  static IndexSet empty() { return IndexSet(); }
  static IndexSet full(int n);
  static IndexSet from_members(std::span<const int> members, int n);  // validates 1..n
  static IndexSet from_bitmask(uint32_t bits) {
    IndexSet s;
    s.bits_ = bits;
    return s;
  }

  bool contains(int i) const { return (bits_ >> (i - 1)) & 1u; }
  int count() const;
  bool is_empty() const { return bits_ == 0; }
  IndexSet complement(int n) const;
  std::vector<int> members() const;  // sorted, 1-based
  uint32_t bitmask() const { return bits_; }

  bool operator==(const IndexSet& o) const { return bits_ == o.bits_; }

 private:
  uint32_t bits_ = 0;
};

// Ordered configuration: N points, particle-major flat layout (size N*d).
struct LabeledConfig {
  std::vector<double> q;
  double time = 0.0;
};

// Bijection sigma on slots {0,...,n-1} (particle labels are slot+1).
class Permutation {
 public:
  explicit Permutation(std::vector<int> image);  // image[i] = sigma(i), validated
  static Permutation identity(int n);
  static std::vector<Permutation> enumerate(int n);  // all of S_n, n <= 5

  int size() const { return static_cast<int>(image_.size()); }
  int operator()(int i) const { return image_[i]; }
  Permutation inverse() const;
  // (a.after(b))(i) = a(b(i))
  Permutation after(const Permutation& first) const;

  bool operator==(const Permutation& o) const { return image_ == o.image_; }

 private:
  std::vector<int> image_;
};

// sigma(Q_1,...,Q_N) = (Q_{sigma^-1(1)},...,Q_{sigma^-1(N)}): Q_j lands in
// slot sigma(j).
LabeledConfig apply_permutation(const Permutation& sigma, const LabeledConfig& q, int space_dim);

// Cell remap on the full lattice: out[flat] = in[permute_cell(sigma, lat, flat)]
// realizes (f . sigma)(q) = f(sigma(q)) on grid data.
std::size_t permute_cell(const Permutation& sigma, const Lattice& lat, std::size_t flat,
                         std::span<int> scratch_idx);

// Unordered configuration: N pairwise distinct points stored in canonical
// (lexicographic) order. Canonical order is a storage convention only.
struct UnorderedConfig {
  std::vector<double> pts;  // size N*d, canonical order

  static UnorderedConfig from_labeled(const LabeledConfig& q, int space_dim);
  static UnorderedConfig from_points(std::vector<double> flat, int space_dim);
};

bool lex_less(std::span<const double> a, std::span<const double> b);

// Sorts d-blocks lexicographically in place; throws CoincidenceError on
// exactly coincident points.
void canonicalize_points(std::vector<double>& flat, int space_dim);

}  // namespace pilotwave
