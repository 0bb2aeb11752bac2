#pragma once

#include <functional>
#include <span>
#include <vector>

#include "pilotwave/grid.hpp"

namespace pilotwave {

struct KsResult {
  double d_stat = 0.0;
  double p_value = 1.0;
};

// [ks_two_sample] D = sup |F_a - F_b|, p from the asymptotic Kolmogorov
// series at effective size n_a n_b / (n_a + n_b). Sizes must be >= 25.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

// Tail Q(lambda) = 2 sum_{j>=1} (-1)^{j-1} exp(-2 j^2 lambda^2) with the
// small-lambda theta-function branch.
double ks_tail(double lambda);

struct ChiSquareResult {
  double chi2 = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

// Upper tail of the chi-square distribution.
double chi2_tail(double chi2, int dof);

// [chi_square_binned] Pearson statistic of observed counts against expected
// bin masses (normalized internally). Adjacent bins are merged until every
// expected count is >= 5; fewer than 2 surviving bins is a validation error.
ChiSquareResult chi_square_binned(std::span<const std::size_t> counts,
                                  std::span<const double> expected_mass);

// Two-sample contingency variant used when the reference is itself empirical
// (e.g. a projection-oracle law). Same merging rule on pooled counts.
ChiSquareResult chi_square_two_sample(std::span<const std::size_t> a,
                                      std::span<const std::size_t> b);

// Adaptive equal-mass partition of a lattice into axis-aligned boxes of
// whole cells (recursive heaviest-leaf median splits). Bin masses are exact
// cell sums of the reference density, so one-sample chi-square tests have an
// exactly known null. An optional cell mask (by multi-index) restricts the
// mass to a subdomain, e.g. the sorted sector or the inside-R region.
class EqualMassBinner {
 public:
  using CellMask = std::function<bool(std::span<const int>)>;

  static EqualMassBinner build(const Field<double>& density, int max_bins,
                               const CellMask& mask = {});

  int num_bins() const { return static_cast<int>(masses_.size()); }
  const std::vector<double>& masses() const { return masses_; }  // sums to ~1

  // Bin of the cell containing `point` (box coordinates). Never fails for
  // points inside the box.
  int bin_of_point(std::span<const double> point) const;
  int bin_of_cell(std::span<const int> idx) const;

 private:
  struct Node {
    // leaf: bin >= 0; internal: split axis/plane, children
    int bin = -1;
    int axis = -1;
    int plane = 0;  // cells with idx[axis] < plane go left
    int left = -1, right = -1;
  };

  Lattice lat_;
  std::vector<Node> nodes_;
  std::vector<double> masses_;
};

// Bin a set of points; returns counts per bin.
std::vector<std::size_t> bin_counts(const EqualMassBinner& binner,
                                    std::span<const std::vector<double>> points);

}  // namespace pilotwave
