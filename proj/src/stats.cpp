#include "pilotwave/stats.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>

namespace pilotwave {

double ks_tail(double lambda) {
  if (lambda < 1e-12) return 1.0;
  double p;
  if (lambda < 1.18) {
    // theta-function branch, accurate for small lambda
    const double t = std::exp(-std::numbers::pi * std::numbers::pi / (8.0 * lambda * lambda));
    p = 1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda *
                  (t + std::pow(t, 9.0) + std::pow(t, 25.0) + std::pow(t, 49.0));
  } else {
    const double e = std::exp(-2.0 * lambda * lambda);
    p = 2.0 * (e - std::pow(e, 4.0) + std::pow(e, 9.0) - std::pow(e, 16.0));
  }
  return std::clamp(p, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
  if (a.size() < 25 || b.size() < 25)
    throw ValidationError("ks_two_sample requires at least 25 samples per side");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0, fa = 0, fb = 0;
  while (i < a.size() && j < b.size()) {
    const double xa = a[i], xb = b[j];
    if (xa <= xb) fa = ++i / na;
    if (xb <= xa) fb = ++j / nb;
    d = std::max(d, std::abs(fa - fb));
  }
  d = std::max(d, 1.0 - (j / nb));  // remaining tail of whichever side ended first
  d = std::max(d, 1.0 - (i / na));
  const double ne = na * nb / (na + nb);
  const double sq = std::sqrt(ne);
  const double lambda = (sq + 0.12 + 0.11 / sq) * d;
  return {d, ks_tail(lambda)};
}

double chi2_tail(double chi2, int dof) {
  if (dof < 1) throw ValidationError("chi2_tail requires dof >= 1");
  if (chi2 <= 0) return 1.0;
  return boost::math::gamma_q(dof / 2.0, chi2 / 2.0);
}

namespace {

// Merge adjacent categories until every expected count is >= 5.
void merge_small_bins(std::vector<double>& expected, std::vector<double>& observed) {
  auto merge_into = [&](std::size_t dst, std::size_t src) {
    expected[dst] += expected[src];
    observed[dst] += observed[src];
    expected.erase(expected.begin() + src);
    observed.erase(observed.begin() + src);
  };
  bool changed = true;
  while (changed && expected.size() > 1) {
    changed = false;
    for (std::size_t i = 0; i < expected.size(); ++i) {
      if (expected[i] >= 5.0) continue;
      if (i + 1 < expected.size())
        merge_into(i, i + 1);
      else
        merge_into(i - 1, i);
      changed = true;
      break;
    }
  }
}

}  // namespace

ChiSquareResult chi_square_binned(std::span<const std::size_t> counts,
                                  std::span<const double> expected_mass) {
  if (counts.size() != expected_mass.size())
    throw ValidationError("counts and expected masses must align");
  if (counts.size() < 2) throw ValidationError("chi-square needs at least two bins");
  double total_mass = 0, n = 0;
  for (double m : expected_mass) {
    if (m < 0) throw ValidationError("expected masses must be nonnegative");
    total_mass += m;
  }
  for (std::size_t c : counts) n += static_cast<double>(c);
  if (!(total_mass > 0)) throw ValidationError("expected masses sum to zero");
  if (n == 0) throw ValidationError("no samples to test");

  std::vector<double> expected(expected_mass.size());
  std::vector<double> observed(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    expected[i] = expected_mass[i] / total_mass * n;
    observed[i] = static_cast<double>(counts[i]);
  }
  merge_small_bins(expected, observed);
  if (expected.size() < 2)
    throw ValidationError("expected mass concentrates in a single bin");

  double chi2 = 0;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const double d = observed[i] - expected[i];
    chi2 += d * d / expected[i];
  }
  const int dof = static_cast<int>(expected.size()) - 1;
  return {chi2, dof, chi2_tail(chi2, dof)};
}

ChiSquareResult chi_square_two_sample(std::span<const std::size_t> a,
                                      std::span<const std::size_t> b) {
  if (a.size() != b.size()) throw ValidationError("histograms must align");
  if (a.size() < 2) throw ValidationError("chi-square needs at least two bins");
  double na = 0, nb = 0;
  for (std::size_t v : a) na += static_cast<double>(v);
  for (std::size_t v : b) nb += static_cast<double>(v);
  if (na == 0 || nb == 0) throw ValidationError("empty sample in two-sample chi-square");

  // merge adjacent bins until the pooled count is >= 10 per bin
  std::vector<double> xa(a.begin(), a.end()), xb(b.begin(), b.end());
  {
    bool changed = true;
    while (changed && xa.size() > 1) {
      changed = false;
      for (std::size_t i = 0; i < xa.size(); ++i) {
        if (xa[i] + xb[i] >= 10.0) continue;
        const std::size_t j = (i + 1 < xa.size()) ? i + 1 : i - 1;
        const std::size_t keep = std::min(i, j), drop = std::max(i, j);
        xa[keep] += xa[drop];
        xb[keep] += xb[drop];
        xa.erase(xa.begin() + drop);
        xb.erase(xb.begin() + drop);
        changed = true;
        break;
      }
    }
  }
  if (xa.size() < 2) throw ValidationError("two-sample chi-square collapsed to one bin");

  const double ka = std::sqrt(nb / na), kb = std::sqrt(na / nb);
  double chi2 = 0;
  for (std::size_t i = 0; i < xa.size(); ++i) {
    const double pooledc = xa[i] + xb[i];
    if (pooledc <= 0) continue;
    const double d = ka * xa[i] - kb * xb[i];
    chi2 += d * d / pooledc;
  }
  const int dof = static_cast<int>(xa.size()) - 1;
  return {chi2, dof, chi2_tail(chi2, dof)};
}

// --- equal-mass binning -----------------------------------------------------

namespace {

struct RegionBox {
  std::vector<int> lo, hi;  // half-open cell index ranges
  double mass = 0;
  int node = -1;
};

// iterate all cells of a region
template <typename F>
void for_each_cell(const Lattice& lat, const std::vector<int>& lo, const std::vector<int>& hi,
                   F&& fn) {
  const int axes = lat.num_axes();
  if (axes == 0) {
    fn(std::size_t{0});
    return;
  }
  std::vector<int> idx(lo);
  while (true) {
    fn(lat.encode(idx));
    int a = axes - 1;
    while (a >= 0) {
      if (++idx[a] < hi[a]) break;
      idx[a] = lo[a];
      --a;
    }
    if (a < 0) break;
  }
}

}  // namespace

EqualMassBinner EqualMassBinner::build(const Field<double>& density, int max_bins,
                                       const CellMask& mask) {
  if (max_bins < 1) throw ValidationError("binner needs at least one bin");
  EqualMassBinner binner;
  binner.lat_ = density.lattice();
  const Lattice& lat = binner.lat_;
  const int axes = lat.num_axes();

  // masked per-cell masses
  std::vector<double> mass(lat.num_cells());
  {
    std::vector<int> idx(axes);
    for (std::size_t c = 0; c < lat.num_cells(); ++c) {
      lat.decode(c, idx);
      const bool keep = !mask || mask(idx);
      mass[c] = keep ? std::max(0.0, density[c]) : 0.0;
    }
  }

  if (axes == 0) {
    binner.nodes_.push_back({0, -1, 0, -1, -1});
    binner.masses_.assign(1, 1.0);
    return binner;
  }

  const int m = lat.grid()->points_per_axis();
  RegionBox root;
  root.lo.assign(axes, 0);
  root.hi.assign(axes, m);
  for (double v : mass) root.mass += v;
  if (!(root.mass > 0)) throw ValidationError("binning density has zero mass");

  binner.nodes_.push_back({});  // root
  root.node = 0;

  auto heavier = [](const RegionBox& a, const RegionBox& b) { return a.mass < b.mass; };
  std::priority_queue<RegionBox, std::vector<RegionBox>, decltype(heavier)> leaves(heavier);
  leaves.push(std::move(root));
  int leaf_count = 1;

  std::vector<RegionBox> final_leaves;
  while (leaf_count < max_bins && !leaves.empty()) {
    RegionBox box = leaves.top();
    leaves.pop();

    // choose the widest splittable axis; fall back to any axis with > 1 cell
    int axis = -1, extent = 1;
    for (int a = 0; a < axes; ++a)
      if (box.hi[a] - box.lo[a] > extent) {
        extent = box.hi[a] - box.lo[a];
        axis = a;
      }
    if (axis < 0 || !(box.mass > 0)) {
      final_leaves.push_back(std::move(box));
      continue;
    }

    // cumulative marginal along the chosen axis
    std::vector<double> marginal(box.hi[axis] - box.lo[axis], 0.0);
    {
      std::vector<int> idx(axes);
      for_each_cell(lat, box.lo, box.hi, [&](std::size_t c) {
        lat.decode(c, idx);
        marginal[idx[axis] - box.lo[axis]] += mass[c];
      });
    }
    double half = box.mass / 2.0, acc = 0.0, best_diff = box.mass;
    int plane = box.lo[axis] + 1;
    for (int p = box.lo[axis]; p < box.hi[axis] - 1; ++p) {
      acc += marginal[p - box.lo[axis]];
      const double diff = std::abs(acc - half);
      if (diff < best_diff) {
        best_diff = diff;
        plane = p + 1;
      }
    }

    RegionBox left = box, right = box;
    left.hi[axis] = plane;
    right.lo[axis] = plane;
    left.mass = 0;
    for_each_cell(lat, left.lo, left.hi, [&](std::size_t c) { left.mass += mass[c]; });
    right.mass = box.mass - left.mass;

    const int li = static_cast<int>(binner.nodes_.size());
    binner.nodes_.push_back({});
    const int ri = static_cast<int>(binner.nodes_.size());
    binner.nodes_.push_back({});
    Node& parent = binner.nodes_[box.node];
    parent.axis = axis;
    parent.plane = plane;
    parent.left = li;
    parent.right = ri;
    left.node = li;
    right.node = ri;
    leaves.push(std::move(left));
    leaves.push(std::move(right));
    ++leaf_count;
  }
  while (!leaves.empty()) {
    final_leaves.push_back(leaves.top());
    leaves.pop();
  }

  double total = 0;
  for (const RegionBox& b : final_leaves) total += b.mass;
  binner.masses_.resize(final_leaves.size());
  for (std::size_t i = 0; i < final_leaves.size(); ++i) {
    binner.nodes_[final_leaves[i].node].bin = static_cast<int>(i);
    binner.masses_[i] = final_leaves[i].mass / total;
  }
  return binner;
}

int EqualMassBinner::bin_of_cell(std::span<const int> idx) const {
  int node = 0;
  while (nodes_[node].bin < 0) {
    const Node& n = nodes_[node];
    node = (idx[n.axis] < n.plane) ? n.left : n.right;
  }
  return nodes_[node].bin;
}

int EqualMassBinner::bin_of_point(std::span<const double> point) const {
  const int axes = lat_.num_axes();
  if (axes == 0) return 0;
  const Grid& g = *lat_.grid();
  const int m = g.points_per_axis();
  int idx[16];
  for (int a = 0; a < axes; ++a) {
    // nearest node, matching the sampler's node-centered cell convention
    int i = static_cast<int>(std::lround((point[a] - g.x_min()) / g.dx()));
    if (i >= m) i -= m;
    idx[a] = std::clamp(i, 0, m - 1);
  }
  return bin_of_cell(std::span<const int>(idx, axes));
}

std::vector<std::size_t> bin_counts(const EqualMassBinner& binner,
                                    std::span<const std::vector<double>> points) {
  std::vector<std::size_t> counts(binner.num_bins(), 0);
  for (const auto& p : points) ++counts[binner.bin_of_point(p)];
  return counts;
}

}  // namespace pilotwave
