#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <numbers>
#include <random>

#include "doctest.h"
#include "pilotwave/configspace.hpp"
#include "pilotwave/grid.hpp"

using namespace pilotwave;

namespace {

GridPtr make(int n, int m, double lo, double hi) {
  GridSpec spec;
  spec.num_particles = n;
  spec.space_dim = 1;
  spec.points_per_axis = m;
  spec.x_min = lo;
  spec.x_max = hi;
  ModelParams params;
  params.masses.assign(n, 1.0);
  return Grid::build(spec, params);
}

}  // namespace

TEST_CASE("grid arithmetic") {
  GridPtr g = make(2, 256, -20, 20);
  CHECK(g->num_cells() == 65536);
  CHECK(g->dx() == doctest::Approx(0.15625).epsilon(1e-15));
  CHECK(g->cell_volume() == doctest::Approx(0.15625 * 0.15625).epsilon(1e-14));

  GridPtr g3 = make(3, 64, -10, 10);
  CHECK(g3->num_cells() == 262144);
  CHECK(g3->dx() == doctest::Approx(0.3125).epsilon(1e-15));
}

TEST_CASE("grid validation") {
  GridSpec spec;
  spec.num_particles = 1;
  spec.points_per_axis = 100;  // not a power of two
  ModelParams params;
  params.masses = {1.0};
  CHECK_THROWS_AS((void)Grid::build(spec, params), ValidationError);

  spec.points_per_axis = 256;
  params.masses = {-1.0};
  CHECK_THROWS_AS((void)Grid::build(spec, params), ValidationError);

  params.masses = {1.0, 1.0};
  CHECK_THROWS_AS((void)Grid::build(spec, params), ValidationError);

  spec.num_particles = 4;
  spec.points_per_axis = 1024;
  spec.memory_budget_bytes = 1 << 20;
  params.masses.assign(4, 1.0);
  CHECK_THROWS_AS((void)Grid::build(spec, params), ResourceError);
}

TEST_CASE("wavenumbers follow the FFT frequency order") {
  GridPtr g = make(1, 8, -4, 4);
  const double dk = 2.0 * std::numbers::pi / 8.0;
  const auto& k = g->axis_wavenumbers();
  CHECK(k[0] == 0.0);
  CHECK(k[1] == doctest::Approx(dk));
  CHECK(k[3] == doctest::Approx(3 * dk));
  CHECK(k[4] == doctest::Approx(-4 * dk));
  CHECK(k[7] == doctest::Approx(-dk));
}

TEST_CASE("lattice encode/decode roundtrip") {
  GridPtr g = make(3, 16, -8, 8);
  Lattice lat = Lattice::full(g);
  std::mt19937_64 rng(7);
  std::vector<int> idx(lat.num_axes());
  for (int trial = 0; trial < 200; ++trial) {
    std::size_t flat = rng() % lat.num_cells();
    lat.decode(flat, idx);
    CHECK(lat.encode(idx) == flat);
  }

  Lattice reduced(g, {2});
  CHECK(reduced.num_axes() == 1);
  CHECK(reduced.num_cells() == 16);
  CHECK(reduced.coord_offset_of(2) == 0);
}

TEST_CASE("field interpolation is exact at nodes and on affine data") {
  GridPtr g = make(2, 64, -8, 8);
  Lattice lat = Lattice::full(g);
  Field<double> f(lat);
  std::vector<int> idx(2);
  for (std::size_t c = 0; c < lat.num_cells(); ++c) {
    lat.decode(c, idx);
    const double x = g->axis_coords()[idx[0]], y = g->axis_coords()[idx[1]];
    f[c] = 2.0 * x - 0.5 * y + 3.0;
  }

  const double node[2] = {g->axis_coords()[10], g->axis_coords()[40]};
  CHECK(f.interpolate(std::span<const double>(node, 2)) ==
        doctest::Approx(2.0 * node[0] - 0.5 * node[1] + 3.0).epsilon(1e-15));

  // affine data is reproduced exactly away from the wrap seam
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> uni(-7.0, 7.0);
  for (int trial = 0; trial < 100; ++trial) {
    const double p[2] = {uni(rng), uni(rng)};
    const double expect = 2.0 * p[0] - 0.5 * p[1] + 3.0;
    CHECK(std::abs(f.interpolate(std::span<const double>(p, 2)) - expect) < 1e-12);
  }
}

TEST_CASE("field interpolation error scales as dx^2 on a smooth field") {
  auto worst_error = [](int m) {
    GridPtr g = make(1, m, -8, 8);
    Field<double> f(Lattice::full(g));
    for (int j = 0; j < m; ++j) {
      const double x = g->axis_coords()[j];
      f[j] = std::exp(-0.5 * x * x);
    }
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> uni(-4.0, 4.0);
    double worst = 0;
    for (int trial = 0; trial < 400; ++trial) {
      const double x = uni(rng);
      worst = std::max(worst, std::abs(f.interpolate(std::span<const double>(&x, 1)) -
                                       std::exp(-0.5 * x * x)));
    }
    return worst;
  };
  const double coarse = worst_error(128), fine = worst_error(512);
  CHECK(coarse < 0.5 * (16.0 / 128) * (16.0 / 128));
  CHECK(fine < coarse / 8.0);
}

TEST_CASE("eval_field rejects points outside the box") {
  GridPtr g = make(1, 64, -8, 8);
  Field<double> f(Lattice::full(g), 1.0);
  const double outside = 8.0;  // box is half-open
  CHECK_THROWS_AS((void)f.interpolate(std::span<const double>(&outside, 1)), OutOfDomainError);
  const double inside = -8.0;
  CHECK(f.interpolate(std::span<const double>(&inside, 1)) == 1.0);
}

TEST_CASE("index sets") {
  IndexSet s = IndexSet::from_members(std::vector<int>{1, 3}, 3);
  CHECK(s.count() == 2);
  CHECK(s.contains(1));
  CHECK(!s.contains(2));
  CHECK(s.complement(3).members() == std::vector<int>{2});
  CHECK((s.bitmask() | s.complement(3).bitmask()) == IndexSet::full(3).bitmask());
  CHECK((s.bitmask() & s.complement(3).bitmask()) == 0u);
  CHECK_THROWS_AS((void)IndexSet::from_members(std::vector<int>{3}, 2), ValidationError);
  CHECK_THROWS_AS((void)IndexSet::from_members(std::vector<int>{0}, 2), ValidationError);
}

TEST_CASE("permutations compose and apply") {
  const int n = 4;
  std::mt19937_64 rng(5);
  std::vector<Permutation> all = Permutation::enumerate(n);
  CHECK(all.size() == 24);

  LabeledConfig q{{0.1, 0.2, 0.3, 0.4}, 0.0};
  CHECK(apply_permutation(Permutation::identity(n), q, 1).q == q.q);
  Permutation swap01(std::vector<int>{1, 0, 2, 3});
  CHECK(apply_permutation(swap01, q, 1).q == std::vector<double>{0.2, 0.1, 0.3, 0.4});

  // (sigma . tau)(Q) = sigma(tau(Q)) on random pairs
  for (int trial = 0; trial < 50; ++trial) {
    const Permutation& sigma = all[rng() % all.size()];
    const Permutation& tau = all[rng() % all.size()];
    LabeledConfig lhs = apply_permutation(sigma.after(tau), q, 1);
    LabeledConfig rhs = apply_permutation(sigma, apply_permutation(tau, q, 1), 1);
    CHECK(lhs.q == rhs.q);
  }

  for (const Permutation& sigma : all)
    CHECK(apply_permutation(sigma.inverse(), apply_permutation(sigma, q, 1), 1).q == q.q);
}

TEST_CASE("unordered configurations canonicalize") {
  UnorderedConfig u = UnorderedConfig::from_points({3.0, -1.0, 0.5}, 1);
  CHECK(u.pts == std::vector<double>{-1.0, 0.5, 3.0});
  UnorderedConfig v = UnorderedConfig::from_points(u.pts, 1);
  CHECK(v.pts == u.pts);
  CHECK_THROWS_AS((void)UnorderedConfig::from_points({1.0, 1.0}, 1), CoincidenceError);
}

TEST_CASE("cell permutation realizes composition with sigma") {
  GridPtr g = make(3, 8, -4, 4);
  Lattice lat = Lattice::full(g);
  std::vector<int> idx(3), scratch(3);
  Permutation sigma(std::vector<int>{1, 2, 0});
  for (std::size_t c = 0; c < lat.num_cells(); c += 37) {
    lat.decode(c, idx);
    const std::size_t pc = permute_cell(sigma, lat, c, scratch);
    std::vector<int> pidx(3);
    lat.decode(pc, pidx);
    // block j of sigma(q) is block sigma^-1(j) of q
    for (int j = 0; j < 3; ++j) CHECK(pidx[sigma(j)] == idx[j]);
  }
}
