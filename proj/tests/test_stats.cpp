#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "pilotwave/sampling.hpp"
#include "pilotwave/stats.hpp"

using namespace pilotwave;

TEST_CASE("ks: identical samples give D = 0, p = 1") {
  std::vector<double> a(50), b(50);
  for (int i = 0; i < 50; ++i) a[i] = b[i] = 0.1 * i;
  KsResult r = ks_two_sample(a, b);
  CHECK(r.d_stat == 0.0);
  CHECK(r.p_value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ks: disjoint supports give D = 1, p ~ 0") {
  std::vector<double> a(100), b(100);
  for (int i = 0; i < 100; ++i) {
    a[i] = i;
    b[i] = 1000 + i;
  }
  KsResult r = ks_two_sample(a, b);
  CHECK(r.d_stat == doctest::Approx(1.0));
  CHECK(r.p_value < 1e-10);
}

TEST_CASE("ks: undersized samples are rejected") {
  std::vector<double> a(24, 0.0), b(100, 0.0);
  CHECK_THROWS_AS((void)ks_two_sample(a, b), ValidationError);
}

TEST_CASE("ks tail matches the known 5% critical value") {
  // Q(1.3581) ~ 0.05 for the asymptotic Kolmogorov distribution
  CHECK(ks_tail(1.3581) == doctest::Approx(0.05).epsilon(0.02));
  CHECK(ks_tail(0.5) > 0.95);
  CHECK(ks_tail(2.5) < 1e-4);
}

TEST_CASE("ks calibration: same-distribution draws pass at p > 0.01 in >= 99/100 runs") {
  int pass = 0;
  for (int rep = 0; rep < 100; ++rep) {
    std::mt19937_64 ra = make_rng(1234, StreamTag::Calibration, 2 * rep);
    std::mt19937_64 rb = make_rng(1234, StreamTag::Calibration, 2 * rep + 1);
    std::normal_distribution<double> gauss;
    std::vector<double> a(10000), b(10000);
    for (auto& v : a) v = gauss(ra);
    for (auto& v : b) v = gauss(rb);
    if (ks_two_sample(std::move(a), std::move(b)).p_value > 0.01) ++pass;
  }
  CHECK(pass >= 99);
}

TEST_CASE("chi2: exact proportionality gives p = 1") {
  std::vector<std::size_t> counts{500, 300, 200};
  std::vector<double> expected{0.5, 0.3, 0.2};
  ChiSquareResult r = chi_square_binned(counts, expected);
  CHECK(r.chi2 == doctest::Approx(0.0));
  CHECK(r.p_value == doctest::Approx(1.0));
  CHECK(r.dof == 2);
}

TEST_CASE("chi2: the closed-form two-bin example") {
  std::vector<std::size_t> counts{100, 0};
  std::vector<double> expected{0.5, 0.5};
  ChiSquareResult r = chi_square_binned(counts, expected);
  CHECK(r.chi2 == doctest::Approx(100.0).epsilon(1e-12));
  CHECK(r.dof == 1);
  CHECK(r.p_value < 1e-20);
}

TEST_CASE("chi2: tail values match known quantiles") {
  CHECK(chi2_tail(3.841, 1) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(chi2_tail(11.070, 5) == doctest::Approx(0.05).epsilon(1e-3));
  CHECK(chi2_tail(0.0, 3) == 1.0);
}

TEST_CASE("chi2: degenerate expected mass is a validation error") {
  std::vector<std::size_t> counts{100, 0};
  std::vector<double> expected{1.0, 0.0};  // all mass in one bin
  CHECK_THROWS_AS((void)chi_square_binned(counts, expected), ValidationError);
}

TEST_CASE("chi2: small expected bins are merged") {
  // 100 samples, bins with expected {50, 2, 3, 45}: middle bins merge
  std::vector<std::size_t> counts{50, 2, 3, 45};
  std::vector<double> expected{0.50, 0.02, 0.03, 0.45};
  ChiSquareResult r = chi_square_binned(counts, expected);
  CHECK(r.dof == 2);  // four bins merged to three
  CHECK(r.p_value > 0.9);
}

TEST_CASE("chi2 calibration: multinomial draws pass at p > 0.01 in >= 99/100 runs") {
  std::vector<double> masses(32);
  for (int i = 0; i < 32; ++i) masses[i] = 1.0 + 0.5 * std::sin(0.7 * i);
  double total = 0;
  for (double m : masses) total += m;
  std::vector<double> cumulative(32);
  double acc = 0;
  for (int i = 0; i < 32; ++i) cumulative[i] = (acc += masses[i] / total);

  int pass = 0;
  for (int rep = 0; rep < 100; ++rep) {
    std::mt19937_64 rng = make_rng(777, StreamTag::Calibration, rep);
    std::uniform_real_distribution<double> uni;
    std::vector<std::size_t> counts(32, 0);
    for (int i = 0; i < 10000; ++i) {
      const auto bin = std::lower_bound(cumulative.begin(), cumulative.end(), uni(rng)) -
                       cumulative.begin();
      ++counts[std::min<std::ptrdiff_t>(bin, 31)];
    }
    if (chi_square_binned(counts, masses).p_value > 0.01) ++pass;
  }
  CHECK(pass >= 99);
}

TEST_CASE("two-sample chi2 accepts same-law draws and rejects shifted ones") {
  std::mt19937_64 rng = make_rng(4242, StreamTag::Calibration, 0);
  std::normal_distribution<double> gauss;
  auto histogram = [&](double shift) {
    std::vector<std::size_t> h(40, 0);
    for (int i = 0; i < 20000; ++i) {
      const double x = gauss(rng) + shift;
      const int bin = std::clamp(static_cast<int>((x + 5.0) / 0.25), 0, 39);
      ++h[bin];
    }
    return h;
  };
  ChiSquareResult same = chi_square_two_sample(histogram(0.0), histogram(0.0));
  CHECK(same.p_value > 0.001);
  ChiSquareResult shifted = chi_square_two_sample(histogram(0.0), histogram(0.15));
  CHECK(shifted.p_value < 1e-6);
}

namespace {

GridPtr tiny_grid(int n, int m) {
  GridSpec spec;
  spec.num_particles = n;
  spec.space_dim = 1;
  spec.points_per_axis = m;
  spec.x_min = -8;
  spec.x_max = 8;
  ModelParams params;
  params.masses.assign(n, 1.0);
  return Grid::build(spec, params);
}

Field<double> gaussian_field(const GridPtr& g) {
  Lattice lat = Lattice::full(g);
  Field<double> f(lat);
  std::vector<int> idx(lat.num_axes());
  for (std::size_t c = 0; c < lat.num_cells(); ++c) {
    lat.decode(c, idx);
    double e = 0;
    for (int a = 0; a < lat.num_axes(); ++a) {
      const double x = g->axis_coords()[idx[a]] - 0.5 * a;
      e += x * x;
    }
    f[c] = std::exp(-0.5 * e);
  }
  return f;
}

}  // namespace

TEST_CASE("equal-mass binner produces near-uniform masses summing to one") {
  GridPtr g = tiny_grid(2, 64);
  Field<double> rho = gaussian_field(g);
  EqualMassBinner binner = EqualMassBinner::build(rho, 64);
  CHECK(binner.num_bins() == 64);
  double total = 0, lo = 1e300, hi = 0;
  for (double m : binner.masses()) {
    total += m;
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(hi / lo < 3.0);
}

TEST_CASE("binner bin assignment is consistent with sampled cells") {
  GridPtr g = tiny_grid(2, 64);
  Field<double> rho = gaussian_field(g);
  EqualMassBinner binner = EqualMassBinner::build(rho, 32);

  std::mt19937_64 rng = make_rng(99, StreamTag::Calibration, 0);
  std::vector<std::vector<double>> draws = sample_config(rho, 20000, rng);
  std::vector<std::size_t> counts = bin_counts(binner, draws);
  ChiSquareResult r = chi_square_binned(counts, binner.masses());
  CHECK(r.p_value > 0.001);
}

TEST_CASE("binner honors a cell mask") {
  GridPtr g = tiny_grid(1, 64);
  Field<double> rho = gaussian_field(g);
  // mass restricted to the x >= 0 half-line
  auto mask = [&](std::span<const int> idx) { return g->axis_coords()[idx[0]] >= 0.0; };
  EqualMassBinner binner = EqualMassBinner::build(rho, 8, mask);
  double total = 0;
  for (double m : binner.masses()) total += m;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  // a masked-out point lands in a leaf whose mass came only from kept cells
  CHECK(binner.bin_of_point(std::vector<double>{1.0}) >= 0);
}

TEST_CASE("cell sampler: spike density concentrates all samples") {
  GridPtr g = tiny_grid(1, 64);
  Field<double> f(Lattice::full(g));
  f[40] = 1.0;  // single massive cell
  std::mt19937_64 rng = make_rng(5, StreamTag::Calibration, 0);
  auto draws = sample_config(f, 200, rng);
  // cells are node-centered
  const double lo = g->axis_coords()[40] - 0.5 * g->dx(), hi = lo + g->dx();
  for (const auto& d : draws) {
    CHECK(d[0] >= lo);
    CHECK(d[0] < hi);
  }
}

TEST_CASE("cell sampler is deterministic per seed") {
  GridPtr g = tiny_grid(2, 32);
  Field<double> rho = gaussian_field(g);
  auto a = sample_config_streams(rho, 500, 31337, StreamTag::InitialDraw);
  auto b = sample_config_streams(rho, 500, 31337, StreamTag::InitialDraw);
  CHECK(a == b);
  auto c = sample_config_streams(rho, 500, 31338, StreamTag::InitialDraw);
  CHECK(a != c);
}

TEST_CASE("cell sampler rejects empty densities") {
  GridPtr g = tiny_grid(1, 32);
  Field<double> zero(Lattice::full(g));
  std::mt19937_64 rng(1);
  CHECK_THROWS_AS((void)sample_config(zero, 10, rng), ValidationError);
}

TEST_CASE("uniform density draws pass a KS test against fresh uniforms") {
  GridPtr g = tiny_grid(1, 64);
  Field<double> uniform(Lattice::full(g), 1.0);
  auto draws = sample_config_streams(uniform, 10000, 2024, StreamTag::InitialDraw);
  std::vector<double> xs(draws.size());
  for (std::size_t i = 0; i < draws.size(); ++i) xs[i] = draws[i][0];

  std::mt19937_64 rng = make_rng(2025, StreamTag::Calibration, 0);
  std::uniform_real_distribution<double> uni(-8.0, 8.0);
  std::vector<double> ref(10000);
  for (auto& v : ref) v = uni(rng);
  CHECK(ks_two_sample(xs, ref).p_value > 0.01);
}
