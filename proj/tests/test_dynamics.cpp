#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <numbers>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "pilotwave/dynamics.hpp"

using namespace pilotwave;

namespace {

GridPtr make(int n, int m, double lo, double hi, std::vector<double> masses = {}) {
  GridSpec spec;
  spec.num_particles = n;
  spec.space_dim = 1;
  spec.points_per_axis = m;
  spec.x_min = lo;
  spec.x_max = hi;
  ModelParams params;
  params.masses = masses.empty() ? std::vector<double>(n, 1.0) : std::move(masses);
  return Grid::build(spec, params);
}

StateRecipe gauss1(double c, double p, double w) {
  return StateRecipe::gaussian_product({GaussianPacket{{c}, {p}, w}});
}

StateRecipe gauss2(double c1, double p1, double w1, double c2, double p2, double w2) {
  return StateRecipe::gaussian_product(
      {GaussianPacket{{c1}, {p1}, w1}, GaussianPacket{{c2}, {p2}, w2}});
}

StateRecipe entangled(const oracles::TwoPacketState& o) {
  std::vector<std::pair<cxd, std::shared_ptr<StateRecipe>>> terms;
  terms.emplace_back(o.w1,
                     std::make_shared<StateRecipe>(gauss2(o.ca, o.pa, o.sa, o.cb, o.pb, o.sb)));
  terms.emplace_back(o.w2,
                     std::make_shared<StateRecipe>(gauss2(o.cb, o.pb, o.sb, o.ca, o.pa, o.sa)));
  return StateRecipe::superposition(std::move(terms));
}

const oracles::TwoPacketState kPair{-3.0, 1.0, 1.0, 3.0, -1.0, 1.2,
                                    cxd(0.8, 0.0), cxd(0.0, 0.6), 1.0};

IntegratorControls quick_controls() {
  IntegratorControls c;
  c.stride = 0.01;
  c.pde_substeps = 10;
  return c;
}

}  // namespace

TEST_CASE("real eigenstates have zero velocity") {
  GridPtr g = make(1, 256, -10, 10);
  SpinorWaveFunction psi = init_state(StateRecipe::oscillator({{0}}, {1.0}), g);
  std::vector<double> v = velocity_full(psi, {{0.73}, 0.0});
  CHECK(std::abs(v[0]) < 1e-10);
}

TEST_CASE("plane-wave velocities equal hbar k over m") {
  GridPtr g = make(2, 128, -20, 20, {1.0, 1.5});
  const double dk = 2.0 * std::numbers::pi / 40.0;
  const double k1 = 8 * dk, k2 = -5 * dk;
  SpinorWaveFunction psi = init_state(StateRecipe::plane_wave({{k1}, {k2}}), g);
  std::vector<double> v = velocity_full(psi, {{0.7, -4.3}, 0.0});
  CHECK(std::abs(v[0] - k1 / 1.0) < 1e-9);
  CHECK(std::abs(v[1] - k2 / 1.5) < 1e-9);
}

TEST_CASE("free-Gaussian velocity matches the closed form") {
  const double t = 0.5;
  // coarse at grid nodes: spectrally exact
  {
    GridPtr g = make(1, 256, -10, 10);
    SpinorWaveFunction psi = evolve(init_state(gauss1(0, 0, 1.0), g), 1e-3, 500,
                                    Potential::zero());
    LawFrame frame = build_law_frame(psi, LawSpec::full());
    double worst = 0;
    for (int c = 96; c < 160; c += 4) {  // central region where rho is healthy
      const double x = g->axis_coords()[c];
      std::vector<double> v = frame_velocity(frame, std::span<const double>(&x, 1));
      worst = std::max(worst, std::abs(v[0] - oracles::free_packet_velocity(x, t, 1.0)));
    }
    CHECK(worst < 1e-10);
  }
  // fine grid at random off-node points: interpolation error within 1e-4
  {
    GridPtr g = make(1, 1024, -10, 10);
    SpinorWaveFunction psi = evolve(init_state(gauss1(0, 0, 1.0), g), 1e-4, 5000,
                                    Potential::zero());
    LawFrame frame = build_law_frame(psi, LawSpec::full());
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> uni(-2.0, 2.0);
    double worst = 0;
    for (int trial = 0; trial < 200; ++trial) {
      const double x = uni(rng);
      std::vector<double> v = frame_velocity(frame, std::span<const double>(&x, 1));
      worst = std::max(worst, std::abs(v[0] - oracles::free_packet_velocity(x, t, 1.0)));
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("reduced law with the full real set collapses to the full law") {
  GridPtr g = make(2, 128, -20, 20);
  SpinorWaveFunction psi = init_state(entangled(kPair), g);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> uni(-4.5, 4.5);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> q{uni(rng), uni(rng)};
    std::vector<double> vf = velocity_full(psi, {q, 0.0});
    std::vector<double> vr = velocity_reduced(psi, IndexSet::full(2), q);
    for (int i = 0; i < 2; ++i) worst = std::max(worst, std::abs(vf[i] - vr[i]));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("reduced law on a product state is the one-particle law of the real factor") {
  GridPtr g2 = make(2, 256, -20, 20);
  SpinorWaveFunction product = init_state(gauss2(-2, 0.9, 1.0, 3, -0.4, 1.3), g2);
  GridPtr g1 = make(1, 256, -20, 20);
  SpinorWaveFunction factor = init_state(gauss1(-2, 0.9, 1.0), g1);

  IndexSet one = IndexSet::from_members(std::vector<int>{1}, 2);
  double worst = 0;
  for (double q1 : {-3.5, -2.0, -1.0, 0.5}) {
    std::vector<double> vr = velocity_reduced(product, one, std::span<const double>(&q1, 1));
    std::vector<double> v1 = velocity_full(factor, {{q1}, 0.0});
    worst = std::max(worst, std::abs(vr[0] - v1[0]));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("reduced velocity matches a brute-force quadrature of the contracted law") {
  GridPtr g = make(2, 256, -20, 20);
  SpinorWaveFunction psi = init_state(entangled(kPair), g);
  IndexSet one = IndexSet::from_members(std::vector<int>{1}, 2);

  double worst = 0;
  for (int node : {104, 112, 120, 136, 144}) {  // central grid nodes
    const double q1 = g->axis_coords()[node];
    std::vector<double> v = velocity_reduced(psi, one, std::span<const double>(&q1, 1));
    // 4x-finer quadrature of Im <psi, d1 psi> / <psi, psi> over q2
    const double num = oracles::riemann(
        [&](double q2) { return std::imag(std::conj(kPair.value(q1, q2)) * kPair.d1(q1, q2)); },
        -20, 20, 1024);
    const double den = oracles::riemann(
        [&](double q2) { return std::norm(kPair.value(q1, q2)); }, -20, 20, 1024);
    worst = std::max(worst, std::abs(v[0] - num / den));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("symmetrized law at N = 1 equals the full law") {
  GridPtr g = make(1, 256, -10, 10);
  SpinorWaveFunction psi =
      evolve(init_state(gauss1(0.5, 0.8, 1.0), g), 1e-3, 300, Potential::zero());
  for (double x : {-1.0, 0.2, 1.7}) {
    std::vector<double> vf = velocity_full(psi, {{x}, psi.time});
    std::vector<double> vs = velocity_symmetrized(psi, UnorderedConfig::from_points({x}, 1));
    CHECK(std::abs(vf[0] - vs[0]) < 1e-12);
  }
}

TEST_CASE("symmetrized velocity matches the two-term permutation sum oracle") {
  GridPtr g = make(2, 256, -20, 20);
  SpinorWaveFunction psi = init_state(gauss2(-2, 0.8, 1.0, 2, -0.5, 1.3), g);

  auto j1 = [&](double q1, double q2) {
    return std::imag(std::conj(oracles::packet(q1, -2, 0.8, 1.0)) *
                     oracles::packet_dx(q1, -2, 0.8, 1.0)) *
           std::norm(oracles::packet(q2, 2, -0.5, 1.3));
  };
  auto j2 = [&](double q1, double q2) {
    return std::norm(oracles::packet(q1, -2, 0.8, 1.0)) *
           std::imag(std::conj(oracles::packet(q2, 2, -0.5, 1.3)) *
                     oracles::packet_dx(q2, 2, -0.5, 1.3));
  };
  auto rho = [&](double q1, double q2) {
    return std::norm(oracles::packet(q1, -2, 0.8, 1.0)) *
           std::norm(oracles::packet(q2, 2, -0.5, 1.3));
  };

  double worst = 0;
  for (auto [na, nb] : std::vector<std::pair<int, int>>{{113, 140}, {118, 145}, {110, 136}}) {
    const double a = g->axis_coords()[na], b = g->axis_coords()[nb];  // grid nodes, a < b
    UnorderedConfig u = UnorderedConfig::from_points({a, b}, 1);
    std::vector<double> v = velocity_symmetrized(psi, u);
    // slot 0 holds the smaller point; permutation sum over S_2
    const double den = rho(a, b) + rho(b, a);
    const double v0 = (j1(a, b) + j2(b, a)) / den;
    const double v1 = (j2(a, b) + j1(b, a)) / den;
    worst = std::max(worst, std::abs(v[0] - v0));
    worst = std::max(worst, std::abs(v[1] - v1));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("symmetrized velocity is permutation equivariant argwise") {
  GridPtr g = make(2, 128, -20, 20);
  SpinorWaveFunction psi = init_state(gauss2(-2, 0.8, 1.0, 2, -0.5, 1.3), g);
  LawFrame frame = build_law_frame(psi, LawSpec::symmetrized());
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> uni(-4.0, 4.0);
  double worst = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const double a = uni(rng), b = uni(rng);
    std::vector<double> q{a, b}, qs{b, a};
    std::vector<double> v(2), vs(2);
    if (lerp_velocity(frame, frame, 0.0, q, v, kNodeFloor) != EvalStatus::Ok) continue;
    if (lerp_velocity(frame, frame, 0.0, qs, vs, kNodeFloor) != EvalStatus::Ok) continue;
    // v_{sigma(i)}(sigma Q) = v_i(Q) for the transposition
    worst = std::max(worst, std::abs(vs[1] - v[0]));
    worst = std::max(worst, std::abs(vs[0] - v[1]));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("coincident points and nodes are rejected") {
  GridPtr g = make(2, 128, -20, 20);
  SpinorWaveFunction psi = init_state(gauss2(-2, 0.8, 1.0, 2, -0.5, 1.3), g);
  CHECK_THROWS_AS((void)UnorderedConfig::from_points({1.0, 1.0}, 1), CoincidenceError);
  // deep in the tail the interpolated density sits below the node floor
  CHECK_THROWS_AS((void)velocity_full(psi, {{15.0, -15.0}, 0.0}), NodeProximityError);
  try {
    (void)velocity_full(psi, {{15.0, -15.0}, 0.0});
  } catch (const NodeProximityError& e) {
    CHECK(e.position().size() == 2);
    CHECK(e.position()[0] == 15.0);
  }
}

TEST_CASE("Galilean boost shifts every full-law velocity by hbar k / m") {
  GridPtr g = make(2, 128, -20, 20, {1.0, 2.0});
  SpinorWaveFunction psi = init_state(entangled(kPair), g);
  const double dk = 2.0 * std::numbers::pi / 40.0;
  const double k = 6 * dk;

  SpinorWaveFunction boosted = psi;
  const int m = g->points_per_axis();
  for (std::size_t c = 0; c < g->num_cells(); ++c) {
    const double x1 = g->axis_coords()[c / m];
    const double x2 = g->axis_coords()[c % m];
    boosted.amp[c] *= std::exp(cxd(0.0, k * (x1 + x2)));
  }

  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> uni(-4.0, 4.0);
  double worst = 0;
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> q{uni(rng), uni(rng)};
    std::vector<double> v0 = velocity_full(psi, {q, 0.0});
    std::vector<double> v1 = velocity_full(boosted, {q, 0.0});
    worst = std::max(worst, std::abs(v1[0] - v0[0] - k / 1.0));
    worst = std::max(worst, std::abs(v1[1] - v0[1] - k / 2.0));
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("integrate holds still on a zero-current state") {
  GridPtr g = make(1, 256, -10, 10);
  // k = 0 plane wave: the current vanishes identically and stays zero
  SpinorWaveFunction psi = init_state(StateRecipe::plane_wave({{0.0}}), g);
  Trajectory tr = integrate(psi, Potential::zero(), LawSpec::full(),
                            std::vector<double>{0.8}, 0.5, quick_controls());
  REQUIRE(tr.abort == AbortReason::None);
  double worst = 0;
  for (const auto& qc : tr.configs) worst = std::max(worst, std::abs(qc[0] - 0.8));
  CHECK(worst < 1e-12);

  // a numerically evolved eigenstate drifts only at splitting-error order
  SpinorWaveFunction ground = init_state(StateRecipe::oscillator({{0}}, {1.0}), g);
  Trajectory tr2 = integrate(ground, Potential::harmonic({1.0}), LawSpec::full(),
                             std::vector<double>{0.8}, 0.5, quick_controls());
  REQUIRE(tr2.abort == AbortReason::None);
  double drift = 0;
  for (const auto& qc : tr2.configs) drift = std::max(drift, std::abs(qc[0] - 0.8));
  CHECK(drift < 1e-6);
}

TEST_CASE("integrate carries plane waves ballistically") {
  GridPtr g = make(2, 128, -20, 20, {1.0, 1.5});
  const double dk = 2.0 * std::numbers::pi / 40.0;
  const double k1 = 4 * dk, k2 = -3 * dk;
  SpinorWaveFunction psi = init_state(StateRecipe::plane_wave({{k1}, {k2}}), g);
  const double T = 1.0;
  Trajectory tr = integrate(psi, Potential::zero(), LawSpec::full(),
                            std::vector<double>{-1.0, 2.0}, T, quick_controls());
  REQUIRE(tr.abort == AbortReason::None);
  CHECK(std::abs(tr.configs.back()[0] - (-1.0 + k1 / 1.0 * T)) < 1e-6);
  CHECK(std::abs(tr.configs.back()[1] - (2.0 + k2 / 1.5 * T)) < 1e-6);
}

TEST_CASE("free-Gaussian trajectory follows the analytic scaling curve") {
  GridPtr g = make(1, 256, -10, 10);
  SpinorWaveFunction psi = init_state(gauss1(0, 0, 1.0), g);
  const double q0 = 1.0;
  Trajectory tr = integrate(psi, Potential::zero(), LawSpec::full(), std::vector<double>{q0},
                            1.0, quick_controls());
  REQUIRE(tr.abort == AbortReason::None);
  double worst = 0;
  for (std::size_t i = 0; i < tr.times.size(); ++i)
    worst = std::max(worst,
                     std::abs(tr.configs[i][0] - q0 * oracles::free_packet_width(tr.times[i], 1.0)));
  CHECK(worst < 1e-3);

  // halving every step control moves the endpoint by less than 1e-4
  IntegratorControls halved = quick_controls();
  halved.stride = 0.005;
  halved.pde_substeps = 10;
  halved.eta = 0.25;
  Trajectory tr2 = integrate(psi, Potential::zero(), LawSpec::full(), std::vector<double>{q0},
                             1.0, halved);
  REQUIRE(tr2.abort == AbortReason::None);
  CHECK(std::abs(tr.configs.back()[0] - tr2.configs.back()[0]) < 1e-4);
}

TEST_CASE("relabeling a symmetrized start leaves the unordered path unchanged") {
  GridPtr g = make(2, 128, -20, 20);
  SpinorWaveFunction psi = init_state(gauss2(-2, 1, 1, 2, -1, 1.3), g);
  IntegratorControls ctl = quick_controls();
  ctl.fixed_substeps = 4;

  // identity permutation: bitwise stable
  RelabelReport rid = relabel_then_integrate_check(psi, Potential::zero(), {{-2.5, 2.0}, 0.0},
                                                   Permutation::identity(2), 0.3, ctl);
  CHECK(rid.max_deviation == 0.0);

  RelabelReport r = relabel_then_integrate_check(psi, Potential::zero(), {{-2.5, 2.0}, 0.0},
                                                 Permutation(std::vector<int>{1, 0}), 0.3, ctl);
  CHECK(r.coincide);
  CHECK(r.max_deviation < 1e-9);
}

TEST_CASE("integration requires stride-aligned horizons") {
  GridPtr g = make(1, 128, -10, 10);
  SpinorWaveFunction psi = init_state(gauss1(0, 0, 1.0), g);
  CHECK_THROWS_AS((void)integrate(psi, Potential::zero(), LawSpec::full(),
                                  std::vector<double>{0.5}, 0.0153, quick_controls()),
                  ValidationError);
  CHECK_THROWS_AS((void)integrate(psi, Potential::zero(), LawSpec::full(),
                                  std::vector<double>{11.0}, 0.1, quick_controls()),
                  OutOfDomainError);
}
