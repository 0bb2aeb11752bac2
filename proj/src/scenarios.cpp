#include <chrono>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "pilotwave/experiment.hpp"

namespace pilotwave {

namespace {

using Clock = std::chrono::steady_clock;

struct LineBuilder {
  ScenarioReport report;

  void add(const std::string& name, bool pass, const std::string& detail) {
    report.lines.push_back({name, pass, detail});
  }
  void add_tol(const std::string& name, double value, double tol) {
    std::ostringstream ss;
    ss << value << " (tolerance " << tol << ")";
    add(name, std::abs(value) < tol, ss.str());
  }
  ScenarioReport finish(const std::string& name, double seconds) {
    report.name = name;
    report.seconds = seconds;
    report.pass = true;
    for (const ScenarioLine& l : report.lines) report.pass = report.pass && l.pass;
    return std::move(report);
  }
};

GridPtr desk_grid(int n, int m, double lo, double hi, std::vector<double> masses = {}) {
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

StateRecipe packet(double center, double momentum, double width) {
  return StateRecipe::gaussian_product({GaussianPacket{{center}, {momentum}, width}});
}

StateRecipe two_packets(double c1, double p1, double w1, double c2, double p2, double w2) {
  return StateRecipe::gaussian_product(
      {GaussianPacket{{c1}, {p1}, w1}, GaussianPacket{{c2}, {p2}, w2}});
}

// entangled, permutation-symmetric superposition of two distinct packets
StateRecipe entangled_pair() {
  const double w = 1.0 / std::numbers::sqrt2;
  std::vector<std::pair<cxd, std::shared_ptr<StateRecipe>>> terms;
  terms.emplace_back(w, std::make_shared<StateRecipe>(two_packets(-3, 1, 1, 3, -1, 1)));
  terms.emplace_back(w, std::make_shared<StateRecipe>(two_packets(3, -1, 1, -3, 1, 1)));
  return StateRecipe::superposition(std::move(terms));
}

IntegratorControls standard_controls() {
  IntegratorControls c;
  c.stride = 0.01;
  c.pde_substeps = 10;  // dt = 1e-3
  return c;
}

double free_packet_width(double sigma0, double t, double m, double hbar) {
  const double u = hbar * t / (2.0 * m * sigma0 * sigma0);
  return sigma0 * std::sqrt(1.0 + u * u);
}

// --- 1. unitarity -----------------------------------------------------------

ScenarioReport scenario_unitarity(const ScenarioOptions&) {
  const auto start = Clock::now();
  LineBuilder out;

  GridPtr grid = desk_grid(2, 256, -20, 20);
  SpinorWaveFunction psi = init_state(two_packets(-2, 0.5, 1, 2, -0.5, 1), grid);
  Propagator prop(grid, Potential::harmonic({1.0, 1.0}));
  SpinorWaveFunction evolved = prop.evolve(psi, 1e-3, 2000);
  out.add_tol("norm drift after 2000 steps", evolved.norm_sq() - 1.0, 1e-10);

  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  out.add("runtime under 30 s", secs < 30.0, std::to_string(secs) + " s");
  return out.finish("unitarity", secs);
}

// --- 2. free-Gaussian oracle -------------------------------------------------

ScenarioReport scenario_free_gaussian(const ScenarioOptions&) {
  const auto start = Clock::now();
  LineBuilder out;
  const double sigma0 = 1.0, T = 1.0, q0 = 1.0;
  const double sigma_T = free_packet_width(sigma0, T, 1.0, 1.0);

  auto measured_width = [](const SpinorWaveFunction& psi) {
    const Grid& g = *psi.grid;
    double m0 = 0, m1 = 0, m2 = 0;
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
      const double x = g.axis_coords()[c];
      const double rho = std::norm(psi.amp[c]);
      m0 += rho;
      m1 += rho * x;
      m2 += rho * x * x;
    }
    m1 /= m0;
    m2 /= m0;
    return std::sqrt(m2 - m1 * m1);
  };

  // finer grids need a finer Schroedinger step to honor the spectral
  // resolution bound
  auto endpoint = [&](int m, double stride, int substeps) {
    GridPtr grid = desk_grid(1, m, -10, 10);
    SpinorWaveFunction psi = init_state(packet(0, 0, sigma0), grid);
    IntegratorControls ctl;
    ctl.stride = stride;
    ctl.pde_substeps = substeps;
    const std::vector<double> start_q{q0};
    return integrate(psi, Potential::zero(), LawSpec::full(), start_q, T, ctl);
  };

  {
    GridPtr grid = desk_grid(1, 256, -10, 10);
    SpinorWaveFunction psi = init_state(packet(0, 0, sigma0), grid);
    SpinorWaveFunction psi_T = evolve(psi, 1e-3, 1000, Potential::zero());
    out.add_tol("width at t=1 vs analytic", measured_width(psi_T) - sigma_T, 1e-4);
  }

  Trajectory coarse = endpoint(256, 0.01, 10);
  const double analytic = q0 * sigma_T / sigma0;
  out.add("coarse trajectory completed", coarse.abort == AbortReason::None,
          to_string(coarse.abort));
  out.add_tol("trajectory endpoint vs analytic scaling", coarse.configs.back()[0] - analytic,
              1e-3);

  Trajectory fine = endpoint(1024, 0.0025, 25);
  out.add_tol("4x-finer run vs analytic (oracle cross-check)", fine.configs.back()[0] - analytic,
              2.5e-4);

  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  out.add("runtime under 60 s", secs < 60.0, std::to_string(secs) + " s");
  return out.finish("free-gaussian-oracle", secs);
}

// --- 3. identity collapses ---------------------------------------------------

ScenarioReport scenario_identity_collapses(const ScenarioOptions&) {
  const auto start = Clock::now();
  LineBuilder out;

  GridPtr grid = desk_grid(2, 256, -20, 20);
  SpinorWaveFunction psi = init_state(entangled_pair(), grid);
  IntegratorControls ctl = standard_controls();
  const std::vector<double> start_q{-2.5, 2.5};

  Trajectory full = integrate(psi, Potential::zero(), LawSpec::full(), start_q, 0.5, ctl);
  Trajectory red = integrate(psi, Potential::zero(), LawSpec::reduced(IndexSet::full(2)),
                             start_q, 0.5, ctl);
  double worst = 0;
  for (std::size_t t = 0; t < full.configs.size(); ++t)
    for (std::size_t i = 0; i < full.configs[t].size(); ++i)
      worst = std::max(worst, std::abs(full.configs[t][i] - red.configs[t][i]));
  out.add_tol("reduced law with full real set vs full law", worst, 1e-10);

  {
    GridPtr g1 = desk_grid(1, 256, -10, 10);
    SpinorWaveFunction psi1 = init_state(packet(0.5, 1.0, 1.0), g1);
    Trajectory f1 =
        integrate(psi1, Potential::zero(), LawSpec::full(), std::vector<double>{1.2}, 0.5, ctl);
    Trajectory s1 = integrate(psi1, Potential::zero(), LawSpec::symmetrized(),
                              std::vector<double>{1.2}, 0.5, ctl);
    double worst1 = 0;
    for (std::size_t t = 0; t < f1.configs.size(); ++t)
      worst1 = std::max(worst1, std::abs(f1.configs[t][0] - s1.configs[t][0]));
    out.add_tol("symmetrized law at N=1 vs full law", worst1, 1e-12);
  }

  {
    GridPtr g2 = desk_grid(2, 256, -20, 20, {1.0, 1.5});
    const double dk = 2.0 * std::numbers::pi / g2->length();
    const double k1 = 8 * dk, k2 = -5 * dk;
    SpinorWaveFunction pw = init_state(StateRecipe::plane_wave({{k1}, {k2}}), g2);
    std::vector<double> v = velocity_full(pw, {{0.7, -4.3}, 0.0});
    const double e1 = std::abs(v[0] - k1 / 1.0), e2 = std::abs(v[1] - k2 / 1.5);
    out.add_tol("plane-wave velocities vs hbar k / m", std::max(e1, e2), 1e-9);
  }

  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  return out.finish("identity-collapses", secs);
}

// --- 4/5. statistical equivariance + equivalence ------------------------------

struct SeedTally {
  int passing = 0;
  int total = 0;
  double min_p = 1.0;
  std::string detail() const {
    std::ostringstream ss;
    ss << passing << "/" << total << " seeds passing (min p = " << min_p << ")";
    return ss.str();
  }
};

template <typename CheckFn>
SeedTally run_seeds(int num_seeds, uint64_t base, CheckFn&& check) {
  SeedTally tally;
  tally.total = num_seeds;
  for (int s = 0; s < num_seeds; ++s) {
    CheckReport r = check(substream_seed(base, StreamTag::Generic, s + 1));
    if (r.pass) ++tally.passing;
    for (const TestLine& t : r.tests) tally.min_p = std::min(tally.min_p, t.p_value);
  }
  return tally;
}

ScenarioReport scenario_equivariance_full(const ScenarioOptions& opt) {
  const auto start = Clock::now();
  LineBuilder out;

  GridPtr grid = desk_grid(2, 256, -20, 20);
  SpinorWaveFunction psi = init_state(entangled_pair(), grid);
  const Potential pot = Potential::zero();
  CheckOptions options;
  options.workers = opt.workers;

  EnsemblePlan plan;
  plan.law = LawSpec::full();
  plan.law.velocity_scale = opt.velocity_scale;
  plan.T = 1.0;
  plan.n = 10000;
  plan.controls = standard_controls();

  SeedTally tally = run_seeds(5, 42001, [&](uint64_t seed) {
    EnsemblePlan p = plan;
    p.seed = seed;
    return equivariance_check(psi, pot, p, options);
  });
  out.add("full-law equivariance (KS + joint chi2, p > 0.01)", tally.passing >= 4,
          tally.detail());

  {
    EnsemblePlan bad = plan;
    bad.law.velocity_scale = 2.0 * opt.velocity_scale;
    bad.seed = substream_seed(42001, StreamTag::Generic, 99);
    CheckReport r = equivariance_check(psi, pot, bad, options);
    double max_p = 0.0;
    for (const TestLine& t : r.tests) max_p = std::max(max_p, t.p_value);
    out.add("negative control (x2 velocities) fails at p < 1e-3", !r.pass && max_p < 1e-3,
            "max p = " + std::to_string(max_p));
  }

  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  out.add("runtime under 10 min", secs < 600.0, std::to_string(secs) + " s");
  return out.finish("equivariance-full", secs);
}

ScenarioReport scenario_equivariance_reduced(const ScenarioOptions& opt) {
  const auto start = Clock::now();
  LineBuilder out;

  GridPtr grid = desk_grid(2, 256, -20, 20);
  SpinorWaveFunction psi = init_state(entangled_pair(), grid);
  const Potential pot = Potential::zero();
  const IndexSet real1 = IndexSet::from_members(std::vector<int>{1}, 2);
  CheckOptions options;
  options.workers = opt.workers;

  EnsemblePlan plan;
  plan.T = 1.0;
  plan.n = 10000;
  plan.controls = standard_controls();

  SeedTally equi = run_seeds(5, 52001, [&](uint64_t seed) {
    EnsemblePlan p = plan;
    p.law = LawSpec::reduced(real1);
    p.law.velocity_scale = opt.velocity_scale;
    p.seed = seed;
    return equivariance_check(psi, pot, p, options);
  });
  out.add("reduced-law equivariance vs reduced density (p > 0.01)", equi.passing >= 4,
          equi.detail());

  SeedTally equiv = run_seeds(5, 52002, [&](uint64_t seed) {
    EnsemblePlan p = plan;
    p.seed = seed;
    EquivalenceSpec spec;
    spec.law_a = LawSpec::full();
    spec.law_a.velocity_scale = opt.velocity_scale;
    spec.law_b = LawSpec::reduced(real1);
    spec.law_b.velocity_scale = opt.velocity_scale;
    spec.observables = real1;
    return equivalence_check(psi, pot, spec, p, options);
  });
  out.add("full-law marginal of Q1 vs reduced law (p > 0.01)", equiv.passing >= 4,
          equiv.detail());

  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  out.add("runtime under 10 min", secs < 600.0, std::to_string(secs) + " s");
  return out.finish("equivariance-reduced-equivalence", secs);
}

// --- 6. symmetrized law -------------------------------------------------------

ScenarioReport scenario_symmetrized(const ScenarioOptions& opt) {
  const auto start = Clock::now();
  LineBuilder out;

  const Potential pot = Potential::zero();
  CheckOptions options;
  options.workers = opt.workers;

  {
    GridPtr grid = desk_grid(2, 256, -20, 20);
    SpinorWaveFunction psi = init_state(two_packets(-2, 1, 1, 2, -1, 1.3), grid);
    IntegratorControls ctl = standard_controls();
    ctl.fixed_substeps = 4;
    std::vector<int> transpose{1, 0};
    RelabelReport r = relabel_then_integrate_check(psi, pot, {{-2.5, 2.0}, 0.0},
                                                   Permutation(transpose), 0.5, ctl);
    out.add_tol("relabeling invariance, N=2 transposition", r.max_deviation, 1e-9);
  }
  {
    GridPtr grid = desk_grid(3, 64, -10, 10);
    SpinorWaveFunction psi =
        init_state(StateRecipe::gaussian_product({GaussianPacket{{-3}, {0.5}, 1.0},
                                                  GaussianPacket{{0}, {-0.5}, 1.2},
                                                  GaussianPacket{{3}, {0.2}, 1.1}}),
                   grid);
    IntegratorControls ctl = standard_controls();
    ctl.fixed_substeps = 4;
    std::vector<int> cycle{1, 2, 0};
    RelabelReport r = relabel_then_integrate_check(psi, pot, {{-3.5, 0.4, 2.5}, 0.0},
                                                   Permutation(cycle), 0.3, ctl);
    out.add_tol("relabeling invariance, N=3 cycle", r.max_deviation, 1e-9);
  }

  {
    GridPtr grid = desk_grid(2, 256, -20, 20);
    SpinorWaveFunction psi = init_state(two_packets(-2, -1, 1, 2, 1, 1.3), grid);
    EnsemblePlan plan;
    plan.law = LawSpec::symmetrized();
    plan.law.velocity_scale = opt.velocity_scale;
    plan.T = 1.0;
    plan.n = 10000;
    plan.controls = standard_controls();
    SeedTally tally = run_seeds(5, 62001, [&](uint64_t seed) {
      EnsemblePlan p = plan;
      p.seed = seed;
      return equivariance_check(psi, pot, p, options);
    });
    out.add("unordered endpoint statistics vs normalized permutation sum (p > 0.01)",
            tally.passing >= 4, tally.detail());
  }

  {
    GridPtr grid = desk_grid(2, 256, -20, 20);
    SpinorWaveFunction psi = init_state(entangled_pair(), grid);
    LawFrame full = build_law_frame(psi, LawSpec::full());
    LawFrame sym = build_law_frame(psi, LawSpec::symmetrized());
    FieldBundle fb = density_current(psi);
    std::vector<std::vector<double>> points =
        sample_config_streams(fb.rho, 1000, 63001, StreamTag::Generic);
    double worst = 0;
    for (const auto& pt : points) {
      std::vector<double> vf(2), vs(2);
      if (lerp_velocity(full, full, 0.0, pt, vf, kNodeFloor) != EvalStatus::Ok) continue;
      if (lerp_velocity(sym, sym, 0.0, pt, vs, kNodeFloor) != EvalStatus::Ok) continue;
      for (int i = 0; i < 2; ++i) worst = std::max(worst, std::abs(vf[i] - vs[i]));
    }
    out.add_tol("symmetrized vs full velocities on a symmetric state (1000 points)", worst,
                1e-10);
  }

  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  return out.finish("symmetrized-law", secs);
}

// --- 7. variable particle set --------------------------------------------------

ScenarioReport scenario_variable_set(const ScenarioOptions& opt) {
  const auto start = Clock::now();
  LineBuilder out;

  GridPtr grid = desk_grid(2, 256, -20, 20);
  // particle 1 rests well inside R; particle 2 starts outside and crosses in
  SpinorWaveFunction psi = init_state(two_packets(8, 0, 1, -2, 4, 0.7), grid);
  const Potential pot = Potential::zero();
  RegionPartition partition(grid, Region::half_line(0.0));
  JumpProcessControls jctl;
  jctl.base = standard_controls();

  CheckOptions options;
  options.workers = opt.workers;

  {
    double worst = 0;
    for (double t : {0.0, 0.5, 1.0}) {
      SpinorWaveFunction psi_t =
          t > 0 ? evolve(psi, 1e-3, static_cast<int>(std::lround(t / 1e-3)), pot) : psi;
      const std::vector<double> masses = sector_masses(psi_t, partition);
      double total = 0;
      for (double m : masses) total += m;
      worst = std::max(worst, std::abs(1.0 - total));
    }
    out.add_tol("sector masses sum to 1 at snapshots", worst, 1e-8);
  }

  SeedTally tally = run_seeds(5, 72001, [&](uint64_t seed) {
    JumpCheckReport r =
        jump_process_check(psi, pot, partition, 1.0, 10000, jctl, seed, options);
    return r.report;
  });
  out.add("jump-process law vs fiber density and projection oracle (p > 0.01)",
          tally.passing >= 4, tally.detail());

  {
    RegionPartition whole(grid, Region::whole());
    LabeledConfig q0{{8.3, -1.7}, 0.0};
    ProjectedState s0 = project(whole, q0);
    JumpPath path = simulate_jump_process(psi, pot, whole, s0, 1.0, jctl, 9901,
                                          std::vector<double>{1.0});
    Trajectory ref = integrate(psi, pot, LawSpec::full(), q0.q, 1.0, jctl.base);
    double worst = std::numeric_limits<double>::infinity();
    if (path.abort == AbortReason::None && ref.abort == AbortReason::None &&
        !path.states.empty()) {
      worst = 0;
      for (int i = 0; i < 2; ++i)
        worst = std::max(worst, std::abs(path.states.back().coords[i] - ref.configs.back()[i]));
    }
    out.add_tol("whole-box region degenerates to the full law", worst, 1e-9);
    out.add("whole-box run produces no jump events", path.events.empty(),
            std::to_string(path.events.size()) + " events");
  }

  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  out.add("runtime under 20 min", secs < 1200.0, std::to_string(secs) + " s");
  return out.finish("variable-set", secs);
}

// --- 8. calibration -------------------------------------------------------------

ScenarioReport scenario_calibration(const ScenarioOptions&) {
  const auto start = Clock::now();
  LineBuilder out;
  const int reps = 100;
  const std::size_t n = 10000;

  int ks_reject_1 = 0, ks_reject_5 = 0;
  for (int rep = 0; rep < reps; ++rep) {
    std::mt19937_64 ra = make_rng(88001, StreamTag::Calibration, 2 * rep);
    std::mt19937_64 rb = make_rng(88001, StreamTag::Calibration, 2 * rep + 1);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) a[i] = gauss(ra);
    for (std::size_t i = 0; i < n; ++i) b[i] = gauss(rb);
    KsResult r = ks_two_sample(std::move(a), std::move(b));
    if (r.p_value < 0.01) ++ks_reject_1;
    if (r.p_value < 0.05) ++ks_reject_5;
  }
  out.add("ks null rejection rate <= 2x nominal (alpha=0.01)", ks_reject_1 <= 2,
          std::to_string(ks_reject_1) + "/100 rejections");
  out.add("ks null rejection rate <= 2x nominal (alpha=0.05)", ks_reject_5 <= 10,
          std::to_string(ks_reject_5) + "/100 rejections");

  // chi-square against an uneven 64-bin reference
  std::vector<double> masses(64);
  for (int i = 0; i < 64; ++i) masses[i] = 1.0 + std::sin(0.41 * i) * 0.6;
  double total = 0;
  for (double m : masses) total += m;
  std::vector<double> cumulative(64);
  double acc = 0;
  for (int i = 0; i < 64; ++i) {
    acc += masses[i] / total;
    cumulative[i] = acc;
  }

  int c2_reject_1 = 0, c2_reject_5 = 0;
  for (int rep = 0; rep < reps; ++rep) {
    std::mt19937_64 rng = make_rng(88002, StreamTag::Calibration, rep);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<std::size_t> counts(64, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = uni(rng);
      const std::size_t bin =
          std::lower_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin();
      ++counts[std::min<std::size_t>(bin, 63)];
    }
    ChiSquareResult r = chi_square_binned(counts, masses);
    if (r.p_value < 0.01) ++c2_reject_1;
    if (r.p_value < 0.05) ++c2_reject_5;
  }
  out.add("chi2 null rejection rate <= 2x nominal (alpha=0.01)", c2_reject_1 <= 2,
          std::to_string(c2_reject_1) + "/100 rejections");
  out.add("chi2 null rejection rate <= 2x nominal (alpha=0.05)", c2_reject_5 <= 10,
          std::to_string(c2_reject_5) + "/100 rejections");

  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  out.add("runtime under 5 min", secs < 300.0, std::to_string(secs) + " s");
  return out.finish("calibration", secs);
}

// --- 9. determinism --------------------------------------------------------------

ScenarioReport scenario_determinism(const ScenarioOptions&) {
  const auto start = Clock::now();
  LineBuilder out;

  GridPtr grid = desk_grid(2, 256, -20, 20);
  SpinorWaveFunction psi = init_state(entangled_pair(), grid);
  const Potential pot = Potential::zero();

  EnsemblePlan plan;
  plan.law = LawSpec::full();
  plan.T = 0.2;
  plan.n = 400;
  plan.controls = standard_controls();
  plan.seed = 424242;

  auto run_with = [&](int workers) {
    EnsemblePlan p = plan;
    p.workers = workers;
    return run_ensemble(psi, pot, p);
  };
  EnsembleResult r1 = run_with(1);
  EnsembleResult r3 = run_with(3);
  EnsembleResult r1b = run_with(1);

  auto identical = [](const EnsembleResult& a, const EnsembleResult& b) {
    if (a.samples.size() != b.samples.size()) return false;
    for (std::size_t t = 0; t < a.samples.size(); ++t)
      for (std::size_t w = 0; w < a.samples[t].size(); ++w)
        if (a.samples[t][w] != b.samples[t][w]) return false;
    return a.aborts == b.aborts;
  };
  out.add("ensemble tables bitwise identical across worker counts", identical(r1, r3),
          "workers 1 vs 3");
  out.add("ensemble rerun bitwise identical", identical(r1, r1b), "same seed, same workers");

  {
    RegionPartition partition(grid, Region::half_line(0.0));
    JumpProcessControls jctl;
    jctl.base = standard_controls();
    const std::vector<double> times{0.2};
    JumpEnsembleResult j1 =
        run_jump_ensemble(psi, pot, partition, 0.2, 200, jctl, 777, times, 1);
    JumpEnsembleResult j2 =
        run_jump_ensemble(psi, pot, partition, 0.2, 200, jctl, 777, times, 3);
    bool same = j1.events.size() == j2.events.size();
    for (std::size_t t = 0; same && t < j1.states.size(); ++t)
      for (std::size_t w = 0; same && w < j1.states[t].size(); ++w) {
        same = j1.states[t][w].real_set == j2.states[t][w].real_set &&
               j1.states[t][w].coords == j2.states[t][w].coords;
      }
    out.add("jump-process tables bitwise identical across worker counts", same,
            "workers 1 vs 3");
  }

  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  return out.finish("determinism", secs);
}

}  // namespace

const std::vector<Scenario>& bundled_scenarios() {
  static const std::vector<Scenario> scenarios = {
      {"unitarity", "norm preservation over 2000 split steps", scenario_unitarity},
      {"free-gaussian-oracle", "spreading packet vs closed-form width/trajectory",
       scenario_free_gaussian},
      {"identity-collapses", "reduced/symmetrized laws collapse to the full law",
       scenario_identity_collapses},
      {"equivariance-full", "endpoint law matches |psi_T|^2 at n=10^4", scenario_equivariance_full},
      {"equivariance-reduced-equivalence",
       "reduced law matches its density and the full-law marginal", scenario_equivariance_reduced},
      {"symmetrized-law", "relabeling invariance and unordered statistics", scenario_symmetrized},
      {"variable-set", "sector masses, jump-process law, whole-box degeneration",
       scenario_variable_set},
      {"calibration", "KS/chi2 null rejection rates", scenario_calibration},
      {"determinism", "bitwise reproducibility across worker counts", scenario_determinism},
  };
  return scenarios;
}

int run_verify(const std::vector<std::string>& only, bool only_given,
               const ScenarioOptions& options, std::ostream& out) {
  std::vector<const Scenario*> selected;
  for (const Scenario& s : bundled_scenarios()) {
    if (!only_given) {
      selected.push_back(&s);
      continue;
    }
    for (const std::string& name : only)
      if (name == s.name) {
        selected.push_back(&s);
        break;
      }
  }
  if (only_given && selected.empty()) {
    out << "warning: empty scenario selection, nothing to verify\n";
    return 0;
  }

  bool all_pass = true;
  for (const Scenario* s : selected) {
    ScenarioReport r;
    try {
      r = s->run(options);
    } catch (const Error& e) {
      r.name = s->name;
      r.pass = false;
      r.lines.push_back({"scenario aborted", false, e.what()});
    }
    all_pass = all_pass && r.pass;
    out << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  (" << r.seconds << " s)\n";
    for (const ScenarioLine& line : r.lines)
      out << "      " << (line.pass ? "ok  " : "FAIL") << "  " << line.name << ": " << line.detail
          << "\n";
  }
  out << (all_pass ? "all scenarios passed" : "some scenarios FAILED") << "\n";
  return all_pass ? 0 : 1;
}

}  // namespace pilotwave
