#include "pilotwave/ensemble.hpp"

#include <algorithm>
#include <cmath>

namespace pilotwave {

Field<double> law_density(const SpinorWaveFunction& psi, const LawSpec& law) {
  switch (law.kind) {
    case LawKind::Full: {
      const Grid& g = *psi.grid;
      const int ell = psi.spin_dim();
      Field<double> rho(Lattice::full(psi.grid));
      for (std::size_t c = 0; c < g.num_cells(); ++c) {
        double acc = 0;
        for (int s = 0; s < ell; ++s) acc += std::norm(psi.amp[c * ell + s]);
        rho[c] = acc;
      }
      return rho;
    }
    case LawKind::Reduced:
      return reduced_density(psi, law.real_set);
    case LawKind::Symmetrized:
      return symmetrized_density(psi).normalized;
  }
  throw ValidationError("unknown law kind");
}

EnsembleResult run_ensemble(const SpinorWaveFunction& psi0, const Potential& potential,
                            const EnsemblePlan& plan) {
  if (plan.n < 100) throw ValidationError("ensemble plans require n >= 100");
  const int workers = plan.workers > 0 ? plan.workers : default_worker_count();
  std::vector<double> times = plan.sample_times;
  if (times.empty()) times = {plan.T};

  const Field<double> init_density = plan.init_density_override
                                         ? *plan.init_density_override
                                         : law_density(psi0, plan.law);
  std::vector<std::vector<double>> starts =
      sample_config_streams(init_density, plan.n, plan.seed, StreamTag::InitialDraw);

  LawIntegrator engine(psi0, potential, plan.law, plan.controls);
  const int dim = engine.frame_at_start().lattice.num_axes();
  const int d = psi0.grid->space_dim();

  LawIntegrator::Batch batch;
  batch.count = plan.n;
  batch.dim = dim;
  batch.positions.resize(plan.n * dim);
  for (std::size_t i = 0; i < plan.n; ++i) {
    if (plan.law.kind == LawKind::Symmetrized) canonicalize_points(starts[i], d);
    std::copy(starts[i].begin(), starts[i].end(), batch.positions.begin() + i * dim);
  }
  batch.abort.assign(plan.n, AbortReason::None);
  batch.abort_time.assign(plan.n, 0.0);
  batch.diag.assign(plan.n, {});

  EnsembleResult result;
  result.law = plan.law;
  result.sample_times = times;
  result.samples.assign(times.size(), {});
  for (auto& table : result.samples) table.resize(plan.n);

  engine.run(
      batch, plan.T, times,
      [&](int idx, double, const LawIntegrator::Batch& b) {
        for (std::size_t w = 0; w < plan.n; ++w) {
          std::vector<double> q(b.positions.begin() + w * dim,
                                b.positions.begin() + (w + 1) * dim);
          if (plan.law.kind == LawKind::Symmetrized && b.abort[w] == AbortReason::None)
            canonicalize_points(q, d);
          result.samples[idx][w] = std::move(q);
        }
      },
      workers);

  result.aborts.assign(batch.abort.begin(), batch.abort.end());
  result.aborted_count = 0;
  for (AbortReason r : result.aborts)
    if (r != AbortReason::None) ++result.aborted_count;
  result.aborted_fraction =
      static_cast<double>(result.aborted_count) / static_cast<double>(plan.n);
  result.valid = result.aborted_fraction <= 0.01;
  result.manifest.seed = plan.seed;
  result.manifest.workers = workers;
  result.manifest.version = version_string();
  return result;
}

namespace {

std::vector<std::vector<double>> live_rows(const std::vector<std::vector<double>>& table,
                                           const std::vector<AbortReason>& aborts) {
  std::vector<std::vector<double>> out;
  out.reserve(table.size());
  for (std::size_t i = 0; i < table.size(); ++i)
    if (aborts[i] == AbortReason::None) out.push_back(table[i]);
  return out;
}

std::vector<double> column_of(const std::vector<std::vector<double>>& rows, int c) {
  std::vector<double> out(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = rows[i][c];
  return out;
}

// mask selecting cells in the canonical (sorted) region of a full lattice
EqualMassBinner::CellMask sorted_region_mask(const Grid& g) {
  const int n = g.num_particles();
  const int d = g.space_dim();
  return [&g, n, d](std::span<const int> idx) {
    for (int i = 0; i + 1 < n; ++i)
      for (int a = 0; a < d; ++a) {
        const double xa = g.axis_coords()[idx[i * d + a]];
        const double xb = g.axis_coords()[idx[(i + 1) * d + a]];
        if (xa < xb) break;
        if (xa > xb) return false;
      }
    return true;
  };
}

SpinorWaveFunction evolve_to(const SpinorWaveFunction& psi0, const Potential& pot,
                             const IntegratorControls& ctl, double t) {
  const long strides = std::lround(t / ctl.stride);
  if (strides == 0) return psi0;
  Propagator prop(psi0.grid, pot);
  return prop.evolve(psi0, ctl.stride / ctl.pde_substeps, static_cast<int>(strides) * ctl.pde_substeps);
}

}  // namespace

std::vector<std::vector<double>> marginal_of(const std::vector<std::vector<double>>& table,
                                             const IndexSet& observables, const IndexSet& carrier,
                                             int space_dim) {
  const std::vector<int> carrier_members = carrier.members();
  std::vector<int> offsets;
  for (int p : observables.members()) {
    auto it = std::find(carrier_members.begin(), carrier_members.end(), p);
    if (it == carrier_members.end())
      throw ValidationError("observable particle not carried by this law's samples");
    offsets.push_back(static_cast<int>(it - carrier_members.begin()) * space_dim);
  }
  std::vector<std::vector<double>> out(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    out[i].reserve(offsets.size() * space_dim);
    for (int off : offsets)
      for (int a = 0; a < space_dim; ++a) out[i].push_back(table[i][off + a]);
  }
  return out;
}

std::vector<std::vector<double>> sorted_coords_of(const std::vector<std::vector<double>>& table,
                                                  int space_dim) {
  std::vector<std::vector<double>> out = table;
  for (auto& row : out) canonicalize_points(row, space_dim);
  return out;
}

CheckReport equivariance_check(const SpinorWaveFunction& psi0, const Potential& potential,
                               const EnsemblePlan& plan, const CheckOptions& options) {
  EnsemblePlan p = plan;
  if (p.sample_times.empty()) p.sample_times = options.sample_times;
  if (p.sample_times.empty()) p.sample_times = {p.T};
  p.workers = options.workers > 0 ? options.workers : p.workers;

  EnsembleResult ens = run_ensemble(psi0, potential, p);

  CheckReport report;
  report.aborted_fraction = ens.aborted_fraction;
  report.valid = ens.valid;
  report.n = p.n;

  const int d = psi0.grid->space_dim();
  const bool unordered = p.law.kind == LawKind::Symmetrized;
  // sampling and binning both compare the law as stated (scale hook only
  // perturbs the transported ensemble, never the reference density)
  LawSpec reference_law = p.law;
  reference_law.velocity_scale = 1.0;

  for (std::size_t ti = 0; ti < p.sample_times.size(); ++ti) {
    const double t = p.sample_times[ti];
    const SpinorWaveFunction psi_t = evolve_to(psi0, potential, p.controls, t);
    const Field<double> reference = law_density(psi_t, reference_law);

    std::vector<std::vector<double>> endpoints = live_rows(ens.samples[ti], ens.aborts);
    const uint64_t fresh_seed = substream_seed(p.seed, StreamTag::Generic, 7000 + ti);
    std::vector<std::vector<double>> fresh =
        sample_config_streams(reference, endpoints.size(), fresh_seed, StreamTag::FreshDraw);
    if (unordered) {
      endpoints = sorted_coords_of(endpoints, d);
      fresh = sorted_coords_of(fresh, d);
    }

    const int dim = static_cast<int>(endpoints.empty() ? 0 : endpoints[0].size());
    for (int c = 0; c < dim; ++c) {
      KsResult ks = ks_two_sample(column_of(endpoints, c), column_of(fresh, c));
      TestLine line;
      line.name = "t=" + std::to_string(t) + " ks coord" + std::to_string(c + 1);
      line.kind = "ks";
      line.statistic = ks.d_stat;
      line.p_value = ks.p_value;
      line.pass = ks.p_value > options.alpha;
      report.tests.push_back(line);
    }

    EqualMassBinner binner =
        unordered
            ? EqualMassBinner::build(reference, options.bins, sorted_region_mask(*psi0.grid))
            : EqualMassBinner::build(reference, options.bins);
    std::vector<std::size_t> counts = bin_counts(binner, endpoints);
    ChiSquareResult c2 = chi_square_binned(counts, binner.masses());
    TestLine line;
    line.name = "t=" + std::to_string(t) + " chi2 joint";
    line.kind = "chi2";
    line.statistic = c2.chi2;
    line.dof = c2.dof;
    line.p_value = c2.p_value;
    line.pass = c2.p_value > options.alpha;
    report.tests.push_back(line);
  }

  report.pass = report.valid;
  for (const TestLine& tl : report.tests) report.pass = report.pass && tl.pass;
  return report;
}

CheckReport equivalence_check(const SpinorWaveFunction& psi0, const Potential& potential,
                              const EquivalenceSpec& spec, const EnsemblePlan& plan,
                              const CheckOptions& options) {
  EnsemblePlan pa = plan;
  pa.law = spec.law_a;
  EnsemblePlan pb = plan;
  pb.law = spec.law_b;
  if (pa.sample_times.empty()) pa.sample_times = {plan.T};
  if (pb.sample_times.empty()) pb.sample_times = {plan.T};

  EnsembleResult ra = run_ensemble(psi0, potential, pa);
  EnsembleResult rb = run_ensemble(psi0, potential, pb);

  CheckReport report;
  report.aborted_fraction = std::max(ra.aborted_fraction, rb.aborted_fraction);
  report.valid = ra.valid && rb.valid;
  report.n = plan.n;

  const int d = psi0.grid->space_dim();
  const int n_particles = psi0.grid->num_particles();
  auto carrier_of = [&](const LawSpec& law) {
    return law.kind == LawKind::Reduced ? law.real_set : IndexSet::full(n_particles);
  };

  for (std::size_t ti = 0; ti < pa.sample_times.size(); ++ti) {
    const double t = pa.sample_times[ti];
    std::vector<std::vector<double>> xa = live_rows(ra.samples[ti], ra.aborts);
    std::vector<std::vector<double>> xb = live_rows(rb.samples[ti], rb.aborts);

    Field<double> reference;  // density of the observable, for the joint bins
    const SpinorWaveFunction psi_t = evolve_to(psi0, potential, plan.controls, t);
    if (spec.unordered) {
      xa = sorted_coords_of(xa, d);
      xb = sorted_coords_of(xb, d);
      reference = symmetrized_density(psi_t).normalized;
    } else {
      xa = marginal_of(xa, spec.observables, carrier_of(spec.law_a), d);
      xb = marginal_of(xb, spec.observables, carrier_of(spec.law_b), d);
      reference = reduced_density(psi_t, spec.observables);
    }

    const int dim = static_cast<int>(xa.empty() ? 0 : xa[0].size());
    for (int c = 0; c < dim; ++c) {
      KsResult ks = ks_two_sample(column_of(xa, c), column_of(xb, c));
      TestLine line;
      line.name = "t=" + std::to_string(t) + " ks coord" + std::to_string(c + 1);
      line.kind = "ks";
      line.statistic = ks.d_stat;
      line.p_value = ks.p_value;
      line.pass = ks.p_value > options.alpha;
      report.tests.push_back(line);
    }

    EqualMassBinner binner =
        spec.unordered
            ? EqualMassBinner::build(reference, options.bins, sorted_region_mask(*psi0.grid))
            : EqualMassBinner::build(reference, options.bins);
    ChiSquareResult c2 = chi_square_two_sample(bin_counts(binner, xa), bin_counts(binner, xb));
    TestLine line;
    line.name = "t=" + std::to_string(t) + " chi2 joint";
    line.kind = "chi2";
    line.statistic = c2.chi2;
    line.dof = c2.dof;
    line.p_value = c2.p_value;
    line.pass = c2.p_value > options.alpha;
    report.tests.push_back(line);
  }

  report.pass = report.valid;
  for (const TestLine& tl : report.tests) report.pass = report.pass && tl.pass;
  return report;
}

JumpCheckReport jump_process_check(const SpinorWaveFunction& psi0, const Potential& potential,
                                   const RegionPartition& partition, double T, std::size_t n,
                                   const JumpProcessControls& controls, uint64_t seed,
                                   const CheckOptions& options) {
  std::vector<double> times = options.sample_times;
  if (times.empty()) times = {0.0, T / 2, T};

  JumpCheckReport out;
  const int workers = options.workers > 0 ? options.workers : default_worker_count();
  out.process =
      run_jump_ensemble(psi0, potential, partition, T, n, controls, seed, times, workers);
  out.oracle = projection_oracle(psi0, potential, partition, T, n, controls.base,
                                 substream_seed(seed, StreamTag::Generic, 11), times, workers);

  CheckReport& report = out.report;
  report.n = n;
  report.aborted_fraction = std::max(out.process.aborted_fraction, out.oracle.aborted_fraction);
  report.valid = out.process.aborted_fraction <= 0.01 && out.oracle.aborted_fraction <= 0.01;

  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    const double t = times[ti];
    const SpinorWaveFunction psi_t = evolve_to(psi0, potential, controls.base, t);

    const std::vector<double> masses = sector_masses(psi_t, partition);
    double total = 0;
    for (double m : masses) total += m;
    out.sector_mass_error.push_back(std::abs(1.0 - total));

    SectorBinning binning(psi_t, partition, options.bins);

    std::vector<ProjectedState> live_proc, live_orac;
    for (std::size_t w = 0; w < n; ++w) {
      if (out.process.aborts[w] == AbortReason::None)
        live_proc.push_back(out.process.states[ti][w]);
      if (out.oracle.aborts[w] == AbortReason::None)
        live_orac.push_back(out.oracle.states[ti][w]);
    }

    const std::vector<std::size_t> counts_proc = binning.counts(live_proc);
    const std::vector<std::size_t> counts_orac = binning.counts(live_orac);

    {
      ChiSquareResult c2 = chi_square_binned(counts_proc, binning.expected_masses());
      TestLine line;
      line.name = "t=" + std::to_string(t) + " chi2 vs fiber density";
      line.kind = "chi2";
      line.statistic = c2.chi2;
      line.dof = c2.dof;
      line.p_value = c2.p_value;
      line.pass = c2.p_value > options.alpha;
      report.tests.push_back(line);
    }
    {
      ChiSquareResult c2 = chi_square_two_sample(counts_proc, counts_orac);
      TestLine line;
      line.name = "t=" + std::to_string(t) + " chi2 vs projection oracle";
      line.kind = "chi2";
      line.statistic = c2.chi2;
      line.dof = c2.dof;
      line.p_value = c2.p_value;
      line.pass = c2.p_value > options.alpha;
      report.tests.push_back(line);
    }
  }

  report.pass = report.valid;
  for (const TestLine& tl : report.tests) report.pass = report.pass && tl.pass;
  return out;
}

}  // namespace pilotwave
