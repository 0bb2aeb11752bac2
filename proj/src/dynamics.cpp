#include "pilotwave/dynamics.hpp"

#include <algorithm>
#include <cmath>

namespace pilotwave {

const char* to_string(LawKind k) {
  switch (k) {
    case LawKind::Full: return "full";
    case LawKind::Reduced: return "reduced";
    case LawKind::Symmetrized: return "symmetrized";
  }
  return "unknown";
}

// --- frames ------------------------------------------------------------

namespace {

LawFrame build_full_frame(const SpinorWaveFunction& psi) {
  LawFrame f;
  f.lattice = Lattice::full(psi.grid);
  f.slots = psi.grid->num_particles();
  f.time = psi.time;
  FieldBundle fb = density_current(psi);
  f.denom = std::move(fb.rho);
  f.numer = std::move(fb.currents);
  return f;
}

LawFrame build_reduced_frame(const SpinorWaveFunction& psi, const IndexSet& real_set) {
  if (real_set.is_empty()) throw ValidationError("reduced law requires a nonempty real set");
  const Grid& g = *psi.grid;
  const int ell = psi.spin_dim();
  const Lattice full = Lattice::full(psi.grid);
  const Lattice reduced(psi.grid, real_set.members());

  LawFrame f;
  f.lattice = reduced;
  f.slots = real_set.count();
  f.time = psi.time;
  f.denom = Field<double>(reduced);
  f.numer.assign(reduced.num_axes(), Field<double>(reduced));

  std::vector<int> kept_axes;  // full-grid axes retained, in reduced order
  for (int p : real_set.members())
    for (int a = 0; a < g.space_dim(); ++a) kept_axes.push_back(g.axis_of(p, a));
  std::vector<std::size_t> rstride(g.num_axes(), 0);
  std::vector<bool> kept(g.num_axes(), false);
  for (std::size_t ra = 0; ra < kept_axes.size(); ++ra) {
    rstride[kept_axes[ra]] = reduced.stride(static_cast<int>(ra));
    kept[kept_axes[ra]] = true;
  }
  const double vol = std::pow(g.dx(), g.num_axes() - reduced.num_axes());

  SpectralDerivatives grad(psi);
  std::vector<int> idx(g.num_axes());
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    full.decode(c, idx);
    std::size_t r = 0;
    for (int a = 0; a < g.num_axes(); ++a)
      if (kept[a]) r += rstride[a] * static_cast<std::size_t>(idx[a]);
    double rho = 0;
    for (int s = 0; s < ell; ++s) rho += std::norm(psi.amp[c * ell + s]);
    f.denom[r] += rho * vol;
    for (std::size_t ra = 0; ra < kept_axes.size(); ++ra) {
      const int a = kept_axes[ra];
      const double scale = g.params().hbar / g.mass_for_axis(a);
      const std::vector<cxd>& da = grad.axis(a);
      double im = 0;
      for (int s = 0; s < ell; ++s)
        im += std::imag(std::conj(psi.amp[c * ell + s]) * da[c * ell + s]);
      f.numer[ra][r] += scale * im * vol;
    }
  }
  return f;
}

LawFrame build_symmetrized_frame(const SpinorWaveFunction& psi) {
  const Grid& g = *psi.grid;
  if (g.num_particles() > 5)
    throw ResourceError("permutation sum capped at N = 5 particles");
  const int d = g.space_dim();
  const Lattice lat = Lattice::full(psi.grid);
  FieldBundle fb = density_current(psi);

  LawFrame f;
  f.lattice = lat;
  f.slots = g.num_particles();
  f.time = psi.time;
  f.denom = Field<double>(lat);
  f.numer.assign(lat.num_axes(), Field<double>(lat));

  std::vector<int> idx(g.num_axes());
  for (const Permutation& sigma : Permutation::enumerate(g.num_particles())) {
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
      const std::size_t src = permute_cell(sigma, lat, c, idx);
      f.denom[c] += fb.rho[src];
      for (int i = 0; i < f.slots; ++i)
        for (int a = 0; a < d; ++a)
          f.numer[i * d + a][c] += fb.currents[sigma(i) * d + a][src];
    }
  }
  return f;
}

}  // namespace

LawFrame build_law_frame(const SpinorWaveFunction& psi, const LawSpec& law) {
  LawFrame f;
  switch (law.kind) {
    case LawKind::Full: f = build_full_frame(psi); break;
    case LawKind::Reduced: f = build_reduced_frame(psi, law.real_set); break;
    case LawKind::Symmetrized: f = build_symmetrized_frame(psi); break;
  }
  if (law.velocity_scale != 1.0)
    for (Field<double>& n : f.numer)
      for (double& v : n.data()) v *= law.velocity_scale;
  return f;
}

// --- interpolation stencil ----------------------------------------------

namespace {

constexpr int kMaxStencilAxes = 8;

struct InterpStencil {
  int corners = 0;
  std::size_t offset[1 << kMaxStencilAxes];
  double weight[1 << kMaxStencilAxes];

  // false when the point lies outside the box
  bool build(const Lattice& lat, std::span<const double> point) {
    const int axes = lat.num_axes();
    if (axes > kMaxStencilAxes) throw ResourceError("velocity evaluation capped at 8 axes");
    const Grid& g = *lat.grid();
    const int m = g.points_per_axis();
    int base[kMaxStencilAxes];
    double frac[kMaxStencilAxes];
    for (int a = 0; a < axes; ++a) {
      const double x = point[a];
      if (!g.inside_box(x)) return false;
      double u = (x - g.x_min()) / g.dx();
      int i0 = static_cast<int>(u);
      if (i0 >= m) i0 = m - 1;
      base[a] = i0;
      frac[a] = u - i0;
    }
    corners = 1 << axes;
    for (int c = 0; c < corners; ++c) {
      double w = 1.0;
      std::size_t flat = 0;
      for (int a = 0; a < axes; ++a) {
        const bool hi = (c >> a) & 1;
        w *= hi ? frac[a] : 1.0 - frac[a];
        int ia = base[a] + (hi ? 1 : 0);
        if (ia == m) ia = 0;
        flat += lat.stride(a) * static_cast<std::size_t>(ia);
      }
      offset[c] = flat;
      weight[c] = w;
    }
    return true;
  }

  double apply(const Field<double>& f) const {
    double acc = 0;
    for (int c = 0; c < corners; ++c) acc += f[offset[c]] * weight[c];
    return acc;
  }
};

}  // namespace

EvalStatus lerp_velocity_fields(const Lattice& lat, const Field<double>& denom_a,
                                const Field<double>& denom_b,
                                std::span<const Field<double>> numer_a,
                                std::span<const Field<double>> numer_b, double w,
                                std::span<const double> point, std::span<double> v_out,
                                double eps_node, double* denom_out) {
  InterpStencil st;
  if (!st.build(lat, point)) return EvalStatus::OutsideBox;
  const double u = 1.0 - w;
  const double den =
      (w == 0.0) ? st.apply(denom_a) : u * st.apply(denom_a) + w * st.apply(denom_b);
  if (denom_out) *denom_out = den;
  if (!(den > eps_node)) return EvalStatus::NodeFloor;
  for (std::size_t i = 0; i < numer_a.size(); ++i) {
    const double num = (w == 0.0) ? st.apply(numer_a[i])
                                  : u * st.apply(numer_a[i]) + w * st.apply(numer_b[i]);
    v_out[i] = num / den;
  }
  return EvalStatus::Ok;
}

EvalStatus lerp_velocity(const LawFrame& a, const LawFrame& b, double w,
                         std::span<const double> point, std::span<double> v_out, double eps_node,
                         double* denom_out) {
  return lerp_velocity_fields(a.lattice, a.denom, b.denom, a.numer, b.numer, w, point, v_out,
                              eps_node, denom_out);
}

std::vector<double> frame_velocity(const LawFrame& frame, std::span<const double> point,
                                   double eps_node) {
  std::vector<double> v(frame.numer.size());
  double den = 0;
  switch (lerp_velocity(frame, frame, 0.0, point, v, eps_node, &den)) {
    case EvalStatus::Ok:
      return v;
    case EvalStatus::OutsideBox:
      throw OutOfDomainError("velocity query outside the box");
    case EvalStatus::NodeFloor:
      throw NodeProximityError("velocity undefined near a node of the wavefunction (|denominator| = " +
                                   std::to_string(den) + ")",
                               std::vector<double>(point.begin(), point.end()), frame.time);
  }
  return v;
}

std::vector<double> velocity_full(const SpinorWaveFunction& psi, const LabeledConfig& q) {
  return frame_velocity(build_law_frame(psi, LawSpec::full()), q.q);
}

std::vector<double> velocity_reduced(const SpinorWaveFunction& psi, const IndexSet& real_set,
                                     std::span<const double> coords) {
  return frame_velocity(build_law_frame(psi, LawSpec::reduced(real_set)), coords);
}

std::vector<double> velocity_symmetrized(const SpinorWaveFunction& psi, const UnorderedConfig& q) {
  return frame_velocity(build_law_frame(psi, LawSpec::symmetrized()), q.pts);
}

// --- integrator ----------------------------------------------------------

namespace {

struct StrideOutcome {
  AbortReason abort = AbortReason::None;
  double abort_time = 0.0;
};

// Advance one walker across [t0, t0 + stride] against frames A and B.
StrideOutcome advance_stride(std::span<double> q, const LawFrame& A, const LawFrame& B, double t0,
                             double stride, const IntegratorControls& ctl, double dx,
                             TrajectoryDiagnostics& diag) {
  const int dim = static_cast<int>(q.size());
  const double h_min = stride / std::pow(2.0, ctl.max_halvings);
  const double max_disp = ctl.eta * dx;

  double k1[kMaxStencilAxes], k2[kMaxStencilAxes], k3[kMaxStencilAxes], k4[kMaxStencilAxes];
  double tmp[kMaxStencilAxes];

  double t = 0;
  double h = (ctl.fixed_substeps > 0) ? stride / ctl.fixed_substeps : stride;

  auto eval = [&](std::span<const double> pt, double tau, std::span<double> v) {
    double den;
    EvalStatus s = lerp_velocity(A, B, tau / stride, pt, v, ctl.eps_node, &den);
    if (s != EvalStatus::OutsideBox && den < diag.min_denominator) diag.min_denominator = den;
    return s;
  };

  while (t < stride - 1e-15 * stride) {
    h = std::min(h, stride - t);
    EvalStatus status = EvalStatus::Ok;
    bool too_far = false;

    status = eval(q, t, std::span(k1, dim));
    if (status == EvalStatus::Ok) {
      for (int i = 0; i < dim; ++i) tmp[i] = q[i] + 0.5 * h * k1[i];
      status = eval(std::span(tmp, dim), t + 0.5 * h, std::span(k2, dim));
    }
    if (status == EvalStatus::Ok) {
      for (int i = 0; i < dim; ++i) tmp[i] = q[i] + 0.5 * h * k2[i];
      status = eval(std::span(tmp, dim), t + 0.5 * h, std::span(k3, dim));
    }
    if (status == EvalStatus::Ok) {
      for (int i = 0; i < dim; ++i) tmp[i] = q[i] + h * k3[i];
      status = eval(std::span(tmp, dim), t + h, std::span(k4, dim));
    }
    if (status == EvalStatus::Ok) {
      for (int i = 0; i < dim; ++i) {
        tmp[i] = (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        if (std::abs(tmp[i]) > max_disp) too_far = true;
      }
    }

    if (status != EvalStatus::Ok || (too_far && ctl.fixed_substeps == 0)) {
      if (ctl.fixed_substeps > 0 || h * 0.5 < h_min) {
        AbortReason r = (status == EvalStatus::OutsideBox) ? AbortReason::LeftBox
                                                           : AbortReason::NodeProximity;
        return {r, t0 + t};
      }
      h *= 0.5;
      ++diag.halvings;
      continue;
    }

    for (int i = 0; i < dim; ++i) q[i] += tmp[i];
    t += h;
    ++diag.substeps;
    if (ctl.fixed_substeps == 0) h = std::min(h * 2.0, stride);
  }
  return {};
}

void validate_controls(const IntegratorControls& c) {
  if (!(c.stride > 0)) throw ValidationError("controls.stride must be positive");
  if (c.pde_substeps < 1) throw ValidationError("controls.pde_substeps must be >= 1");
  if (!(c.eta > 0)) throw ValidationError("controls.eta must be positive");
}

}  // namespace

struct LawIntegrator::Impl {
  Potential potential;
  LawSpec law;
  IntegratorControls controls;
  std::unique_ptr<Propagator> prop;
  SpinorWaveFunction psi;
  LawFrame frame;
  double elapsed = 0.0;
};

LawIntegrator::LawIntegrator(SpinorWaveFunction psi0, const Potential& potential, LawSpec law,
                             IntegratorControls controls) {
  validate_controls(controls);
  impl_ = std::make_unique<Impl>();
  impl_->potential = potential;
  impl_->law = law;
  impl_->controls = controls;
  impl_->prop = std::make_unique<Propagator>(psi0.grid, potential);
  impl_->psi = std::move(psi0);
  impl_->frame = build_law_frame(impl_->psi, law);
}

LawIntegrator::~LawIntegrator() = default;

const LawFrame& LawIntegrator::frame_at_start() const { return impl_->frame; }

double LawIntegrator::current_time() const { return impl_->psi.time; }

void LawIntegrator::run(Batch& batch, double T,
                        std::span<const double> record_times,
                        const std::function<void(int, double, const Batch&)>& record,
                        int workers) {
  const IntegratorControls& ctl = impl_->controls;
  const double stride = ctl.stride;
  if (T < 0) throw ValidationError("T must be nonnegative");
  const long K = std::lround(T / stride);
  if (std::abs(K * stride - T) > 1e-9 * std::max(1.0, T))
    throw ValidationError("T must be a whole number of strides");

  // map record times onto stride boundaries
  std::vector<long> record_stride(record_times.size());
  for (std::size_t i = 0; i < record_times.size(); ++i) {
    const long k = std::lround(record_times[i] / stride);
    if (k < 0 || k > K || std::abs(k * stride - record_times[i]) > 1e-9 * std::max(1.0, T))
      throw ValidationError("sample times must be stride boundaries within [0, T]");
    record_stride[i] = k;
  }

  const double dx = impl_->psi.grid->dx();
  const double dt = stride / ctl.pde_substeps;

  auto fire_records = [&](long k, double t) {
    for (std::size_t i = 0; i < record_stride.size(); ++i)
      if (record_stride[i] == k) record(static_cast<int>(i), t, batch);
  };

  fire_records(0, 0.0);
  for (long k = 0; k < K; ++k) {
    SpinorWaveFunction next = impl_->prop->evolve(impl_->psi, dt, ctl.pde_substeps);
    LawFrame frame_next = build_law_frame(next, impl_->law);
    const double t0 = k * stride;

    const LawFrame& A = impl_->frame;
    const LawFrame& B = frame_next;
    parallel_for_chunks(batch.count, workers, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t w = lo; w < hi; ++w) {
        if (batch.abort[w] != AbortReason::None) continue;
        std::span<double> q(batch.positions.data() + w * batch.dim, batch.dim);
        StrideOutcome out = advance_stride(q, A, B, t0, stride, ctl, dx, batch.diag[w]);
        if (out.abort != AbortReason::None) {
          batch.abort[w] = out.abort;
          batch.abort_time[w] = out.abort_time;
        }
      }
    });

    impl_->psi = std::move(next);
    impl_->frame = std::move(frame_next);
    impl_->elapsed = (k + 1) * stride;
    fire_records(k + 1, impl_->elapsed);
  }
}

// --- single-trajectory wrapper -------------------------------------------

Trajectory integrate(const SpinorWaveFunction& psi0, const Potential& potential,
                     const LawSpec& law, std::span<const double> start, double T,
                     const IntegratorControls& controls) {
  LawIntegrator engine(psi0, potential, law, controls);
  const LawFrame& f0 = engine.frame_at_start();
  const int dim = f0.lattice.num_axes();
  if (static_cast<int>(start.size()) != dim)
    throw ValidationError("start configuration has wrong dimension");
  if (!psi0.grid->inside_box(start)) throw OutOfDomainError("start configuration outside the box");

  std::vector<double> q0(start.begin(), start.end());
  if (law.kind == LawKind::Symmetrized) canonicalize_points(q0, psi0.grid->space_dim());

  LawIntegrator::Batch batch;
  batch.count = 1;
  batch.dim = dim;
  batch.positions = q0;
  batch.abort.assign(1, AbortReason::None);
  batch.abort_time.assign(1, 0.0);
  batch.diag.assign(1, {});

  const long K = std::lround(T / controls.stride);
  std::vector<double> times(K + 1);
  for (long k = 0; k <= K; ++k) times[k] = k * controls.stride;

  Trajectory traj;
  traj.law = law;
  engine.run(
      batch, T, times,
      [&](int, double t, const LawIntegrator::Batch& b) {
        if (b.abort[0] != AbortReason::None) return;
        std::vector<double> q(b.positions.begin(), b.positions.begin() + dim);
        if (law.kind == LawKind::Symmetrized) canonicalize_points(q, psi0.grid->space_dim());
        traj.times.push_back(t);
        traj.configs.push_back(std::move(q));
      },
      1);

  traj.abort = batch.abort[0];
  traj.abort_time = batch.abort_time[0];
  traj.diag = batch.diag[0];
  return traj;
}

RelabelReport relabel_then_integrate_check(const SpinorWaveFunction& psi0,
                                           const Potential& potential, const LabeledConfig& q0,
                                           const Permutation& sigma, double T,
                                           const IntegratorControls& controls, double tolerance) {
  const int d = psi0.grid->space_dim();
  LabeledConfig qp = apply_permutation(sigma, q0, d);

  Trajectory a = integrate(psi0, potential, LawSpec::symmetrized(), q0.q, T, controls);
  Trajectory b = integrate(psi0, potential, LawSpec::symmetrized(), qp.q, T, controls);

  RelabelReport report;
  if (a.abort != AbortReason::None || b.abort != AbortReason::None ||
      a.configs.size() != b.configs.size()) {
    report.coincide = false;
    report.max_deviation = std::numeric_limits<double>::infinity();
    return report;
  }
  double worst = 0;
  for (std::size_t t = 0; t < a.configs.size(); ++t)
    for (std::size_t i = 0; i < a.configs[t].size(); ++i)
      worst = std::max(worst, std::abs(a.configs[t][i] - b.configs[t][i]));
  report.max_deviation = worst;
  report.coincide = worst <= tolerance;
  return report;
}

}  // namespace pilotwave
