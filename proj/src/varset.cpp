#include "pilotwave/varset.hpp"

#include <algorithm>
#include <cmath>

#include "pilotwave/sampling.hpp"

namespace pilotwave {

Region Region::half_line(double lo) { return {lo, std::numeric_limits<double>::infinity()}; }
Region Region::interval(double lo, double hi) { return {lo, hi}; }
Region Region::whole() { return {}; }

RegionPartition::RegionPartition(GridPtr grid, Region region)
    : grid_(std::move(grid)), region_(region) {
  if (grid_->space_dim() != 1)
    throw ValidationError("region partitions are implemented for space_dim = 1");
  if (!(region.hi > region.lo)) throw ValidationError("region must have positive extent");
  if (std::isfinite(region.lo) && region.lo > grid_->x_min() && region.lo < grid_->x_max())
    faces_.push_back({region.lo, +1.0});
  if (std::isfinite(region.hi) && region.hi > grid_->x_min() && region.hi < grid_->x_max())
    faces_.push_back({region.hi, -1.0});
}

IndexSet RegionPartition::classify(std::span<const double> q) const {
  IndexSet s;
  uint32_t bits = 0;
  const int n = static_cast<int>(q.size());
  for (int i = 0; i < n; ++i)
    if (region_.contains(q[i])) bits |= 1u << i;
  return IndexSet::from_bitmask(bits);
}

ProjectedState project(const RegionPartition& partition, const LabeledConfig& q, bool* perturbed) {
  const double nudge = 0.5e-9 * partition.grid()->dx();
  std::vector<double> pos = q.q;
  bool did_perturb = false;
  for (double& x : pos) {
    for (const BoundaryFace& f : partition.faces()) {
      if (x == f.position) {
        // boundary-exact input: measure zero; push just inside R, matching
        // the half-open membership convention
        x += f.inward_normal * nudge;
        did_perturb = true;
      }
    }
  }
  if (perturbed) *perturbed = did_perturb;

  ProjectedState s;
  s.time = q.time;
  s.real_set = partition.classify(pos);
  for (int p : s.real_set.members()) s.coords.push_back(pos[p - 1]);
  return s;
}

// --- restricted contractions -------------------------------------------------

namespace {

// Riemann contraction of per-cell values over all axes of particles not in
// `keep`, with integrated axes restricted to node coordinates outside R.
Field<double> restricted_contraction(const GridPtr& grid, std::span<const double> values,
                                     const std::vector<int>& keep,
                                     const RegionPartition& part) {
  const Grid& g = *grid;
  const Lattice full = Lattice::full(grid);
  const Lattice reduced(grid, keep);

  std::vector<std::size_t> rstride(g.num_axes(), 0);
  std::vector<bool> kept(g.num_axes(), false);
  {
    int ra = 0;
    for (int p : keep)
      for (int a = 0; a < g.space_dim(); ++a) {
        rstride[g.axis_of(p, a)] = reduced.stride(ra);
        kept[g.axis_of(p, a)] = true;
        ++ra;
      }
  }
  const double vol = std::pow(g.dx(), g.num_axes() - reduced.num_axes());

  Field<double> out(reduced);
  std::vector<int> idx(g.num_axes());
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    full.decode(c, idx);
    bool allowed = true;
    std::size_t r = 0;
    for (int a = 0; a < g.num_axes() && allowed; ++a) {
      if (kept[a]) {
        r += rstride[a] * static_cast<std::size_t>(idx[a]);
      } else {
        allowed = !part.region().contains(g.axis_coords()[idx[a]]);
      }
    }
    if (allowed) out[r] += values[c] * vol;
  }
  return out;
}

// Linear slice of a field along one particle's axis (d = 1).
Field<double> slice_particle_axis(const Field<double>& f, int particle, double x) {
  const Lattice& in = f.lattice();
  const Grid& g = *in.grid();
  std::vector<int> keep;
  int sliced_axis = -1;
  for (std::size_t i = 0; i < in.particles().size(); ++i) {
    if (in.particles()[i] == particle)
      sliced_axis = static_cast<int>(i);
    else
      keep.push_back(in.particles()[i]);
  }
  if (sliced_axis < 0) throw ValidationError("slice particle not on lattice");

  const int m = g.points_per_axis();
  double u = (x - g.x_min()) / g.dx();
  int i0 = static_cast<int>(u);
  if (i0 >= m) i0 = m - 1;
  const double frac = u - i0;
  const int i1 = (i0 + 1) % m;

  Lattice out_lat(in.grid(), keep);
  Field<double> out(out_lat);
  std::vector<int> idx_out(out_lat.num_axes()), idx_in(in.num_axes());
  for (std::size_t c = 0; c < out_lat.num_cells(); ++c) {
    out_lat.decode(c, idx_out);
    for (int a = 0, b = 0; a < in.num_axes(); ++a)
      if (a != sliced_axis) idx_in[a] = idx_out[b++];
    idx_in[sliced_axis] = i0;
    const double v0 = f[in.encode(idx_in)];
    idx_in[sliced_axis] = i1;
    const double v1 = f[in.encode(idx_in)];
    out[c] = (1.0 - frac) * v0 + frac * v1;
  }
  return out;
}

struct CellBundles {
  std::vector<double> rho;                   // per cell, spin contracted
  std::vector<std::vector<double>> current;  // per axis, per cell
};

CellBundles cell_bundles(const SpinorWaveFunction& psi) {
  const Grid& g = *psi.grid;
  const int ell = psi.spin_dim();
  CellBundles b;
  b.rho.resize(g.num_cells());
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    double acc = 0;
    for (int s = 0; s < ell; ++s) acc += std::norm(psi.amp[c * ell + s]);
    b.rho[c] = acc;
  }
  SpectralDerivatives grad(psi);
  b.current.resize(g.num_axes());
  for (int a = 0; a < g.num_axes(); ++a) {
    b.current[a].resize(g.num_cells());
    const double scale = g.params().hbar / g.mass_for_axis(a);
    const std::vector<cxd>& da = grad.axis(a);
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
      double acc = 0;
      for (int s = 0; s < ell; ++s)
        acc += std::imag(std::conj(psi.amp[c * ell + s]) * da[c * ell + s]);
      b.current[a][c] = scale * acc;
    }
  }
  return b;
}

SectorFrame build_sector_frame_from(const CellBundles& bundles, const GridPtr& grid,
                                    const RegionPartition& part, const IndexSet& real_set,
                                    double time) {
  const Grid& g = *grid;
  SectorFrame f;
  f.real_set = real_set;
  f.time = time;
  const std::vector<int> keep = real_set.members();
  f.lattice = Lattice(grid, keep);
  f.denom = restricted_contraction(grid, bundles.rho, keep, part);
  for (int p : keep)
    for (int a = 0; a < g.space_dim(); ++a)
      f.numer.push_back(
          restricted_contraction(grid, bundles.current[g.axis_of(p, a)], keep, part));

  const IndexSet unreal = real_set.complement(g.num_particles());
  for (int k : unreal.members()) {
    std::vector<int> keep_plus = keep;
    keep_plus.insert(std::lower_bound(keep_plus.begin(), keep_plus.end(), k), k);
    const Field<double> with_k =
        restricted_contraction(grid, bundles.current[g.axis_of(k, 0)], keep_plus, part);
    for (std::size_t fi = 0; fi < part.faces().size(); ++fi) {
      const BoundaryFace& face = part.faces()[fi];
      Field<double> flux = slice_particle_axis(with_k, k, face.position);
      for (double& v : flux.data()) v *= face.inward_normal;
      f.fluxes.push_back({k, static_cast<int>(fi), std::move(flux)});
    }
  }
  return f;
}

}  // namespace

SectorFrame build_sector_frame(const SpinorWaveFunction& psi, const RegionPartition& partition,
                               const IndexSet& real_set) {
  return build_sector_frame_from(cell_bundles(psi), psi.grid, partition, real_set, psi.time);
}

std::vector<SectorFrame> build_all_sector_frames(const SpinorWaveFunction& psi,
                                                 const RegionPartition& partition) {
  const int n = psi.grid->num_particles();
  if (n > 16) throw ResourceError("sector enumeration capped at 16 particles");
  const CellBundles bundles = cell_bundles(psi);
  std::vector<SectorFrame> frames;
  frames.reserve(std::size_t(1) << n);
  for (uint32_t mask = 0; mask < (1u << n); ++mask)
    frames.push_back(build_sector_frame_from(bundles, psi.grid, partition,
                                             IndexSet::from_bitmask(mask), psi.time));
  return frames;
}

double fiber_density(const SpinorWaveFunction& psi, const RegionPartition& partition,
                     const ProjectedState& state) {
  const Grid& g = *psi.grid;
  const int ell = psi.spin_dim();
  std::vector<double> rho(g.num_cells());
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    double acc = 0;
    for (int s = 0; s < ell; ++s) acc += std::norm(psi.amp[c * ell + s]);
    rho[c] = acc;
  }
  Field<double> field =
      restricted_contraction(psi.grid, rho, state.real_set.members(), partition);
  return field.interpolate(state.coords);
}

std::vector<double> fiber_current(const SpinorWaveFunction& psi, const RegionPartition& partition,
                                  const ProjectedState& state, int particle) {
  if (!state.real_set.contains(particle))
    throw ValidationError("fiber current is defined for real particles only");
  const Grid& g = *psi.grid;
  const CellBundles bundles = cell_bundles(psi);
  std::vector<double> out;
  for (int a = 0; a < g.space_dim(); ++a) {
    Field<double> field = restricted_contraction(
        psi.grid, bundles.current[g.axis_of(particle, a)], state.real_set.members(), partition);
    out.push_back(field.interpolate(state.coords));
  }
  return out;
}

std::vector<double> sector_masses(const SpinorWaveFunction& psi,
                                  const RegionPartition& partition) {
  const Grid& g = *psi.grid;
  const int n = g.num_particles();
  const int ell = psi.spin_dim();
  const Lattice lat = Lattice::full(psi.grid);
  std::vector<double> masses(std::size_t(1) << n, 0.0);
  std::vector<int> idx(g.num_axes());
  std::vector<double> pos(n);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    lat.decode(c, idx);
    for (int i = 0; i < n; ++i) pos[i] = g.axis_coords()[idx[i * g.space_dim()]];
    double acc = 0;
    for (int s = 0; s < ell; ++s) acc += std::norm(psi.amp[c * ell + s]);
    masses[partition.classify(pos).bitmask()] += acc * g.cell_volume();
  }
  return masses;
}

double jump_rate(const SpinorWaveFunction& psi, const RegionPartition& partition,
                 const ProjectedState& state, const Crossing& crossing) {
  if (crossing.face_index < 0 || crossing.face_index >= static_cast<int>(partition.faces().size()))
    throw ValidationError("unknown boundary face");
  const BoundaryFace& face = partition.faces()[crossing.face_index];

  if (state.real_set.contains(crossing.particle)) {
    // annihilation: the flow itself carries a real particle to the boundary,
    // a sure transition there and impossible elsewhere
    const int off = Lattice(psi.grid, state.real_set.members()).coord_offset_of(crossing.particle);
    return (state.coords[off] == face.position) ? std::numeric_limits<double>::infinity() : 0.0;
  }

  SectorFrame frame = build_sector_frame(psi, partition, state.real_set);
  const double den = frame.denom.lattice().num_axes() == 0
                         ? frame.denom[0]
                         : frame.denom.interpolate(state.coords);
  if (!(den > kNodeFloor))
    throw NodeProximityError("fiber density under the node floor", state.coords, psi.time);
  for (const SectorFrame::CreationFlux& fx : frame.fluxes) {
    if (fx.particle != crossing.particle || fx.face_index != crossing.face_index) continue;
    const double flux = fx.flux.lattice().num_axes() == 0 ? fx.flux[0]
                                                          : fx.flux.interpolate(state.coords);
    return std::max(0.0, flux) / den;
  }
  return 0.0;  // no face entry (e.g. R covers the whole box)
}

// --- jump-process simulation ---------------------------------------------

namespace {

struct JumpWalker {
  uint32_t sector = 0;
  std::vector<double> coords;
  std::mt19937_64 rng;
  AbortReason abort = AbortReason::None;
  double min_denominator = std::numeric_limits<double>::infinity();
  double max_rate_prev = 0.0;  // over the previous stride
  double max_rate_cur = 0.0;
  std::vector<JumpEvent> events;
};

struct SectorFrameSet {
  std::vector<SectorFrame> frames;
  double time = 0.0;
};

// velocity of the sector flow, frames lerped at weight w
EvalStatus sector_velocity(const SectorFrame& a, const SectorFrame& b, double w,
                           std::span<const double> pt, std::span<double> v, double eps,
                           double* den_out) {
  if (a.lattice.num_axes() == 0) {
    if (den_out) *den_out = (1.0 - w) * a.denom[0] + w * b.denom[0];
    return EvalStatus::Ok;
  }
  return lerp_velocity_fields(a.lattice, a.denom, b.denom, a.numer, b.numer, w, pt, v, eps,
                              den_out);
}

// total creation rate and per-candidate rates at (pt, w)
double creation_rates(const SectorFrame& a, const SectorFrame& b, double w,
                      std::span<const double> pt, double den, std::vector<double>& rates) {
  rates.assign(a.fluxes.size(), 0.0);
  double total = 0;
  for (std::size_t i = 0; i < a.fluxes.size(); ++i) {
    const Field<double>& fa = a.fluxes[i].flux;
    const Field<double>& fb = b.fluxes[i].flux;
    const double flux = fa.lattice().num_axes() == 0
                            ? (1.0 - w) * fa[0] + w * fb[0]
                            : (1.0 - w) * fa.interpolate(pt) + w * fb.interpolate(pt);
    rates[i] = std::max(0.0, flux) / den;
    total += rates[i];
  }
  return total;
}

struct CrossingHit {
  bool hit = false;
  double fraction = 1.0;  // along the substep increment
  int slot = -1;          // which real coordinate crossed
  int face_index = -1;
};

CrossingHit earliest_exit(const RegionPartition& part, std::span<const double> q_old,
                          std::span<const double> dq) {
  CrossingHit best;
  for (std::size_t i = 0; i < q_old.size(); ++i) {
    const double x0 = q_old[i], x1 = q_old[i] + dq[i];
    if (part.region().contains(x1)) continue;  // still inside
    for (std::size_t f = 0; f < part.faces().size(); ++f) {
      const double a = part.faces()[f].position;
      if ((x0 - a) * (x1 - a) > 0) continue;  // did not straddle this face
      const double frac = (x1 != x0) ? (a - x0) / (x1 - x0) : 0.0;
      if (!best.hit || frac < best.fraction) {
        best = {true, std::clamp(frac, 0.0, 1.0), static_cast<int>(i), static_cast<int>(f)};
      }
    }
  }
  return best;
}

void advance_jump_stride(JumpWalker& w, const SectorFrameSet& A, const SectorFrameSet& B,
                         double t0, double stride, const JumpProcessControls& ctl, double dx,
                         const RegionPartition& part) {
  const IntegratorControls& base = ctl.base;
  const double h_min = stride / std::pow(2.0, base.max_halvings);
  const double max_disp = base.eta * dx;
  w.max_rate_cur = 0.0;
  double envelope = std::max(ctl.rate_bound_floor, ctl.bound_safety * w.max_rate_prev);

  double t = 0;
  double h = (base.fixed_substeps > 0) ? stride / base.fixed_substeps : stride;
  std::vector<double> k1, k2, k3, k4, tmp, dq, rates;
  std::exponential_distribution<double> expo(1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  while (t < stride - 1e-15 * stride) {
    h = std::min(h, stride - t);
    const SectorFrame& fa = A.frames[w.sector];
    const SectorFrame& fb = B.frames[w.sector];
    const int dim = fa.lattice.num_axes();
    k1.resize(dim); k2.resize(dim); k3.resize(dim); k4.resize(dim);
    tmp.resize(dim); dq.resize(dim);

    // deterministic RK4 increment over [t, t+h]
    EvalStatus status = EvalStatus::Ok;
    bool too_far = false;
    double den0 = 0;
    if (dim > 0) {
      auto eval = [&](std::span<const double> pt, double tau, std::span<double> v,
                      double* den) {
        EvalStatus s = sector_velocity(fa, fb, tau / stride, pt, v, base.eps_node, den);
        if (den && s != EvalStatus::OutsideBox) w.min_denominator = std::min(w.min_denominator, *den);
        return s;
      };
      status = eval(w.coords, t, k1, &den0);
      if (status == EvalStatus::Ok) {
        for (int i = 0; i < dim; ++i) tmp[i] = w.coords[i] + 0.5 * h * k1[i];
        status = eval(tmp, t + 0.5 * h, k2, nullptr);
      }
      if (status == EvalStatus::Ok) {
        for (int i = 0; i < dim; ++i) tmp[i] = w.coords[i] + 0.5 * h * k2[i];
        status = eval(tmp, t + 0.5 * h, k3, nullptr);
      }
      if (status == EvalStatus::Ok) {
        for (int i = 0; i < dim; ++i) tmp[i] = w.coords[i] + h * k3[i];
        status = eval(tmp, t + h, k4, nullptr);
      }
      if (status == EvalStatus::Ok) {
        for (int i = 0; i < dim; ++i) {
          dq[i] = (h / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
          if (std::abs(dq[i]) > max_disp) too_far = true;
        }
      }
    } else {
      den0 = (1.0 - t / stride) * fa.denom[0] + (t / stride) * fb.denom[0];
      w.min_denominator = std::min(w.min_denominator, den0);
      if (!(den0 > base.eps_node)) status = EvalStatus::NodeFloor;
    }

    if (status != EvalStatus::Ok || (too_far && base.fixed_substeps == 0)) {
      if (base.fixed_substeps > 0 || h * 0.5 < h_min) {
        w.abort = (status == EvalStatus::OutsideBox) ? AbortReason::LeftBox
                                                     : AbortReason::NodeProximity;
        return;
      }
      h *= 0.5;
      continue;
    }

    // deterministic boundary exit within this substep?
    CrossingHit exit = earliest_exit(part, w.coords, dq);
    const double flow_limit = exit.hit ? exit.fraction : 1.0;

    // creation clocks, thinned against the envelope; rates are refreshed at
    // candidate times with the position advanced along the substep increment
    double rate0 = creation_rates(fa, fb, t / stride, w.coords, den0, rates);
    w.max_rate_cur = std::max(w.max_rate_cur, rate0);
    bool jumped = false;
    if (!fa.fluxes.empty()) {
      if (rate0 > envelope) {
        // bound violated before any draw: raise and halve
        envelope = ctl.bound_safety * rate0;
        if (h * 0.5 < h_min) {
          w.abort = AbortReason::RateBound;
          return;
        }
        h *= 0.5;
        continue;
      }
      double s = 0;
      while (true) {
        s += expo(w.rng) / envelope;
        if (s >= h * flow_limit) break;
        // candidate at t + s
        for (int i = 0; i < dim; ++i) tmp[i] = w.coords[i] + (s / h) * dq[i];
        double den_s = 0;
        if (dim > 0) {
          EvalStatus st = sector_velocity(fa, fb, (t + s) / stride, tmp, k1, base.eps_node, &den_s);
          if (st != EvalStatus::Ok) {
            w.abort = (st == EvalStatus::OutsideBox) ? AbortReason::LeftBox
                                                     : AbortReason::NodeProximity;
            return;
          }
        } else {
          den_s = (1.0 - (t + s) / stride) * fa.denom[0] + ((t + s) / stride) * fb.denom[0];
          if (!(den_s > base.eps_node)) {
            w.abort = AbortReason::NodeProximity;
            return;
          }
        }
        const double rate_s =
            creation_rates(fa, fb, (t + s) / stride, std::span<const double>(tmp.data(), dim),
                           den_s, rates);
        w.max_rate_cur = std::max(w.max_rate_cur, rate_s);
        if (rate_s > envelope) {
          envelope = ctl.bound_safety * rate_s;
          if (h * 0.5 < h_min) {
            w.abort = AbortReason::RateBound;
            return;
          }
          h *= 0.5;
          jumped = true;  // restart the substep entirely
          break;
        }
        if (uni(w.rng) * envelope <= rate_s) {
          // accept: pick the candidate crossing proportional to its rate
          double pick = uni(w.rng) * rate_s;
          std::size_t chosen = 0;
          for (; chosen + 1 < rates.size(); ++chosen) {
            if (pick < rates[chosen]) break;
            pick -= rates[chosen];
          }
          const SectorFrame::CreationFlux& fx = fa.fluxes[chosen];
          const BoundaryFace& face = part.faces()[fx.face_index];

          JumpEvent ev;
          ev.time = t0 + t + s;
          ev.src_set = IndexSet::from_bitmask(w.sector);
          ev.particle = fx.particle;
          ev.face_index = fx.face_index;

          // advance the flow to the jump time, then insert the new particle
          // exactly on the boundary; retained labels keep their coordinates
          const uint32_t new_sector = w.sector | (1u << (fx.particle - 1));
          const IndexSet new_set = IndexSet::from_bitmask(new_sector);
          std::vector<double> inserted;
          inserted.reserve(dim + 1);
          {
            std::size_t oi = 0;
            for (int p : new_set.members())
              inserted.push_back(p == fx.particle ? face.position : tmp[oi++]);
          }
          ev.dst_set = new_set;
          ev.coords = inserted;
          w.events.push_back(std::move(ev));
          w.sector = new_sector;
          w.coords = std::move(inserted);
          t += s;
          jumped = true;
          break;
        }
        // rejected: continue scanning from s
      }
    }
    if (jumped) continue;

    if (exit.hit) {
      // deterministic annihilation at the face
      const double frac = exit.fraction;
      for (int i = 0; i < dim; ++i) w.coords[i] += frac * dq[i];
      w.coords[exit.slot] = part.faces()[exit.face_index].position;  // land exactly on dR

      const std::vector<int> members = IndexSet::from_bitmask(w.sector).members();
      const int particle = members[exit.slot];
      JumpEvent ev;
      ev.time = t0 + t + frac * h;
      ev.src_set = IndexSet::from_bitmask(w.sector);
      ev.particle = particle;
      ev.face_index = exit.face_index;
      const uint32_t new_sector = w.sector & ~(1u << (particle - 1));
      ev.dst_set = IndexSet::from_bitmask(new_sector);
      std::vector<double> new_coords;
      for (int i = 0; i < dim; ++i)
        if (i != exit.slot) new_coords.push_back(w.coords[i]);
      ev.coords = new_coords;
      w.events.push_back(std::move(ev));
      w.sector = new_sector;
      w.coords = std::move(new_coords);
      t += frac * h;
      continue;
    }

    for (int i = 0; i < dim; ++i) w.coords[i] += dq[i];
    t += h;
    if (base.fixed_substeps == 0) h = std::min(h * 2.0, stride);
  }
  w.max_rate_prev = w.max_rate_cur;
}

}  // namespace

JumpPath simulate_jump_process(const SpinorWaveFunction& psi0, const Potential& potential,
                               const RegionPartition& partition, const ProjectedState& initial,
                               double T, const JumpProcessControls& controls, uint64_t seed,
                               std::span<const double> sample_times) {
  const double stride = controls.base.stride;
  const long K = std::lround(T / stride);
  if (std::abs(K * stride - T) > 1e-9 * std::max(1.0, T))
    throw ValidationError("T must be a whole number of strides");

  std::vector<long> rec(sample_times.size());
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    rec[i] = std::lround(sample_times[i] / stride);
    if (rec[i] < 0 || rec[i] > K ||
        std::abs(rec[i] * stride - sample_times[i]) > 1e-9 * std::max(1.0, T))
      throw ValidationError("sample times must be stride boundaries within [0, T]");
  }

  Propagator prop(psi0.grid, potential);
  SectorFrameSet prev{build_all_sector_frames(psi0, partition), psi0.time};

  JumpWalker w;
  w.sector = initial.real_set.bitmask();
  w.coords = initial.coords;
  w.rng = make_rng(seed, StreamTag::JumpPath, 0);

  JumpPath path;
  auto record_if = [&](long k, double t) {
    if (w.abort != AbortReason::None) return;
    for (std::size_t i = 0; i < rec.size(); ++i)
      if (rec[i] == k) {
        path.times.push_back(t);
        path.states.push_back({IndexSet::from_bitmask(w.sector), w.coords, t});
      }
  };

  SpinorWaveFunction psi = psi0;
  record_if(0, 0.0);
  const double dt = stride / controls.base.pde_substeps;
  for (long k = 0; k < K && w.abort == AbortReason::None; ++k) {
    SpinorWaveFunction next = prop.evolve(psi, dt, controls.base.pde_substeps);
    SectorFrameSet nextf{build_all_sector_frames(next, partition), next.time};
    advance_jump_stride(w, prev, nextf, k * stride, stride, controls, psi.grid->dx(), partition);
    psi = std::move(next);
    prev = std::move(nextf);
    record_if(k + 1, (k + 1) * stride);
  }
  path.abort = w.abort;
  path.min_denominator = w.min_denominator;
  path.events = std::move(w.events);
  return path;
}

JumpEnsembleResult run_jump_ensemble(const SpinorWaveFunction& psi0, const Potential& potential,
                                     const RegionPartition& partition, double T, std::size_t n,
                                     const JumpProcessControls& controls, uint64_t seed,
                                     std::span<const double> sample_times, int workers) {
  const double stride = controls.base.stride;
  const long K = std::lround(T / stride);
  if (std::abs(K * stride - T) > 1e-9 * std::max(1.0, T))
    throw ValidationError("T must be a whole number of strides");

  // quantum-equilibrium initial states: full-configuration draws pushed
  // through the projection
  FieldBundle fb = density_current(psi0);
  std::vector<std::vector<double>> q0 =
      sample_config_streams(fb.rho, n, seed, StreamTag::InitialDraw);

  std::vector<JumpWalker> walkers(n);
  for (std::size_t i = 0; i < n; ++i) {
    ProjectedState s = project(partition, {q0[i], psi0.time});
    walkers[i].sector = s.real_set.bitmask();
    walkers[i].coords = s.coords;
    walkers[i].rng = make_rng(seed, StreamTag::JumpPath, i);
  }

  std::vector<long> rec(sample_times.size());
  for (std::size_t i = 0; i < sample_times.size(); ++i) {
    rec[i] = std::lround(sample_times[i] / stride);
    if (rec[i] < 0 || rec[i] > K ||
        std::abs(rec[i] * stride - sample_times[i]) > 1e-9 * std::max(1.0, T))
      throw ValidationError("sample times must be stride boundaries within [0, T]");
  }

  JumpEnsembleResult out;
  out.sample_times.assign(sample_times.begin(), sample_times.end());
  out.states.assign(sample_times.size(), {});
  for (auto& v : out.states) v.resize(n);

  auto record_if = [&](long k, double t) {
    for (std::size_t i = 0; i < rec.size(); ++i)
      if (rec[i] == k)
        for (std::size_t w = 0; w < n; ++w)
          out.states[i][w] = {IndexSet::from_bitmask(walkers[w].sector), walkers[w].coords, t};
  };

  Propagator prop(psi0.grid, potential);
  SectorFrameSet prev{build_all_sector_frames(psi0, partition), psi0.time};
  SpinorWaveFunction psi = psi0;
  const double dt = stride / controls.base.pde_substeps;

  record_if(0, 0.0);
  for (long k = 0; k < K; ++k) {
    SpinorWaveFunction next = prop.evolve(psi, dt, controls.base.pde_substeps);
    SectorFrameSet nextf{build_all_sector_frames(next, partition), next.time};
    parallel_for_chunks(n, workers, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t w = lo; w < hi; ++w) {
        if (walkers[w].abort != AbortReason::None) continue;
        advance_jump_stride(walkers[w], prev, nextf, k * stride, stride, controls,
                            psi.grid->dx(), partition);
      }
    });
    psi = std::move(next);
    prev = std::move(nextf);
    record_if(k + 1, (k + 1) * stride);
  }

  std::size_t aborted = 0;
  out.aborts.resize(n);
  for (std::size_t w = 0; w < n; ++w) {
    out.aborts[w] = walkers[w].abort;
    if (walkers[w].abort != AbortReason::None) ++aborted;
    for (JumpEvent& e : walkers[w].events) out.events.push_back(std::move(e));
  }
  out.aborted_fraction = static_cast<double>(aborted) / static_cast<double>(n);
  return out;
}

JumpEnsembleResult projection_oracle(const SpinorWaveFunction& psi0, const Potential& potential,
                                     const RegionPartition& partition, double T, std::size_t n,
                                     const IntegratorControls& controls, uint64_t seed,
                                     std::span<const double> sample_times, int workers) {
  FieldBundle fb = density_current(psi0);
  std::vector<std::vector<double>> q0 =
      sample_config_streams(fb.rho, n, seed, StreamTag::FreshDraw);

  const int dim = psi0.grid->num_axes();
  LawIntegrator engine(psi0, potential, LawSpec::full(), controls);
  LawIntegrator::Batch batch;
  batch.count = n;
  batch.dim = dim;
  batch.positions.resize(n * dim);
  for (std::size_t i = 0; i < n; ++i)
    std::copy(q0[i].begin(), q0[i].end(), batch.positions.begin() + i * dim);
  batch.abort.assign(n, AbortReason::None);
  batch.abort_time.assign(n, 0.0);
  batch.diag.assign(n, {});

  JumpEnsembleResult out;
  out.sample_times.assign(sample_times.begin(), sample_times.end());
  out.states.assign(sample_times.size(), {});
  for (auto& v : out.states) v.resize(n);

  engine.run(
      batch, T, sample_times,
      [&](int idx, double t, const LawIntegrator::Batch& b) {
        for (std::size_t w = 0; w < n; ++w) {
          LabeledConfig q;
          q.time = t;
          q.q.assign(b.positions.begin() + w * dim, b.positions.begin() + (w + 1) * dim);
          out.states[idx][w] = project(partition, q);
        }
      },
      workers);

  std::size_t aborted = 0;
  out.aborts.resize(n);
  for (std::size_t w = 0; w < n; ++w) {
    out.aborts[w] = batch.abort[w];
    if (batch.abort[w] != AbortReason::None) ++aborted;
  }
  out.aborted_fraction = static_cast<double>(aborted) / static_cast<double>(n);
  return out;
}

// --- sector binning ---------------------------------------------------------

SectorBinning::SectorBinning(const SpinorWaveFunction& psi_ref, const RegionPartition& partition,
                             int total_bins) {
  const int n = psi_ref.grid->num_particles();
  const std::size_t sectors = std::size_t(1) << n;
  const std::vector<double> masses = sector_masses(psi_ref, partition);
  const CellBundles bundles = cell_bundles(psi_ref);

  offset_.assign(sectors, 0);
  binners_.resize(sectors);

  // allocate the bin budget proportionally to sector mass, one bin minimum
  std::vector<int> budget(sectors, 1);
  for (std::size_t m = 0; m < sectors; ++m) {
    const int extra = static_cast<int>(std::floor(masses[m] * (total_bins - sectors)));
    budget[m] += std::max(0, extra);
  }

  int off = 0;
  for (std::size_t m = 0; m < sectors; ++m) {
    offset_[m] = off;
    const IndexSet real = IndexSet::from_bitmask(static_cast<uint32_t>(m));
    if (masses[m] <= 1e-9 || real.is_empty() || budget[m] == 1) {
      expected_.push_back(masses[m]);
      ++off;
      continue;
    }
    SectorFrame frame =
        build_sector_frame_from(bundles, psi_ref.grid, partition, real, psi_ref.time);
    const Grid& g = *psi_ref.grid;
    const Region region = partition.region();
    auto mask = [&g, region](std::span<const int> idx) {
      for (int v : idx)
        if (!region.contains(g.axis_coords()[v])) return false;
      return true;
    };
    EqualMassBinner binner = EqualMassBinner::build(frame.denom, budget[m], mask);
    for (double bm : binner.masses()) expected_.push_back(bm * masses[m]);
    off += binner.num_bins();
    binners_[m] = std::move(binner);
  }
  num_bins_ = off;
}

int SectorBinning::sector_bin_count(uint32_t mask) const {
  return binners_[mask].has_value() ? binners_[mask]->num_bins() : 1;
}

int SectorBinning::bin_of(const ProjectedState& s) const {
  const uint32_t m = s.real_set.bitmask();
  if (!binners_[m].has_value()) return offset_[m];
  return offset_[m] + binners_[m]->bin_of_point(s.coords);
}

std::vector<std::size_t> SectorBinning::counts(std::span<const ProjectedState> states) const {
  std::vector<std::size_t> c(num_bins_, 0);
  for (const ProjectedState& s : states) ++c[bin_of(s)];
  return c;
}

}  // namespace pilotwave
