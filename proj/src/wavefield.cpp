#include "pilotwave/wavefield.hpp"

#include <fftw3.h>

#include <Eigen/Dense>
#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <mutex>
#include <numbers>

#include "json.hpp"

namespace pilotwave {

namespace {

std::mutex g_fftw_plan_mutex;  // FFTW planning is not thread-safe

}  // namespace

double SpinorWaveFunction::norm_sq() const {
  double acc = 0;
  for (const cxd& a : amp) acc += std::norm(a);
  return acc * grid->cell_volume();
}

void SpinorWaveFunction::normalize() {
  double n2 = norm_sq();
  if (n2 < 1e-24) throw ZeroStateError("state has (numerically) zero norm");
  double inv = 1.0 / std::sqrt(n2);
  for (cxd& a : amp) a *= inv;
}

// --- spectral transform -------------------------------------------------

class SpectralTransform {
 public:
  SpectralTransform(const Grid& grid, int howmany)
      : cells_(grid.num_cells()), howmany_(howmany), buf_(grid.num_cells() * howmany) {
    std::vector<int> dims(grid.num_axes(), grid.points_per_axis());
    auto* data = reinterpret_cast<fftw_complex*>(buf_.data());
    std::scoped_lock lock(g_fftw_plan_mutex);
    fwd_ = fftw_plan_many_dft(grid.num_axes(), dims.data(), howmany_, data, nullptr, howmany_, 1,
                              data, nullptr, howmany_, 1, FFTW_FORWARD, FFTW_ESTIMATE);
    bwd_ = fftw_plan_many_dft(grid.num_axes(), dims.data(), howmany_, data, nullptr, howmany_, 1,
                              data, nullptr, howmany_, 1, FFTW_BACKWARD, FFTW_ESTIMATE);
    if (!fwd_ || !bwd_) throw ResourceError("failed to create FFT plans");
  }

  ~SpectralTransform() {
    std::scoped_lock lock(g_fftw_plan_mutex);
    fftw_destroy_plan(fwd_);
    fftw_destroy_plan(bwd_);
  }

  SpectralTransform(const SpectralTransform&) = delete;
  SpectralTransform& operator=(const SpectralTransform&) = delete;

  std::vector<cxd>& buffer() { return buf_; }

  void forward() { fftw_execute(fwd_); }

  void inverse_normalized() {
    fftw_execute(bwd_);
    const double inv = 1.0 / static_cast<double>(cells_);
    for (cxd& v : buf_) v *= inv;
  }

 private:
  std::size_t cells_;
  int howmany_;
  std::vector<cxd> buf_;
  fftw_plan fwd_ = nullptr;
  fftw_plan bwd_ = nullptr;
};

// --- recipes ------------------------------------------------------------

StateRecipe StateRecipe::gaussian_product(std::vector<GaussianPacket> packets) {
  StateRecipe r;
  r.kind = Kind::GaussianProduct;
  r.packets = std::move(packets);
  return r;
}

StateRecipe StateRecipe::plane_wave(std::vector<std::vector<double>> wavenumbers) {
  StateRecipe r;
  r.kind = Kind::PlaneWave;
  r.wavenumbers = std::move(wavenumbers);
  return r;
}

StateRecipe StateRecipe::oscillator(std::vector<std::vector<int>> levels,
                                    std::vector<double> stiffness) {
  StateRecipe r;
  r.kind = Kind::Oscillator;
  r.levels = std::move(levels);
  r.oscillator_stiffness = std::move(stiffness);
  return r;
}

StateRecipe StateRecipe::superposition(
    std::vector<std::pair<cxd, std::shared_ptr<StateRecipe>>> terms) {
  StateRecipe r;
  r.kind = Kind::Superposition;
  r.terms = std::move(terms);
  return r;
}

StateRecipe StateRecipe::symmetrized(StateRecipe inner) {
  StateRecipe r;
  r.kind = Kind::Symmetrize;
  r.inner = std::make_shared<StateRecipe>(std::move(inner));
  return r;
}

StateRecipe StateRecipe::antisymmetrized(StateRecipe inner) {
  StateRecipe r;
  r.kind = Kind::Antisymmetrize;
  r.inner = std::make_shared<StateRecipe>(std::move(inner));
  return r;
}

namespace {

// One-axis factors evaluated on the grid coordinates.
std::vector<cxd> gaussian_axis_factor(const Grid& g, double center, double momentum,
                                      double width) {
  std::vector<cxd> f(g.points_per_axis());
  const double norm = std::pow(2.0 * std::numbers::pi * width * width, -0.25);
  for (int j = 0; j < g.points_per_axis(); ++j) {
    const double x = g.axis_coords()[j] - center;
    f[j] = norm * std::exp(cxd(-x * x / (4.0 * width * width), momentum * x / g.params().hbar));
  }
  return f;
}

double hermite_poly(int n, double xi) {
  double h0 = 1.0, h1 = 2.0 * xi;
  if (n == 0) return h0;
  if (n == 1) return h1;
  for (int k = 2; k <= n; ++k) {
    double h2 = 2.0 * xi * h1 - 2.0 * (k - 1) * h0;
    h0 = h1;
    h1 = h2;
  }
  return h1;
}

std::vector<cxd> oscillator_axis_factor(const Grid& g, int level, double mass, double omega) {
  const double hbar = g.params().hbar;
  const double alpha = mass * omega / hbar;
  std::vector<cxd> f(g.points_per_axis());
  double lognorm = 0.25 * std::log(alpha / std::numbers::pi) -
                   0.5 * (level * std::log(2.0) + std::lgamma(level + 1.0));
  for (int j = 0; j < g.points_per_axis(); ++j) {
    const double x = g.axis_coords()[j];
    const double xi = std::sqrt(alpha) * x;
    f[j] = std::exp(lognorm - 0.5 * xi * xi) * hermite_poly(level, xi);
  }
  return f;
}

// Builds an unnormalized amplitude array from per-axis factors.
std::vector<cxd> product_of_axis_factors(const Grid& g,
                                         const std::vector<std::vector<cxd>>& axis_factors,
                                         const std::vector<cxd>& spinor) {
  const int ell = g.params().spin_dim;
  const Lattice lat = Lattice::full(g.shared_from_this());
  std::vector<cxd> amp(g.num_cells() * ell);
  std::vector<int> idx(g.num_axes());
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    lat.decode(c, idx);
    cxd v = 1.0;
    for (int a = 0; a < g.num_axes(); ++a) v *= axis_factors[a][idx[a]];
    for (int s = 0; s < ell; ++s) amp[c * ell + s] = v * spinor[s];
  }
  return amp;
}

std::vector<cxd> spinor_or_default(const StateRecipe& r, int ell) {
  if (r.spinor.empty()) {
    std::vector<cxd> s(ell, 0.0);
    s[0] = 1.0;
    return s;
  }
  if (static_cast<int>(r.spinor.size()) != ell)
    throw ValidationError("state.spinor must have spin_dim components");
  return r.spinor;
}

std::vector<cxd> build_amplitudes(const StateRecipe& recipe, const GridPtr& grid,
                                  std::vector<std::string>& warnings);

std::vector<cxd> build_gaussian(const StateRecipe& r, const GridPtr& grid,
                                std::vector<std::string>& warnings) {
  const Grid& g = *grid;
  const int n = g.num_particles(), d = g.space_dim();
  if (static_cast<int>(r.packets.size()) != n)
    throw ValidationError("gaussian_product needs one packet per particle");
  std::vector<std::vector<cxd>> factors;
  for (int i = 0; i < n; ++i) {
    const GaussianPacket& p = r.packets[i];
    if (static_cast<int>(p.center.size()) != d || static_cast<int>(p.momentum.size()) != d)
      throw ValidationError("packet center/momentum must have space_dim components");
    if (!(p.width > 0)) throw ValidationError("packet width must be positive");
    if (p.width < 3.0 * g.dx()) {
      if (!r.allow_narrow)
        throw ValidationError("packet width under 3*dx is unresolvable on this grid");
      warnings.push_back("packet narrower than 3*dx; expect resolution artifacts");
    }
    for (int a = 0; a < d; ++a) {
      if (!g.inside_box(p.center[a])) throw ValidationError("packet center outside the box");
      factors.push_back(gaussian_axis_factor(g, p.center[a], p.momentum[a], p.width));
    }
  }
  return product_of_axis_factors(g, factors, spinor_or_default(r, g.params().spin_dim));
}

std::vector<cxd> build_plane_wave(const StateRecipe& r, const GridPtr& grid) {
  const Grid& g = *grid;
  const int n = g.num_particles(), d = g.space_dim();
  if (static_cast<int>(r.wavenumbers.size()) != n)
    throw ValidationError("plane_wave needs one wavenumber vector per particle");
  const double dk = 2.0 * std::numbers::pi / g.length();
  std::vector<std::vector<cxd>> factors;
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(r.wavenumbers[i].size()) != d)
      throw ValidationError("plane_wave wavenumbers must have space_dim components");
    for (int a = 0; a < d; ++a) {
      const double k = r.wavenumbers[i][a];
      const double f = k / dk;
      if (std::abs(f - std::round(f)) > 1e-9)
        throw ValidationError("plane-wave wavenumber must sit on the reciprocal lattice");
      if (std::abs(f) > g.points_per_axis() / 2 - 1)
        throw ValidationError("plane-wave wavenumber exceeds the grid's Nyquist range");
      std::vector<cxd> fac(g.points_per_axis());
      for (int j = 0; j < g.points_per_axis(); ++j)
        fac[j] = std::exp(cxd(0.0, k * g.axis_coords()[j]));
      factors.push_back(std::move(fac));
    }
  }
  return product_of_axis_factors(g, factors, spinor_or_default(r, g.params().spin_dim));
}

std::vector<cxd> build_oscillator(const StateRecipe& r, const GridPtr& grid) {
  const Grid& g = *grid;
  const int n = g.num_particles(), d = g.space_dim();
  if (static_cast<int>(r.levels.size()) != n)
    throw ValidationError("oscillator needs one level vector per particle");
  if (static_cast<int>(r.oscillator_stiffness.size()) != n)
    throw ValidationError("oscillator needs one stiffness per particle");
  std::vector<std::vector<cxd>> factors;
  for (int i = 0; i < n; ++i) {
    if (static_cast<int>(r.levels[i].size()) != d)
      throw ValidationError("oscillator levels must have space_dim components");
    const double kk = r.oscillator_stiffness[i];
    if (!(kk > 0)) throw ValidationError("oscillator stiffness must be positive");
    const double omega = std::sqrt(kk / g.params().masses[i]);
    for (int a = 0; a < d; ++a) {
      const int level = r.levels[i][a];
      if (level < 0) throw ValidationError("oscillator level must be >= 0");
      factors.push_back(oscillator_axis_factor(g, level, g.params().masses[i], omega));
    }
  }
  return product_of_axis_factors(g, factors, spinor_or_default(r, g.params().spin_dim));
}

std::vector<cxd> build_amplitudes(const StateRecipe& recipe, const GridPtr& grid,
                                  std::vector<std::string>& warnings) {
  const Grid& g = *grid;
  switch (recipe.kind) {
    case StateRecipe::Kind::GaussianProduct:
      return build_gaussian(recipe, grid, warnings);
    case StateRecipe::Kind::PlaneWave:
      return build_plane_wave(recipe, grid);
    case StateRecipe::Kind::Oscillator:
      return build_oscillator(recipe, grid);
    case StateRecipe::Kind::Superposition: {
      if (recipe.terms.empty()) throw ValidationError("superposition needs at least one term");
      std::vector<cxd> amp(g.num_cells() * g.params().spin_dim, 0.0);
      for (const auto& [w, term] : recipe.terms) {
        std::vector<cxd> t = build_amplitudes(*term, grid, warnings);
        // weight normalized components so the stated weights are amplitudes
        double n2 = 0;
        for (const cxd& v : t) n2 += std::norm(v);
        n2 *= g.cell_volume();
        if (n2 < 1e-24) throw ZeroStateError("superposition term is numerically zero");
        const cxd scale = w / std::sqrt(n2);
        for (std::size_t i = 0; i < amp.size(); ++i) amp[i] += scale * t[i];
      }
      return amp;
    }
    case StateRecipe::Kind::Symmetrize:
    case StateRecipe::Kind::Antisymmetrize: {
      const bool anti = recipe.kind == StateRecipe::Kind::Antisymmetrize;
      std::vector<cxd> base = build_amplitudes(*recipe.inner, grid, warnings);
      const int ell = g.params().spin_dim;
      const Lattice lat = Lattice::full(grid);
      std::vector<cxd> out(base.size(), 0.0);
      std::vector<int> idx(g.num_axes());
      for (const Permutation& sigma : Permutation::enumerate(g.num_particles())) {
        // parity of sigma
        double sign = 1.0;
        if (anti) {
          std::vector<bool> seen(sigma.size(), false);
          for (int i = 0; i < sigma.size(); ++i) {
            if (seen[i]) continue;
            int len = 0;
            for (int j = i; !seen[j]; j = sigma(j)) {
              seen[j] = true;
              ++len;
            }
            if (len % 2 == 0) sign = -sign;
          }
        }
        for (std::size_t c = 0; c < g.num_cells(); ++c) {
          const std::size_t src = permute_cell(sigma, lat, c, idx);
          for (int s = 0; s < ell; ++s) out[c * ell + s] += sign * base[src * ell + s];
        }
      }
      return out;
    }
  }
  throw ValidationError("unknown state recipe kind");
}

}  // namespace

SpinorWaveFunction init_state(const StateRecipe& recipe, GridPtr grid) {
  SpinorWaveFunction psi;
  psi.grid = grid;
  psi.time = 0.0;
  psi.amp = build_amplitudes(recipe, grid, psi.warnings);
  double n2 = 0;
  for (const cxd& v : psi.amp) n2 += std::norm(v);
  n2 *= grid->cell_volume();
  if (n2 < 1e-24)
    throw ZeroStateError(
        "state recipe produced a zero state (antisymmetrization of identical factors?)");
  psi.normalize();
  return psi;
}

// --- potential ----------------------------------------------------------

Potential Potential::zero() { return {}; }

Potential Potential::harmonic(std::vector<double> stiffness) {
  Potential p;
  p.kind_ = Kind::Harmonic;
  p.stiffness_ = std::move(stiffness);
  return p;
}

Potential Potential::scalar_field(std::vector<double> values) {
  Potential p;
  p.kind_ = Kind::ScalarField;
  p.scalar_ = std::move(values);
  return p;
}

Potential Potential::matrix_field(std::vector<cxd> values, int spin_dim) {
  Potential p;
  p.kind_ = Kind::MatrixField;
  p.matrix_ = std::move(values);
  p.matrix_spin_dim_ = spin_dim;
  return p;
}

std::vector<double> Potential::sample_scalar(const Grid& grid) const {
  std::vector<double> v(grid.num_cells(), 0.0);
  switch (kind_) {
    case Kind::Zero:
      break;
    case Kind::Harmonic: {
      const Lattice lat = Lattice::full(grid.shared_from_this());
      std::vector<int> idx(grid.num_axes());
      for (std::size_t c = 0; c < grid.num_cells(); ++c) {
        lat.decode(c, idx);
        double acc = 0;
        for (int a = 0; a < grid.num_axes(); ++a) {
          const double x = grid.axis_coords()[idx[a]];
          acc += 0.5 * stiffness_[a / grid.space_dim()] * x * x;
        }
        v[c] = acc;
      }
      break;
    }
    case Kind::ScalarField:
      v = scalar_;
      break;
    case Kind::MatrixField:
      throw ValidationError("matrix potential has no scalar sampling");
  }
  return v;
}

void Potential::validate_for(const Grid& grid) const {
  switch (kind_) {
    case Kind::Zero:
      break;
    case Kind::Harmonic:
      if (static_cast<int>(stiffness_.size()) != grid.num_particles())
        throw ValidationError("harmonic potential needs one stiffness per particle");
      for (double k : stiffness_)
        if (k < 0) throw ValidationError("harmonic stiffness must be nonnegative");
      break;
    case Kind::ScalarField:
      if (scalar_.size() != grid.num_cells())
        throw ValidationError("scalar potential must be sampled on every grid cell");
      break;
    case Kind::MatrixField: {
      const int ell = grid.params().spin_dim;
      if (matrix_spin_dim_ != ell)
        throw ValidationError("matrix potential spin dimension mismatch");
      if (ell > 4) throw ResourceError("matrix potentials are capped at spin_dim = 4");
      if (matrix_.size() != grid.num_cells() * static_cast<std::size_t>(ell) * ell)
        throw ValidationError("matrix potential must provide an l x l block per cell");
      for (std::size_t c = 0; c < grid.num_cells(); ++c) {
        const cxd* blk = matrix_.data() + c * ell * ell;
        for (int r = 0; r < ell; ++r)
          for (int s = r; s < ell; ++s)
            if (std::abs(blk[r * ell + s] - std::conj(blk[s * ell + r])) > 1e-12)
              throw ValidationError("matrix potential is not Hermitian within 1e-12");
      }
      break;
    }
  }
}

// --- propagator -----------------------------------------------------------

struct Propagator::Impl {
  std::unique_ptr<SpectralTransform> fft;
  std::vector<double> kinetic;  // per-cell kinetic energy over hbar: sum_a hbar k_a^2 / 2 m_a
  std::vector<double> scalar;   // sampled scalar potential (non-matrix kinds)

  double cached_dt = 0.0;
  std::vector<cxd> kinetic_phase;    // e^{-i kinetic dt}
  std::vector<cxd> half_potential;   // scalar kinds: e^{-i V dt / 2 hbar}
  std::vector<cxd> half_matrix;      // matrix kind: per-cell expm
  double max_kinetic = 0.0;

  void refresh_phase_tables(const Grid& g, const Potential& pot, double dt);
};

Propagator::Propagator(GridPtr grid, Potential potential)
    : grid_(std::move(grid)), potential_(std::move(potential)) {
  potential_.validate_for(*grid_);
  impl_ = std::make_unique<Impl>();
  impl_->fft = std::make_unique<SpectralTransform>(*grid_, grid_->params().spin_dim);

  const Grid& g = *grid_;
  const Lattice lat = Lattice::full(grid_);
  impl_->kinetic.resize(g.num_cells());
  std::vector<int> idx(g.num_axes());
  double maxk = 0;
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    lat.decode(c, idx);
    double acc = 0;
    for (int a = 0; a < g.num_axes(); ++a) {
      const double k = g.axis_wavenumbers()[idx[a]];
      acc += g.params().hbar * k * k / (2.0 * g.mass_for_axis(a));
    }
    impl_->kinetic[c] = acc;
    maxk = std::max(maxk, acc);
  }
  impl_->max_kinetic = maxk;

  if (potential_.kind() != Potential::Kind::MatrixField &&
      potential_.kind() != Potential::Kind::Zero)
    impl_->scalar = potential_.sample_scalar(g);
}

Propagator::~Propagator() = default;

void Propagator::Impl::refresh_phase_tables(const Grid& g, const Potential& pot, double dt) {
  if (cached_dt == dt && !kinetic_phase.empty()) return;
  cached_dt = dt;
  kinetic_phase.resize(g.num_cells());
  for (std::size_t c = 0; c < g.num_cells(); ++c)
    kinetic_phase[c] = std::exp(cxd(0.0, -kinetic[c] * dt));

  const double hbar = g.params().hbar;
  if (!scalar.empty()) {
    half_potential.resize(g.num_cells());
    for (std::size_t c = 0; c < g.num_cells(); ++c)
      half_potential[c] = std::exp(cxd(0.0, -scalar[c] * dt / (2.0 * hbar)));
  }
  if (pot.kind() == Potential::Kind::MatrixField) {
    const int ell = g.params().spin_dim;
    half_matrix.resize(g.num_cells() * ell * ell);
    Eigen::MatrixXcd v(ell, ell), u(ell, ell);
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
      const cxd* blk = pot.matrix().data() + c * ell * ell;
      for (int r = 0; r < ell; ++r)
        for (int s = 0; s < ell; ++s) v(r, s) = blk[r * ell + s];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(v);
      Eigen::VectorXcd phases(ell);
      for (int r = 0; r < ell; ++r)
        phases(r) = std::exp(cxd(0.0, -es.eigenvalues()(r) * dt / (2.0 * hbar)));
      u = es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
      cxd* out = half_matrix.data() + c * ell * ell;
      for (int r = 0; r < ell; ++r)
        for (int s = 0; s < ell; ++s) out[r * ell + s] = u(r, s);
    }
  }
}

namespace {

inline void apply_scalar_phase(std::vector<cxd>& amp, const std::vector<cxd>& phase, int ell) {
  const std::size_t cells = phase.size();
  for (std::size_t c = 0; c < cells; ++c) {
    const cxd p = phase[c];
    for (int s = 0; s < ell; ++s) amp[c * ell + s] *= p;
  }
}

inline void apply_matrix_halfstep(std::vector<cxd>& amp, const std::vector<cxd>& mats, int ell) {
  const std::size_t cells = amp.size() / ell;
  cxd tmp[4];
  for (std::size_t c = 0; c < cells; ++c) {
    const cxd* u = mats.data() + c * ell * ell;
    cxd* v = amp.data() + c * ell;
    for (int r = 0; r < ell; ++r) {
      cxd acc = 0.0;
      for (int s = 0; s < ell; ++s) acc += u[r * ell + s] * v[s];
      tmp[r] = acc;
    }
    for (int r = 0; r < ell; ++r) v[r] = tmp[r];
  }
}

}  // namespace

SpinorWaveFunction Propagator::evolve(const SpinorWaveFunction& psi, double dt, int n_steps) {
  if (!(dt > 0)) throw ValidationError("evolve requires dt > 0");
  if (n_steps < 0) throw ValidationError("evolve requires n_steps >= 0");
  if (psi.grid != grid_) throw ValidationError("state grid does not match propagator grid");
  // spectral resolution bound: the largest kinetic phase advance per step
  // must stay below pi
  if (impl_->max_kinetic * dt >= std::numbers::pi)
    throw ValidationError("spectral resolution check failed: max |k|^2 hbar dt / 2m >= pi");

  impl_->refresh_phase_tables(*grid_, potential_, dt);

  SpinorWaveFunction out = psi;
  const int ell = grid_->params().spin_dim;
  const bool scalar_pot = !impl_->half_potential.empty() &&
                          potential_.kind() != Potential::Kind::Zero &&
                          potential_.kind() != Potential::Kind::MatrixField;
  const bool matrix_pot = potential_.kind() == Potential::Kind::MatrixField;

  std::vector<cxd>& buf = impl_->fft->buffer();
  buf = out.amp;
  for (int step = 0; step < n_steps; ++step) {
    if (scalar_pot) apply_scalar_phase(buf, impl_->half_potential, ell);
    if (matrix_pot) apply_matrix_halfstep(buf, impl_->half_matrix, ell);
    impl_->fft->forward();
    apply_scalar_phase(buf, impl_->kinetic_phase, ell);
    impl_->fft->inverse_normalized();
    if (scalar_pot) apply_scalar_phase(buf, impl_->half_potential, ell);
    if (matrix_pot) apply_matrix_halfstep(buf, impl_->half_matrix, ell);
  }
  out.amp = buf;
  out.time = psi.time + n_steps * dt;
  return out;
}

SpinorWaveFunction evolve(const SpinorWaveFunction& psi, double dt, int n_steps,
                          const Potential& potential) {
  Propagator prop(psi.grid, potential);
  return prop.evolve(psi, dt, n_steps);
}

// --- derivatives, densities, currents --------------------------------------

SpectralDerivatives::SpectralDerivatives(const SpinorWaveFunction& psi) {
  const Grid& g = *psi.grid;
  const int ell = psi.spin_dim();
  SpectralTransform fft(g, ell);
  fft.buffer() = psi.amp;
  fft.forward();
  const std::vector<cxd> spectrum = fft.buffer();

  const Lattice lat = Lattice::full(psi.grid);
  d_.resize(g.num_axes());
  for (int a = 0; a < g.num_axes(); ++a) {
    std::vector<cxd>& buf = fft.buffer();
    const std::size_t stride = lat.stride(a);
    const int m = g.points_per_axis();
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
      const double k = g.axis_wavenumbers()[(c / stride) % m];
      const cxd ik(0.0, k);
      for (int s = 0; s < ell; ++s) buf[c * ell + s] = spectrum[c * ell + s] * ik;
    }
    fft.inverse_normalized();
    d_[a] = buf;
  }
}

FieldBundle density_current(const SpinorWaveFunction& psi) {
  const Grid& g = *psi.grid;
  const int ell = psi.spin_dim();
  const Lattice lat = Lattice::full(psi.grid);

  FieldBundle out;
  out.rho = Field<double>(lat);
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    double acc = 0;
    for (int s = 0; s < ell; ++s) acc += std::norm(psi.amp[c * ell + s]);
    out.rho[c] = acc;
  }

  SpectralDerivatives grad(psi);
  out.currents.reserve(g.num_axes());
  for (int a = 0; a < g.num_axes(); ++a) {
    Field<double> j(lat);
    const double scale = g.params().hbar / g.mass_for_axis(a);
    const std::vector<cxd>& da = grad.axis(a);
    for (std::size_t c = 0; c < g.num_cells(); ++c) {
      double acc = 0;
      for (int s = 0; s < ell; ++s)
        acc += std::imag(std::conj(psi.amp[c * ell + s]) * da[c * ell + s]);
      j[c] = scale * acc;
    }
    out.currents.push_back(std::move(j));
  }
  return out;
}

namespace {

void check_same_grid(const SpinorWaveFunction& a, const SpinorWaveFunction& b) {
  if (a.grid != b.grid) throw ValidationError("states live on different grids");
}

}  // namespace

Field<cxd> partial_inner_product(const SpinorWaveFunction& phi, const SpinorWaveFunction& psi,
                                 const IndexSet& real_set) {
  check_same_grid(phi, psi);
  if (real_set.is_empty())
    throw ValidationError("partial inner product requires a nonempty real set");
  const Grid& g = *phi.grid;
  const int ell = phi.spin_dim();
  const Lattice full = Lattice::full(phi.grid);
  const Lattice reduced(phi.grid, real_set.members());

  // reduced stride per full axis (0 for integrated-out axes)
  std::vector<std::size_t> rstride(g.num_axes(), 0);
  std::vector<bool> kept(g.num_axes(), false);
  {
    int ra = 0;
    for (int p : real_set.members())
      for (int a = 0; a < g.space_dim(); ++a) {
        rstride[g.axis_of(p, a)] = reduced.stride(ra);
        kept[g.axis_of(p, a)] = true;
        ++ra;
      }
  }
  const int integrated = g.num_axes() - reduced.num_axes();
  const double vol = std::pow(g.dx(), integrated);

  Field<cxd> out(reduced);
  std::vector<int> idx(g.num_axes());
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    full.decode(c, idx);
    std::size_t r = 0;
    for (int a = 0; a < g.num_axes(); ++a)
      if (kept[a]) r += rstride[a] * static_cast<std::size_t>(idx[a]);
    cxd acc = 0.0;
    for (int s = 0; s < ell; ++s)
      acc += std::conj(phi.amp[c * ell + s]) * psi.amp[c * ell + s];
    out[r] += acc * vol;
  }
  return out;
}

Field<double> reduced_density(const SpinorWaveFunction& psi, const IndexSet& real_set) {
  if (real_set.is_empty()) throw ValidationError("reduced density requires a nonempty real set");
  const Grid& g = *psi.grid;
  const int ell = psi.spin_dim();
  const Lattice full = Lattice::full(psi.grid);
  const Lattice reduced(psi.grid, real_set.members());

  std::vector<std::size_t> rstride(g.num_axes(), 0);
  std::vector<bool> kept(g.num_axes(), false);
  {
    int ra = 0;
    for (int p : real_set.members())
      for (int a = 0; a < g.space_dim(); ++a) {
        rstride[g.axis_of(p, a)] = reduced.stride(ra);
        kept[g.axis_of(p, a)] = true;
        ++ra;
      }
  }
  const int integrated = g.num_axes() - reduced.num_axes();
  const double vol = std::pow(g.dx(), integrated);

  Field<double> out(reduced);
  std::vector<int> idx(g.num_axes());
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    full.decode(c, idx);
    std::size_t r = 0;
    for (int a = 0; a < g.num_axes(); ++a)
      if (kept[a]) r += rstride[a] * static_cast<std::size_t>(idx[a]);
    double acc = 0.0;
    for (int s = 0; s < ell; ++s) acc += std::norm(psi.amp[c * ell + s]);
    out[r] += acc * vol;
  }
  return out;
}

SymmetrizedDensity symmetrized_density(const SpinorWaveFunction& psi) {
  const Grid& g = *psi.grid;
  if (g.num_particles() > 5)
    throw ResourceError("permutation sum capped at N = 5 particles");
  const Lattice lat = Lattice::full(psi.grid);
  FieldBundle fb = density_current(psi);

  SymmetrizedDensity out;
  out.raw = Field<double>(lat);
  std::vector<int> idx(g.num_axes());
  double fact = 1.0;
  for (int i = 2; i <= g.num_particles(); ++i) fact *= i;
  for (const Permutation& sigma : Permutation::enumerate(g.num_particles())) {
    for (std::size_t c = 0; c < g.num_cells(); ++c)
      out.raw[c] += fb.rho[permute_cell(sigma, lat, c, idx)];
  }
  out.normalized = out.raw;
  for (std::size_t c = 0; c < g.num_cells(); ++c) out.normalized[c] /= fact;
  return out;
}

double boundary_mass(const SpinorWaveFunction& psi, int shell) {
  const Grid& g = *psi.grid;
  const int ell = psi.spin_dim();
  const Lattice lat = Lattice::full(psi.grid);
  const int m = g.points_per_axis();
  std::vector<int> idx(g.num_axes());
  double acc = 0;
  for (std::size_t c = 0; c < g.num_cells(); ++c) {
    lat.decode(c, idx);
    bool edge = false;
    for (int a = 0; a < g.num_axes() && !edge; ++a)
      edge = idx[a] < shell || idx[a] >= m - shell;
    if (!edge) continue;
    for (int s = 0; s < ell; ++s) acc += std::norm(psi.amp[c * ell + s]);
  }
  return acc * g.cell_volume();
}

// --- snapshot serialization -------------------------------------------------

static_assert(std::endian::native == std::endian::little,
              "snapshot format assumes a little-endian host");

void dump_state(const SpinorWaveFunction& psi, const std::string& path) {
  const Grid& g = *psi.grid;
  nlohmann::json header = {
      {"format", "pilotwave-state"},
      {"version", 1},
      {"num_particles", g.num_particles()},
      {"space_dim", g.space_dim()},
      {"points_per_axis", g.points_per_axis()},
      {"box", {g.x_min(), g.x_max()}},
      {"spin_dim", g.params().spin_dim},
      {"hbar", g.params().hbar},
      {"masses", g.params().masses},
      {"time", psi.time},
      {"dtype", "complex64"},
      {"layout", "row-major axes, spin fastest"},
  };
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + path + " for writing");
  f << header.dump() << "\n";
  std::vector<float> buf(psi.amp.size() * 2);
  for (std::size_t i = 0; i < psi.amp.size(); ++i) {
    buf[2 * i] = static_cast<float>(psi.amp[i].real());
    buf[2 * i + 1] = static_cast<float>(psi.amp[i].imag());
  }
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
}

SpinorWaveFunction load_state(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw ParseError("missing snapshot header line");
  nlohmann::json header = nlohmann::json::parse(line, nullptr, false);
  if (header.is_discarded() || header.value("format", "") != "pilotwave-state")
    throw ParseError("not a pilotwave state snapshot");

  GridSpec spec;
  spec.num_particles = header.at("num_particles").get<int>();
  spec.space_dim = header.at("space_dim").get<int>();
  spec.points_per_axis = header.at("points_per_axis").get<int>();
  spec.x_min = header.at("box")[0].get<double>();
  spec.x_max = header.at("box")[1].get<double>();
  ModelParams params;
  params.hbar = header.at("hbar").get<double>();
  params.masses = header.at("masses").get<std::vector<double>>();
  params.spin_dim = header.at("spin_dim").get<int>();

  SpinorWaveFunction psi;
  psi.grid = Grid::build(spec, params);
  psi.time = header.at("time").get<double>();
  const std::size_t count = psi.grid->num_cells() * params.spin_dim;
  std::vector<float> buf(count * 2);
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw ParseError("snapshot payload truncated");
  psi.amp.resize(count);
  for (std::size_t i = 0; i < count; ++i) psi.amp[i] = cxd(buf[2 * i], buf[2 * i + 1]);
  return psi;
}

}  // namespace pilotwave
