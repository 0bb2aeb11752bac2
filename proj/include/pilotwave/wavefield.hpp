#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "pilotwave/configspace.hpp"
#include "pilotwave/grid.hpp"

namespace pilotwave {

// Wavefunction snapshot on the configuration grid, l spin components per
// cell (spin index fastest). Snapshots are immutable by convention: the
// propagator returns new ones.
struct SpinorWaveFunction {
  GridPtr grid;
  std::vector<cxd> amp;  // num_cells * spin_dim
  double time = 0.0;
  std::vector<std::string> warnings;

  int spin_dim() const { return grid->params().spin_dim; }
  double norm_sq() const;  // sum |psi|^2 * cell_volume, spin contracted
  void normalize();
  cxd value(std::size_t cell, int s) const { return amp[cell * spin_dim() + s]; }
};

// --- initial-state recipes -------------------------------------------------

struct GaussianPacket {
  std::vector<double> center;    // d components
  std::vector<double> momentum;  // d components
  double width = 1.0;            // position-space standard deviation
};

struct StateRecipe {
  enum class Kind {
    GaussianProduct,
    PlaneWave,
    Oscillator,
    Superposition,
    Symmetrize,
    Antisymmetrize,
  };

  Kind kind = Kind::GaussianProduct;

  std::vector<GaussianPacket> packets;           // GaussianProduct: one per particle
  std::vector<std::vector<double>> wavenumbers;  // PlaneWave: per particle, per axis
  std::vector<std::vector<int>> levels;          // Oscillator: per particle, per axis
  std::vector<double> oscillator_stiffness;      // Oscillator: per particle
  std::vector<cxd> spinor;                       // optional, size spin_dim; default e_0
  std::vector<std::pair<cxd, std::shared_ptr<StateRecipe>>> terms;  // Superposition
  std::shared_ptr<StateRecipe> inner;            // Symmetrize / Antisymmetrize
  bool allow_narrow = false;                     // widths under 3*dx: warn instead of error

  static StateRecipe gaussian_product(std::vector<GaussianPacket> packets);
  static StateRecipe plane_wave(std::vector<std::vector<double>> wavenumbers);
  static StateRecipe oscillator(std::vector<std::vector<int>> levels,
                                std::vector<double> stiffness);
  static StateRecipe superposition(
      std::vector<std::pair<cxd, std::shared_ptr<StateRecipe>>> terms);
  static StateRecipe symmetrized(StateRecipe inner);
  static StateRecipe antisymmetrized(StateRecipe inner);
};

// [init_state] Builds and normalizes the recipe on the grid; time = 0.
// Plane-wave wavenumbers must sit on the reciprocal lattice; packets
// narrower than 3*dx raise ValidationError unless allow_narrow.
SpinorWaveFunction init_state(const StateRecipe& recipe, GridPtr grid);

// --- potentials --------------------------------------------------------------

class Potential {
 public:
  enum class Kind { Zero, Harmonic, ScalarField, MatrixField };

  Potential() = default;
  static Potential zero();
  static Potential harmonic(std::vector<double> stiffness);  // per particle
  static Potential scalar_field(std::vector<double> values);
  // values: num_cells * l * l, row-major per cell; Hermitian within 1e-12.
  static Potential matrix_field(std::vector<cxd> values, int spin_dim);

  Kind kind() const { return kind_; }
  const std::vector<double>& stiffness() const { return stiffness_; }
  const std::vector<double>& scalar() const { return scalar_; }
  const std::vector<cxd>& matrix() const { return matrix_; }
  int matrix_spin_dim() const { return matrix_spin_dim_; }

  // Sampled scalar values on a grid (Zero/Harmonic/ScalarField kinds).
  std::vector<double> sample_scalar(const Grid& grid) const;

  void validate_for(const Grid& grid) const;

 private:
  Kind kind_ = Kind::Zero;
  std::vector<double> stiffness_;
  std::vector<double> scalar_;
  std::vector<cxd> matrix_;
  int matrix_spin_dim_ = 1;
};

// --- evolution ----------------------------------------------------------------

// Strang-split spectral stepper: half potential, full kinetic in Fourier
// space, half potential. Matrix potentials are applied through per-cell
// Hermitian matrix exponentials.
class Propagator {
 public:
  Propagator(GridPtr grid, Potential potential);
  ~Propagator();
  Propagator(const Propagator&) = delete;
  Propagator& operator=(const Propagator&) = delete;

  // Advances time by n_steps * dt. Checks the spectral resolution bound
  // max_i hbar * k_max^2 * dt / (2 m_i) < pi once per call.
  SpinorWaveFunction evolve(const SpinorWaveFunction& psi, double dt, int n_steps);

  const Potential& potential() const { return potential_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  GridPtr grid_;
  Potential potential_;
};

// [evolve] One-shot convenience wrapper.
SpinorWaveFunction evolve(const SpinorWaveFunction& psi, double dt, int n_steps,
                          const Potential& potential);

// --- densities, currents, contractions ---------------------------------------

// rho = psi^* psi and j_i = (hbar/m_i) Im psi^* grad_i psi, spin contracted,
// gradients spectral. currents[(i-1)*d + a] is component a of particle i.
struct FieldBundle {
  Field<double> rho;
  std::vector<Field<double>> currents;
};

FieldBundle density_current(const SpinorWaveFunction& psi);

// All-axis spectral derivatives of a snapshot (one forward FFT, one inverse
// per axis). axis(a) has the same layout as psi.amp.
class SpectralDerivatives {
 public:
  explicit SpectralDerivatives(const SpinorWaveFunction& psi);
  const std::vector<cxd>& axis(int a) const { return d_[a]; }

 private:
  std::vector<std::vector<cxd>> d_;
};

// [partial_inner_product] <phi, psi>_{I^c}: spin contraction and Riemann
// cell-sum over the coordinates of the complement of real_set, yielding a
// complex field on the real-set lattice. real_set must be nonempty.
Field<cxd> partial_inner_product(const SpinorWaveFunction& phi, const SpinorWaveFunction& psi,
                                 const IndexSet& real_set);

// [reduced_density] <psi, psi>_{I^c}, computed directly from |psi|^2 so the
// result is exactly real and nonnegative.
Field<double> reduced_density(const SpinorWaveFunction& psi, const IndexSet& real_set);

// [symmetrized_density] raw = sum over permutations of rho . sigma
// (integrates to N!); normalized = raw / N! for sampling.
struct SymmetrizedDensity {
  Field<double> raw;
  Field<double> normalized;
};

SymmetrizedDensity symmetrized_density(const SpinorWaveFunction& psi);

// Probability mass within `shell` cells of the box edge on any axis; the
// wrap-around monitoring diagnostic.
double boundary_mass(const SpinorWaveFunction& psi, int shell = 1);

// --- snapshot serialization ---------------------------------------------------

// One JSON header line with grid metadata, then the amplitudes as
// little-endian complex64 (float32 re/im) pairs in row-major axis order,
// spin index fastest.
void dump_state(const SpinorWaveFunction& psi, const std::string& path);
SpinorWaveFunction load_state(const std::string& path);

}  // namespace pilotwave
