#pragma once

#include <limits>
#include <span>
#include <vector>

#include "pilotwave/wavefield.hpp"

namespace pilotwave {

enum class LawKind { Full, Reduced, Symmetrized };

const char* to_string(LawKind k);

struct LawSpec {
  LawKind kind = LawKind::Full;
  IndexSet real_set;           // Reduced only
  double velocity_scale = 1.0;  // negative-control hook; 1.0 means the law as stated

  static LawSpec full() { return {}; }
  static LawSpec reduced(IndexSet real) { return {LawKind::Reduced, real, 1.0}; }
  static LawSpec symmetrized() { return {LawKind::Symmetrized, {}, 1.0}; }
};

// Per-snapshot velocity-field data: numerator fields (one per slot and
// component) and the common denominator, on the law's lattice. Numerator and
// denominator are interpolated separately and divided at the query point.
struct LawFrame {
  Lattice lattice;
  int slots = 0;  // velocity vectors produced per evaluation
  double time = 0.0;
  Field<double> denom;
  std::vector<Field<double>> numer;  // slots * d entries
};

LawFrame build_law_frame(const SpinorWaveFunction& psi, const LawSpec& law);

// Velocity from a single frame. Throws NodeProximityError below eps_node and
// OutOfDomainError outside the box.
std::vector<double> frame_velocity(const LawFrame& frame, std::span<const double> point,
                                   double eps_node = kNodeFloor);

enum class EvalStatus { Ok, NodeFloor, OutsideBox };

// Time-interpolated velocity between two frames (hot path, no exceptions).
// v_out has slots*d entries.
EvalStatus lerp_velocity(const LawFrame& a, const LawFrame& b, double w,
                         std::span<const double> point, std::span<double> v_out, double eps_node,
                         double* denom_out = nullptr);

// Field-level core shared with the variable-set sector flow: numerators and
// denominators live on `lat`, lerped at weight w.
EvalStatus lerp_velocity_fields(const Lattice& lat, const Field<double>& denom_a,
                                const Field<double>& denom_b,
                                std::span<const Field<double>> numer_a,
                                std::span<const Field<double>> numer_b, double w,
                                std::span<const double> point, std::span<double> v_out,
                                double eps_node, double* denom_out);

// [velocity_full] v_i = (hbar/m_i) Im[psi^* grad_i psi] / psi^* psi at Q.
std::vector<double> velocity_full(const SpinorWaveFunction& psi, const LabeledConfig& q);

// [velocity_reduced] Same with partial contractions over the complement of
// real_set; coords are the real particles' coordinates in label order.
std::vector<double> velocity_reduced(const SpinorWaveFunction& psi, const IndexSet& real_set,
                                     std::span<const double> coords);

// [velocity_symmetrized] Permutation-summed current over permutation-summed
// density, evaluated at the canonical representative of Q.
std::vector<double> velocity_symmetrized(const SpinorWaveFunction& psi, const UnorderedConfig& q);

// --- trajectory integration --------------------------------------------------

struct IntegratorControls {
  double stride = 0.01;    // snapshot stride == macro trajectory step
  int pde_substeps = 1;    // Schroedinger steps per stride (dt = stride/pde_substeps)
  double eta = 0.5;        // max displacement per substep, in units of dx
  int max_halvings = 24;   // minimum substep = stride / 2^max_halvings
  double eps_node = kNodeFloor;
  int fixed_substeps = 0;  // > 0 disables adaptive control (exact reproducibility)
};

struct TrajectoryDiagnostics {
  double min_denominator = std::numeric_limits<double>::infinity();
  long substeps = 0;
  long halvings = 0;
};

struct Trajectory {
  LawSpec law;
  std::vector<double> times;
  std::vector<std::vector<double>> configs;  // per time; canonicalized for Symmetrized
  AbortReason abort = AbortReason::None;
  double abort_time = 0.0;
  TrajectoryDiagnostics diag;
};

// Walker batch advanced in lockstep against the evolving wavefunction; the
// integrator is RK4 on the frame-interpolated velocity with adaptive substep
// halving on displacement/node triggers.
class LawIntegrator {
 public:
  LawIntegrator(SpinorWaveFunction psi0, const Potential& potential, LawSpec law,
                IntegratorControls controls);
  ~LawIntegrator();

  const LawFrame& frame_at_start() const;  // law frame for psi0

  // Advances every live walker from the current time through `strides`
  // macro steps. positions: n x dim row-major; aborted walkers keep their
  // last position and are skipped. record(t, positions) fires after every
  // stride that lands on a requested record time.
  struct Batch {
    std::vector<double> positions;  // n * dim
    std::vector<AbortReason> abort;
    std::vector<double> abort_time;
    std::vector<TrajectoryDiagnostics> diag;
    std::size_t count = 0;
    int dim = 0;
  };

  void run(Batch& batch, double T, std::span<const double> record_times,
           const std::function<void(int record_index, double t, const Batch&)>& record,
           int workers);

  double current_time() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// [integrate] Single trajectory convenience wrapper; samples at every stride
// boundary in [0, T]. For the symmetrized law `start` is canonicalized and
// sample configs are re-canonicalized.
Trajectory integrate(const SpinorWaveFunction& psi0, const Potential& potential,
                     const LawSpec& law, std::span<const double> start, double T,
                     const IntegratorControls& controls);

// [apply_permutation] is declared in configspace.hpp.

struct RelabelReport {
  bool coincide = false;
  double max_deviation = 0.0;
};

// [relabel_then_integrate_check] Integrates the symmetrized law from Q0 and
// from sigma(Q0) and compares the unordered paths at every stride boundary.
RelabelReport relabel_then_integrate_check(const SpinorWaveFunction& psi0,
                                           const Potential& potential, const LabeledConfig& q0,
                                           const Permutation& sigma, double T,
                                           const IntegratorControls& controls,
                                           double tolerance = 1e-9);

}  // namespace pilotwave
