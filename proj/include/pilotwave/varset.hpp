#pragma once

#include <optional>
#include <random>

#include "pilotwave/dynamics.hpp"
#include "pilotwave/stats.hpp"

namespace pilotwave {

// Physical-space region R (an interval, possibly half-infinite) whose
// membership classifies which particles are real. Time independent, so the
// boundary's time-normal component vanishes. Desk scale is d = 1.
struct Region {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();  // half-open [lo, hi)

  bool contains(double x) const { return x >= lo && x < hi; }
  static Region half_line(double lo);
  static Region interval(double lo, double hi);
  static Region whole();
};

struct BoundaryFace {
  double position = 0.0;
  // unit normal pointing out of R's complement into R along the particle's
  // axis; +1 at a left face of R, -1 at a right face
  double inward_normal = 1.0;
};

class RegionPartition {
 public:
  RegionPartition(GridPtr grid, Region region);

  const Region& region() const { return region_; }
  const GridPtr& grid() const { return grid_; }

  // Faces of R interior to the box (empty when R covers the whole box).
  const std::vector<BoundaryFace>& faces() const { return faces_; }

  // Sector of a full configuration: the labels of the particles inside R.
  IndexSet classify(std::span<const double> q) const;

  bool cell_outside(double node_coord) const { return !region_.contains(node_coord); }

 private:
  GridPtr grid_;
  Region region_;
  std::vector<BoundaryFace> faces_;
};

// Point of the disjoint-union state space: which particles are real plus
// their coordinates (label order). The empty sector is a single abstract
// point with no coordinates.
struct ProjectedState {
  IndexSet real_set;
  std::vector<double> coords;  // #real_set * d
  double time = 0.0;
};

// [project] pi(q, t): classify membership, keep the real coordinates.
// Boundary-exact coordinates are perturbed by half of 1e-9*dx; the optional
// out-parameter reports that the perturbation fired.
ProjectedState project(const RegionPartition& partition, const LabeledConfig& q,
                       bool* perturbed = nullptr);

struct JumpEvent {
  double time = 0.0;
  IndexSet src_set, dst_set;
  int particle = 0;     // label that crossed
  int face_index = 0;   // which face of R
  std::vector<double> coords;  // destination coordinates
};

// Per-snapshot fields of one sector: restricted contractions of the density
// and currents over the unreal coordinates (kept to their outside-R side),
// plus creation-flux fields for each unreal particle at each face.
struct SectorFrame {
  IndexSet real_set;
  Lattice lattice;  // reduced lattice over real_set
  double time = 0.0;
  Field<double> denom;               // fiber density on the lattice
  std::vector<Field<double>> numer;  // #real * d current components
  struct CreationFlux {
    int particle = 0;
    int face_index = 0;
    Field<double> flux;  // signed normal flux n . j_k at the face
  };
  std::vector<CreationFlux> fluxes;
};

SectorFrame build_sector_frame(const SpinorWaveFunction& psi, const RegionPartition& partition,
                               const IndexSet& real_set);

// All 2^N sectors, indexed by bitmask.
std::vector<SectorFrame> build_all_sector_frames(const SpinorWaveFunction& psi,
                                                 const RegionPartition& partition);

// [fiber_density] Integral of |psi|^2 over the unreal coordinates restricted
// to their outside-R side, at the state's real coordinates.
double fiber_density(const SpinorWaveFunction& psi, const RegionPartition& partition,
                     const ProjectedState& state);

// [fiber_current] Component vector (d entries) for real particle `i`.
std::vector<double> fiber_current(const SpinorWaveFunction& psi, const RegionPartition& partition,
                                  const ProjectedState& state, int particle);

// Probability mass of each sector (integral of the fiber density over the
// in-R real coordinates); sums to 1.
std::vector<double> sector_masses(const SpinorWaveFunction& psi, const RegionPartition& partition);

struct Crossing {
  int particle = 0;    // for creation: unreal label entering R
  int face_index = 0;
};

// [jump_rate] Creation rate for an unreal particle materializing at a face:
// [n . j_k^boundary]^+ / fiber_density. For a real particle (annihilation)
// the transition is carried deterministically by the flow; the rate
// degenerates to 0 off the boundary and +inf exactly on it.
double jump_rate(const SpinorWaveFunction& psi, const RegionPartition& partition,
                 const ProjectedState& state, const Crossing& crossing);

struct JumpPath {
  std::vector<double> times;
  std::vector<ProjectedState> states;  // at the requested sample times
  std::vector<JumpEvent> events;
  AbortReason abort = AbortReason::None;
  double min_denominator = std::numeric_limits<double>::infinity();
};

struct JumpProcessControls {
  IntegratorControls base;
  double rate_bound_floor = 1.0;  // lower bound for the thinning envelope
  double bound_safety = 2.0;      // envelope = safety * max rate of previous stride
};

// [simulate_jump_process] Deterministic sector flow interrupted by
// exponential-clock creation jumps (thinned against a per-stride bound);
// real particles reaching the boundary cross deterministically.
JumpPath simulate_jump_process(const SpinorWaveFunction& psi0, const Potential& potential,
                               const RegionPartition& partition, const ProjectedState& initial,
                               double T, const JumpProcessControls& controls, uint64_t seed,
                               std::span<const double> sample_times);

// Batch of paths with quantum-equilibrium initial states (full-configuration
// draws from |psi0|^2 pushed through pi), advanced in lockstep.
struct JumpEnsembleResult {
  std::vector<double> sample_times;
  // per time, per path
  std::vector<std::vector<ProjectedState>> states;
  std::vector<AbortReason> aborts;
  double aborted_fraction = 0.0;
  std::vector<JumpEvent> events;  // concatenated, path order
};

JumpEnsembleResult run_jump_ensemble(const SpinorWaveFunction& psi0, const Potential& potential,
                                     const RegionPartition& partition, double T, std::size_t n,
                                     const JumpProcessControls& controls, uint64_t seed,
                                     std::span<const double> sample_times, int workers);

// [projection_oracle] Conventional full-law trajectories projected through
// pi at the sample times: the non-Markov reference law the jump process must
// match one time at a time.
JumpEnsembleResult projection_oracle(const SpinorWaveFunction& psi0, const Potential& potential,
                                     const RegionPartition& partition, double T, std::size_t n,
                                     const IntegratorControls& controls, uint64_t seed,
                                     std::span<const double> sample_times, int workers);

// Histogram over (sector, binned coords). Bins are equal-mass partitions of
// each sector's fiber density (restricted to in-R real coordinates), with a
// bin budget split across sectors proportionally to sector mass.
class SectorBinning {
 public:
  SectorBinning(const SpinorWaveFunction& psi_ref, const RegionPartition& partition,
                int total_bins);

  int num_bins() const { return num_bins_; }
  const std::vector<double>& expected_masses() const { return expected_; }
  int bin_of(const ProjectedState& s) const;
  std::vector<std::size_t> counts(std::span<const ProjectedState> states) const;

  int num_sectors() const { return static_cast<int>(offset_.size()); }
  int sector_offset(uint32_t mask) const { return offset_[mask]; }
  int sector_bin_count(uint32_t mask) const;

 private:
  int num_bins_ = 0;
  std::vector<double> expected_;
  std::vector<int> offset_;  // per sector bitmask
  std::vector<std::optional<EqualMassBinner>> binners_;  // per sector bitmask
};

}  // namespace pilotwave
