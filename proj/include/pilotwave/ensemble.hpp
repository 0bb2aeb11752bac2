#pragma once

#include "pilotwave/sampling.hpp"
#include "pilotwave/varset.hpp"

namespace pilotwave {

struct TestLine {
  std::string name;
  std::string kind;  // "ks" | "chi2"
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
  bool pass = false;
};

struct Manifest {
  uint64_t seed = 0;
  std::string config_hash;
  std::string version;
  int workers = 0;
};

// [run_ensemble] output: per sample time, an n x dim table in walker order.
struct EnsembleResult {
  LawSpec law;
  std::vector<double> sample_times;
  std::vector<std::vector<std::vector<double>>> samples;  // [time][walker][dim]
  std::vector<AbortReason> aborts;
  std::size_t aborted_count = 0;
  double aborted_fraction = 0.0;
  bool valid = true;  // false when aborted fraction exceeds 1%
  Manifest manifest;
};

struct EnsemblePlan {
  LawSpec law;
  double T = 1.0;
  std::size_t n = 1000;  // >= 100
  IntegratorControls controls;
  uint64_t seed = 1;
  std::vector<double> sample_times;  // defaults to {T}
  int workers = 0;                   // 0: default_worker_count()
  // test hook: sample initial configurations from this density instead of
  // the law's equivariant density (wrong-density negative control)
  const Field<double>* init_density_override = nullptr;
};

EnsembleResult run_ensemble(const SpinorWaveFunction& psi0, const Potential& potential,
                            const EnsemblePlan& plan);

// Equivariant density of a law for a given snapshot: |psi|^2, the reduced
// density, or the normalized permutation-summed density.
Field<double> law_density(const SpinorWaveFunction& psi, const LawSpec& law);

struct CheckReport {
  std::vector<TestLine> tests;
  bool pass = false;
  double aborted_fraction = 0.0;
  bool valid = true;
  std::size_t n = 0;
};

struct CheckOptions {
  double alpha = 0.01;
  int bins = 64;
  int workers = 0;
  std::vector<double> sample_times;  // defaults to {T}
};

// [equivariance_check] Sample the law's equivariant density at t=0, evolve
// to T, compare endpoints against the density of the evolved state:
// per-coordinate two-sample KS against fresh draws plus a joint equal-mass
// binned chi-square with exact expected masses. The symmetrized law is
// compared through sorted coordinates.
CheckReport equivariance_check(const SpinorWaveFunction& psi0, const Potential& potential,
                               const EnsemblePlan& plan, const CheckOptions& options);

// [equivalence_check] Run both laws and compare the observable particles'
// endpoint positions (per-coordinate KS + joint binned chi-square, both
// two-sample). `unordered` compares sorted coordinate statistics instead of
// labeled marginals (used for full vs symmetrized).
struct EquivalenceSpec {
  LawSpec law_a;
  LawSpec law_b;
  IndexSet observables;   // labeled comparison: subset of both laws' real particles
  bool unordered = false; // compare sorted coordinates of all particles
};

CheckReport equivalence_check(const SpinorWaveFunction& psi0, const Potential& potential,
                              const EquivalenceSpec& spec, const EnsemblePlan& plan,
                              const CheckOptions& options);

// Jump-process law over (sector, coords): one-time marginals against the
// fiber densities (equivariance) and against the projection oracle
// (Markovization consistency) at every sample time.
struct JumpCheckReport {
  CheckReport report;
  std::vector<double> sector_mass_error;  // |1 - sum of sector masses| per time
  JumpEnsembleResult process;
  JumpEnsembleResult oracle;
};

JumpCheckReport jump_process_check(const SpinorWaveFunction& psi0, const Potential& potential,
                                   const RegionPartition& partition, double T, std::size_t n,
                                   const JumpProcessControls& controls, uint64_t seed,
                                   const CheckOptions& options);

// Extract observable marginals from an ensemble sample table.
std::vector<std::vector<double>> marginal_of(const std::vector<std::vector<double>>& table,
                                             const IndexSet& observables, const IndexSet& carrier,
                                             int space_dim);
std::vector<std::vector<double>> sorted_coords_of(const std::vector<std::vector<double>>& table,
                                                  int space_dim);

}  // namespace pilotwave
