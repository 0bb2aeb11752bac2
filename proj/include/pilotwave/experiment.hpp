#pragma once

#include <filesystem>
#include <iosfwd>

#include "pilotwave/ensemble.hpp"

namespace pilotwave {

// Potential described by configuration (materialized against a grid later).
struct PotentialSpec {
  Potential::Kind kind = Potential::Kind::Zero;
  std::vector<double> stiffness;
  std::vector<double> scalar;
  std::vector<cxd> matrix;

  Potential materialize(const Grid& grid) const;
};

struct ExperimentSpec {
  enum class Kind { Equivariance, Equivalence, Jump };
  Kind kind = Kind::Equivariance;

  LawSpec law;                     // Equivariance / Jump (law ignored for Jump)
  LawSpec law_b;                   // Equivalence
  IndexSet observables;            // Equivalence (labeled)
  bool unordered = false;          // Equivalence on sorted coordinates
  std::optional<Region> region;    // Jump
  double T = 1.0;
  std::size_t samples = 10000;
  std::vector<uint64_t> seeds;     // one statistical repetition per seed
  int min_passing_seeds = 0;       // default: ceil(4/5 of seeds)
  double alpha = 0.01;
  int bins = 64;
  std::vector<double> sample_times;
  // negative-control hooks
  double velocity_scale = 1.0;
  bool wrong_density = false;
};

struct RunConfig {
  GridSpec grid;
  ModelParams model;
  PotentialSpec potential;
  StateRecipe state;
  double dt = 1e-3;      // Schroedinger step
  double stride = 1e-2;  // snapshot stride (multiple of dt)
  ExperimentSpec experiment;
  // integrator overrides
  double eta = 0.5;
  int max_halvings = 24;
  int fixed_substeps = 0;
  // dump-state subcommand
  double dump_time = 0.0;
  std::string dump_filename = "state.bin";
  uint64_t seed = 1;
  std::string output_dir = "out";
  std::string raw_json;  // canonical serialization for hashing/manifest

  IntegratorControls controls() const;
};

// [parse_config] Strict JSON parsing: duplicate keys are parse errors,
// unknown keys are validation errors naming the field path, cross-references
// (index sets vs N, stride vs dt, ...) are validated, defaults applied.
RunConfig parse_config(const std::string& path);
RunConfig parse_config_text(const std::string& text, const std::string& origin = "<memory>");

struct RunArtifacts {
  bool pass = false;
  std::string report_path;
  std::string manifest_path;
  int exit_code = 0;
};

// [run] Executes the configured experiment, writes manifest.json,
// report.json and CSV sample tables under output_dir. Exit code 0 on PASS,
// 1 on statistical FAIL or an aborted-fraction breach.
RunArtifacts run_experiment(const RunConfig& config, std::ostream& log);

// Writes the state configured by `state`/`grid` (optionally evolved to
// `dump.time`) in the binary snapshot format.
std::string dump_state_command(const RunConfig& config, std::ostream& log);

// --- bundled verification scenarios -------------------------------------

struct ScenarioLine {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct ScenarioReport {
  std::string name;
  bool pass = false;
  double seconds = 0.0;
  std::vector<ScenarioLine> lines;
};

struct ScenarioOptions {
  double velocity_scale = 1.0;  // verify --corrupt-velocities hook
  int workers = 0;
};

struct Scenario {
  std::string name;
  std::string summary;
  std::function<ScenarioReport(const ScenarioOptions&)> run;
};

// The acceptance scenarios bundled with the tool, in execution order.
const std::vector<Scenario>& bundled_scenarios();

// [verify] Runs scenarios whose names are in `only` (all when empty... an
// explicitly empty selection is a vacuous pass with a warning). Prints one
// line per criterion; returns process exit code.
int run_verify(const std::vector<std::string>& only, bool only_given, const ScenarioOptions& options,
               std::ostream& out);

// --- report/manifest serialization ---------------------------------------

void write_ensemble_csv(const std::filesystem::path& path, const EnsembleResult& result,
                        int space_dim);
void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& trajectory,
                          int space_dim);
void write_jump_events_csv(const std::filesystem::path& path,
                           std::span<const JumpEvent> events);
void write_sector_histogram_json(const std::filesystem::path& path,
                                 const SectorBinning& binning,
                                 std::span<const std::size_t> counts);

}  // namespace pilotwave
