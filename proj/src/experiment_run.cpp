#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "pilotwave/experiment.hpp"

namespace pilotwave {

using nlohmann::json;

namespace {

json test_lines_json(const std::vector<TestLine>& tests) {
  json arr = json::array();
  for (const TestLine& t : tests)
    arr.push_back({{"name", t.name},
                   {"kind", t.kind},
                   {"statistic", t.statistic},
                   {"dof", t.dof},
                   {"p", t.p_value},
                   {"pass", t.pass}});
  return arr;
}

std::string hash_hex(const std::string& bytes) {
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << fnv1a64(bytes);
  return ss.str();
}

}  // namespace

RunArtifacts run_experiment(const RunConfig& config, std::ostream& log) {
  const ExperimentSpec& exp = config.experiment;
  GridPtr grid = Grid::build(config.grid, config.model);
  const Potential potential = config.potential.materialize(*grid);
  const SpinorWaveFunction psi0 = init_state(config.state, grid);
  const IntegratorControls controls = config.controls();
  const int workers = default_worker_count();

  const std::filesystem::path outdir(config.output_dir);
  std::filesystem::create_directories(outdir);

  json report;
  report["experiment"] =
      exp.kind == ExperimentSpec::Kind::Equivariance
          ? "equivariance"
          : (exp.kind == ExperimentSpec::Kind::Equivalence ? "equivalence" : "jump");
  report["seeds"] = json::array();

  CheckOptions options;
  options.alpha = exp.alpha;
  options.bins = exp.bins;
  options.workers = workers;
  options.sample_times = exp.sample_times;

  int passing = 0;
  bool any_invalid = false;
  std::string invalid_reason;

  // the wrong-density negative control samples initial configurations from a
  // uniform density instead of the law's equivariant density
  std::optional<Field<double>> uniform_density;

  for (std::size_t si = 0; si < exp.seeds.size(); ++si) {
    const uint64_t seed = exp.seeds[si];
    CheckReport check;
    if (exp.kind == ExperimentSpec::Kind::Jump) {
      RegionPartition partition(grid, *exp.region);
      JumpProcessControls jctl;
      jctl.base = controls;
      JumpCheckReport jr = jump_process_check(psi0, potential, partition, exp.T, exp.samples,
                                              jctl, seed, options);
      check = jr.report;
      for (std::size_t ti = 0; ti < jr.sector_mass_error.size(); ++ti) {
        TestLine line;
        line.name = "sector-mass-conservation[" + std::to_string(ti) + "]";
        line.kind = "exact";
        line.statistic = jr.sector_mass_error[ti];
        line.p_value = 1.0;
        line.pass = jr.sector_mass_error[ti] < 1e-8;
        check.tests.push_back(line);
        check.pass = check.pass && line.pass;
      }
      if (si == 0) {
        write_jump_events_csv(outdir / "jump_events.csv", jr.process.events);
        const SpinorWaveFunction psi_T =
            evolve(psi0, config.dt, static_cast<int>(std::lround(exp.T / config.dt)), potential);
        SectorBinning binning(psi_T, partition, exp.bins);
        std::vector<ProjectedState> last;
        for (std::size_t w = 0; w < jr.process.states.back().size(); ++w)
          if (jr.process.aborts[w] == AbortReason::None)
            last.push_back(jr.process.states.back()[w]);
        write_sector_histogram_json(outdir / "sector_histogram.json", binning,
                                    binning.counts(last));
      }
    } else {
      EnsemblePlan plan;
      plan.law = exp.law;
      plan.law.velocity_scale = exp.velocity_scale;
      plan.T = exp.T;
      plan.n = exp.samples;
      plan.controls = controls;
      plan.seed = seed;
      plan.workers = workers;
      if (!exp.sample_times.empty()) plan.sample_times = exp.sample_times;
      if (exp.wrong_density) {
        if (!uniform_density)
          uniform_density = Field<double>(
              Lattice(grid, exp.law.kind == LawKind::Reduced ? exp.law.real_set.members()
                                                             : IndexSet::full(grid->num_particles()).members()),
              1.0);
        plan.init_density_override = &*uniform_density;
      }

      if (exp.kind == ExperimentSpec::Kind::Equivariance) {
        check = equivariance_check(psi0, potential, plan, options);
        if (si == 0) {
          EnsembleResult sample_run = run_ensemble(psi0, potential, plan);
          write_ensemble_csv(outdir / "samples.csv", sample_run, grid->space_dim());
        }
      } else {
        EquivalenceSpec espec;
        espec.law_a = exp.law;
        espec.law_a.velocity_scale = exp.velocity_scale;
        espec.law_b = exp.law_b;
        espec.observables = exp.observables;
        espec.unordered = exp.unordered;
        check = equivalence_check(psi0, potential, espec, plan, options);
      }
    }

    if (!check.valid) {
      any_invalid = true;
      invalid_reason = "aborted-trajectory fraction " + std::to_string(check.aborted_fraction) +
                       " exceeds 1%";
    }
    if (check.pass) ++passing;

    json seed_entry;
    seed_entry["seed"] = seed;
    seed_entry["pass"] = check.pass;
    seed_entry["valid"] = check.valid;
    seed_entry["aborted_fraction"] = check.aborted_fraction;
    seed_entry["tests"] = test_lines_json(check.tests);
    report["seeds"].push_back(std::move(seed_entry));
    log << "seed " << seed << ": " << (check.pass ? "pass" : "FAIL") << "\n";
  }

  const bool pass = !any_invalid && passing >= exp.min_passing_seeds;
  report["passing_seeds"] = passing;
  report["min_passing_seeds"] = exp.min_passing_seeds;
  report["pass"] = pass;
  if (any_invalid) report["invalid_reason"] = invalid_reason;

  json manifest;
  manifest["config_hash"] = hash_hex(config.raw_json);
  manifest["seed"] = config.seed;
  manifest["version"] = version_string();
  manifest["workers"] = workers;

  RunArtifacts artifacts;
  artifacts.pass = pass;
  artifacts.report_path = (outdir / "report.json").string();
  artifacts.manifest_path = (outdir / "manifest.json").string();
  {
    std::ofstream f(artifacts.report_path);
    f << report.dump(2) << '\n';
  }
  {
    std::ofstream f(artifacts.manifest_path);
    f << manifest.dump(2) << '\n';
  }
  artifacts.exit_code = pass ? 0 : 1;
  log << (pass ? "PASS" : "FAIL") << " (" << passing << "/" << exp.seeds.size()
      << " seeds passing, need " << exp.min_passing_seeds << ")\n";
  return artifacts;
}

std::string dump_state_command(const RunConfig& config, std::ostream& log) {
  GridPtr grid = Grid::build(config.grid, config.model);
  const Potential potential = config.potential.materialize(*grid);
  SpinorWaveFunction psi = init_state(config.state, grid);
  if (config.dump_time > 0) {
    const long steps = std::lround(config.dump_time / config.dt);
    if (std::abs(steps * config.dt - config.dump_time) > 1e-9)
      throw ValidationError("dump.time must be a whole number of dt steps");
    psi = evolve(psi, config.dt, static_cast<int>(steps), potential);
  }
  std::filesystem::create_directories(config.output_dir);
  const std::string path = (std::filesystem::path(config.output_dir) / config.dump_filename).string();
  dump_state(psi, path);
  log << "wrote " << path << " (norm^2 = " << std::setprecision(12) << psi.norm_sq() << ")\n";
  return path;
}

}  // namespace pilotwave
