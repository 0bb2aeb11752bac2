// pilotwave: configuration-driven trajectory experiments and the bundled
// verification suite.
//
// Exit codes: 0 pass, 1 statistical fail, 2 parse error, 3 validation or
// resource error.

#include <iostream>

#include "CLI11.hpp"
#include "pilotwave/experiment.hpp"

namespace {

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const pilotwave::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 2;
  } catch (const pilotwave::ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 3;
  } catch (const pilotwave::ResourceError& e) {
    std::cerr << "resource error: " << e.what() << "\n";
    return 3;
  } catch (const pilotwave::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pilot-wave trajectory laws: experiments and verification"};
  app.require_subcommand(1);

  std::string config_path;
  uint64_t seed_override = 0;
  bool seed_given = false;

  CLI::App* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("config", config_path, "JSON experiment configuration")->required();
  run->add_option("--seed", seed_override, "override the config seed");

  CLI::App* verify = app.add_subcommand("verify", "run the bundled acceptance scenarios");
  std::vector<std::string> only;
  bool list_scenarios = false;
  double corrupt_scale = 1.0;
  verify->add_option("--only", only,
                     "run only the named scenarios (an empty selection passes vacuously)")
      ->expected(0, -1);
  verify->add_flag("--list", list_scenarios, "list scenario names and exit");
  verify->add_option("--corrupt-velocities", corrupt_scale,
                     "test hook: scale all law velocities (sanity-checks the suite)");

  CLI::App* dump = app.add_subcommand("dump-state", "write the configured state snapshot");
  std::string dump_config;
  dump->add_option("config", dump_config, "JSON experiment configuration")->required();

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    seed_given = run->count("--seed") > 0;
    return guarded([&] {
      pilotwave::RunConfig cfg = pilotwave::parse_config(config_path);
      if (seed_given) {
        cfg.seed = seed_override;
        // re-derive per-repetition seeds from the override
        for (std::size_t i = 0; i < cfg.experiment.seeds.size(); ++i)
          cfg.experiment.seeds[i] =
              pilotwave::substream_seed(cfg.seed, pilotwave::StreamTag::Generic, 100 + i);
      }
      return pilotwave::run_experiment(cfg, std::cout).exit_code;
    });
  }
  if (verify->parsed()) {
    if (list_scenarios) {
      for (const pilotwave::Scenario& s : pilotwave::bundled_scenarios())
        std::cout << s.name << "  -  " << s.summary << "\n";
      return 0;
    }
    const bool only_given = verify->count("--only") > 0;
    return guarded([&] {
      pilotwave::ScenarioOptions options;
      options.velocity_scale = corrupt_scale;
      return pilotwave::run_verify(only, only_given, options, std::cout);
    });
  }
  if (dump->parsed()) {
    return guarded([&] {
      pilotwave::RunConfig cfg = pilotwave::parse_config(dump_config);
      pilotwave::dump_state_command(cfg, std::cout);
      return 0;
    });
  }
  return 0;
}
