// Acceptance suite: runs the bundled scenarios and prints one pass/fail line
// per criterion. `--only <name>` restricts the run (used by ctest to give
// each criterion its own test).

#include <cstring>
#include <iostream>
#include <vector>

#include "pilotwave/experiment.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> only;
  bool only_given = false;
  pilotwave::ScenarioOptions options;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0) {
      only_given = true;
      for (int j = i + 1; j < argc; ++j) only.emplace_back(argv[j]);
      break;
    }
  }
  return pilotwave::run_verify(only, only_given, options, std::cout);
}
