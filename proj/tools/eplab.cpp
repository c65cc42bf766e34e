// eplab <experiment> --seed N --out DIR [--set key=value ...]
// Exit status: 0 all checks pass, 2 some check failed, 1 runtime error.

#include "eplab/experiments.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

int main(int argc, char** argv) {
  CLI::App app{"Expectation propagation experiments"};
  std::string experiment;
  std::uint64_t seed = 0;
  std::string out;
  std::vector<std::string> sets;
  app.add_option("experiment", experiment, "experiment to run")
      ->required()
      ->check(CLI::IsMember(eplab::experiment_names()));
  app.add_option("--seed", seed, "random seed")->required();
  app.add_option("--out", out, "output directory")->required();
  app.add_option("--set", sets, "parameter override key=value (repeatable)");
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help is exit code 0; any usage error is a runtime error (1)
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    eplab::ExperimentConfig cfg;
    cfg.experiment = experiment;
    cfg.seed = seed;
    cfg.output_dir = out;
    for (const auto& s : sets) {
      auto [k, v] = eplab::parse_override(s);
      cfg.overrides[k] = v;
    }
    const eplab::ExperimentOutcome outcome = eplab::run_experiment(cfg);
    for (const auto& c : outcome.checks) {
      std::printf("%s %s: %s\n", c.passed ? "ok  " : "FAIL", c.name.c_str(), c.detail.c_str());
    }
    for (const auto& a : outcome.artifacts) std::printf("wrote %s\n", a.c_str());
    return outcome.passed() ? 0 : 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "eplab: %s\n", e.what());
    return 1;
  }
}
