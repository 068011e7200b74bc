#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "votingfarm/scenario.hpp"

namespace sc = vf::scenario;

int main(int argc, char** argv) {
  CLI::App app{"Voting farm: N-modular redundancy voters and metric-space voting algorithms"};
  app.require_subcommand(1);
  int verbosity = 0;
  app.add_flag("-v,--verbose", verbosity, "Diagnostics on stderr (repeat for more)");

  auto* vote = app.add_subcommand("vote", "Run one voting algorithm over the given values");
  std::string alg_name;
  double epsilon = vf::kDefaultEpsilon;
  double scaling = vf::kDefaultScalingFactor;
  std::vector<std::string> values;
  vote->add_option("--alg", alg_name,
                   "exact | majority | median | plurality | weighted-average | simple-majority | "
                   "simple-average, or id 0..6")
      ->required();
  vote->add_option("--epsilon", epsilon, "Agreement threshold");
  vote->add_option("--scaling", scaling, "Weighted-average scaling factor");
  vote->add_option("values", values, "Reals, or 0x-prefixed hex byte strings")->required();

  auto* sim = app.add_subcommand("simulate", "Run an N-voter farm with fault injection");
  sim->footer(std::string(sc::kConfigGrammar));
  std::string config_path;
  bool trace = false;
  std::uint64_t seed = 0;
  std::string timeout;
  sim->add_option("--config", config_path, "Scenario file")->required();
  sim->add_flag("--trace", trace, "Print the voter event log");
  auto* seed_opt = sim->add_option("--seed", seed, "Schedule randomization seed");
  auto* timeout_opt = sim->add_option("--timeout", timeout, "Wait bound, e.g. 500ms or 2s");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (verbosity > 0) vf::set_log_level(static_cast<vf::LogLevel>(std::min(verbosity, 3)));

  if (*vote) {
    auto alg = sc::parse_algorithm(alg_name);
    if (!alg) {
      std::cerr << "error: unknown algorithm '" << alg_name << "'\n";
      return 2;
    }
    auto r = sc::cmd_vote(*alg, values, epsilon, scaling);
    (r.exit_code == 2 ? std::cerr : std::cout) << r.text;
    return r.exit_code;
  }

  std::ifstream in(config_path);
  if (!in) {
    std::cerr << "error: cannot read " << config_path << "\n";
    return 2;
  }
  auto parsed = sc::parse_config(in);
  if (auto* err = std::get_if<sc::UsageError>(&parsed)) {
    std::cerr << "error: " << config_path << ": " << err->message << "\n";
    return 2;
  }
  auto cfg = std::get<sc::ScenarioConfig>(parsed);
  if (*seed_opt) cfg.seed = seed;
  if (*timeout_opt) {
    auto d = sc::parse_duration(timeout);
    if (!d) {
      std::cerr << "error: bad --timeout '" << timeout << "'\n";
      return 2;
    }
    cfg.timeout = *d;
  }
  auto r = sc::cmd_simulate(cfg, trace);
  std::cout << r.text;
  return r.exit_code;
}
