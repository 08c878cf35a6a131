#include <array>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "laneflow/scenarios.hpp"

namespace {

struct Args {
  std::string config;
  std::string out;
  std::optional<double> rho1;
  std::optional<double> rho2;
};

void add_common(CLI::App* cmd, Args& a, bool config_required) {
  auto* opt = cmd->add_option("--config", a.config, "scenario file");
  if (config_required) opt->required();
  cmd->add_option("--out", a.out, "output directory (overrides [output] dir)");
}

void print_summary(const laneflow::RunReport& r) {
  std::cout << r.to_json().dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  using namespace laneflow;
  CLI::App app{"lanesim: multi-lane traffic simulations"};
  app.require_subcommand(1);
  Args a;

  const std::pair<const char*, Experiment> commands[] = {
      {"consistency", Experiment::Consistency},
      {"perturb-global", Experiment::GlobalPerturbation},
      {"perturb-local", Experiment::LocalPerturbation},
      {"lane-closure", Experiment::LaneClosure},
      {"classify", Experiment::Classify},
      {"phase-portrait", Experiment::PhasePortrait},
  };
  for (const auto& [name, exp] : commands) {
    auto* cmd = app.add_subcommand(name);
    add_common(cmd, a, exp != Experiment::Classify);
    if (exp == Experiment::Classify) {
      cmd->add_option("--rho1", a.rho1, "lane 1 density");
      cmd->add_option("--rho2", a.rho2, "lane 2 density");
    }
  }
  auto* run_cmd = app.add_subcommand("run", "run whatever experiment the config names");
  add_common(run_cmd, a, true);

  CLI11_PARSE(app, argc, argv);

  try {
    const CLI::App* used = app.get_subcommands().front();
    std::optional<Experiment> exp;
    for (const auto& [name, e] : commands)
      if (used->get_name() == name) exp = e;

    ScenarioConfig cfg;
    if (!a.config.empty()) {
      cfg = load_config(a.config, exp);
    } else {
      cfg = parse_config("", Experiment::Classify);
    }
    const std::string out = a.out.empty() ? cfg.output_dir : a.out;

    RunReport report;
    if (cfg.experiment == Experiment::Classify && (a.rho1 || a.rho2)) {
      if (!a.rho1 || !a.rho2) throw ConfigError("--rho1 and --rho2 must be given together");
      report = run_classify(cfg, std::array<double, 2>{*a.rho1, *a.rho2});
    } else {
      report = run(cfg);
    }
    write_outputs(report, out);
    print_summary(report);
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DomainError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
