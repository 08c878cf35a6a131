#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "laneflow/core.hpp"
#include "laneflow/macro.hpp"

namespace laneflow {

enum class Experiment {
  Consistency,
  GlobalPerturbation,
  LocalPerturbation,
  LaneClosure,
  Classify,
  PhasePortrait,
  Custom
};

std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& name);

enum class InitialKind { Uniform, Segments, Vehicles };

/// Piecewise-constant value on [from, to).
struct Segment {
  double from = 0.0;
  double to = 0.0;
  double value = 0.0;

  friend bool operator==(const Segment&, const Segment&) = default;
};

struct InitialLane {
  InitialKind kind = InitialKind::Uniform;
  double value = 0.0;
  std::vector<Segment> segments;  ///< cells not covered keep `value`
  int count = 0;

  friend bool operator==(const InitialLane&, const InitialLane&) = default;
};

struct ClosureSpec {
  int lane = 0;  ///< 0-based
  double start = 0.0;
  double end = 0.0;

  friend bool operator==(const ClosureSpec&, const ClosureSpec&) = default;
};

struct ScenarioConfig {
  Experiment experiment = Experiment::Custom;
  ModelParams model;
  double tol_eq = 2e-3;
  Grid<double> grid;
  double T = 1.0;
  double cfl = 0.9;
  double micro_dt = 0.01;
  double ode_dt = 1e-3;
  BoundaryCondition bc;
  std::optional<std::array<double, 2>> equilibrium;
  double shift = 0.0;
  std::optional<double> amplitude;  ///< overrides the bump amplitude rule
  double bump_width = 100.0;
  std::vector<InitialLane> initial;  ///< one per lane
  std::optional<ClosureSpec> closure;
  int portrait_resolution = 20;
  std::string output_dir = "out";
  int snapshot_stride = 50;
  int micro_snapshot_stride = 1000;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

/// Parses the `key = value` / `[section]` format. `fallback` is used when the text has no
/// `experiment` key; a conflicting key is an error when `fallback` is given.
ScenarioConfig parse_config(const std::string& text,
                            std::optional<Experiment> fallback = std::nullopt);

ScenarioConfig load_config(const std::string& path,
                           std::optional<Experiment> fallback = std::nullopt);

/// Full-precision text that parses back to an equal config.
std::string serialize(const ScenarioConfig& config);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace laneflow
