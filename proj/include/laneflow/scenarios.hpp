#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "laneflow/config.hpp"
#include "laneflow/csv.hpp"
#include "laneflow/equilibria.hpp"
#include "laneflow/macro.hpp"
#include "laneflow/micro.hpp"

namespace laneflow {

struct MeanSample {
  double t = 0.0;
  std::vector<double> mean;
  std::vector<double> std;
};

struct QueueSample {
  double t = 0.0;
  double front = 0.0;
};

struct RunReport {
  Experiment experiment = Experiment::Custom;
  std::vector<MeanSample> means;
  std::vector<DensityField<double>> snapshots;
  std::optional<DensityField<double>> final_field;
  long macro_steps = 0;

  std::vector<int> micro_initial_counts;
  std::vector<int> micro_final_counts;
  std::vector<double> micro_initial_density;
  std::vector<double> micro_final_density;
  std::vector<LaneChangeEvent> events;
  std::vector<MicroSnapshot> micro_snapshots;
  MicroAudit micro_audit;

  std::vector<QueueSample> queue_front;
  std::vector<PortraitEntry> portrait;

  nlohmann::json diagnostics = nlohmann::json::object();
  double wall_seconds = 0.0;

  nlohmann::json to_json() const;
};

/// Amplitude that keeps eq ± bump inside [0, 1]^2.
double bump_amplitude(const std::array<double, 2>& eq);

double gaussian_bump(double x, const std::array<double, 2>& eq, double width = 100.0,
                     std::optional<double> amplitude = std::nullopt);

/// Cell-center evaluation of the uniform/segment initial data, closed cells emptied.
DensityField<double> initial_field(const ScenarioConfig& config);

/// Dirichlet sides without explicit values take the initial data at that boundary.
BoundaryCondition resolved_bc(const ScenarioConfig& config, const DensityField<double>& initial);

ClosureMask config_mask(const ScenarioConfig& config);

RunReport run_consistency(const ScenarioConfig& config);
RunReport run_global_perturbation(const ScenarioConfig& config);
RunReport run_local_perturbation(const ScenarioConfig& config);
RunReport run_lane_closure(const ScenarioConfig& config);
RunReport run_classify(const ScenarioConfig& config,
                       std::optional<std::array<double, 2>> rho = std::nullopt);
RunReport run_phase_portrait(const ScenarioConfig& config);
RunReport run_custom(const ScenarioConfig& config);

RunReport run(const ScenarioConfig& config);

CsvTable snapshot_table(const std::vector<DensityField<double>>& snapshots);
CsvTable means_table(const std::vector<MeanSample>& means);
CsvTable events_table(const std::vector<LaneChangeEvent>& events);
CsvTable micro_snapshot_table(const std::vector<MicroSnapshot>& snapshots);

/// Writes the CSV series and report.json into `dir`, creating it if needed.
void write_outputs(const RunReport& report, const std::string& dir);

}  // namespace laneflow
