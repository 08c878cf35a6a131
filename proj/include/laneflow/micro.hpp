#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "laneflow/core.hpp"

namespace laneflow {

/// `lane` is 0-based.
struct Vehicle {
  int id = 0;
  double position = 0.0;
  int lane = 0;
};

struct LaneChangeEvent {
  double time = 0.0;
  int vehicle = 0;
  int from_lane = 0;
  int to_lane = 0;
  double position = 0.0;
};

/// Ring road of length `road_length`. `vehicles[id].id == id`; `lanes[j]` lists the ids in
/// lane j sorted by (position, id).
struct MicroState {
  ModelParams params;
  std::vector<SpeedLaw<double>> laws;
  double road_length = 1.0;
  double time = 0.0;
  std::vector<Vehicle> vehicles;
  std::vector<std::vector<int>> lanes;

  int lane_count() const { return static_cast<int>(lanes.size()); }
  const Vehicle& vehicle(int id) const;
};

struct Neighbors {
  std::optional<int> follower;
  std::optional<int> leader;
};

enum class MicroEquilibrium { Global, LocalOnly, None };

/// Builds a state from explicit vehicles, rejecting duplicate positions within a lane.
MicroState make_state(std::vector<Vehicle> vehicles, double road_length, const ModelParams& params);

MicroState init_uniform(const std::vector<int>& counts, double road_length,
                        const ModelParams& params);

Neighbors neighbors(const MicroState& state, int vehicle, int lane);

/// Distance to the in-lane leader on the ring; `road_length` for a lone vehicle.
double headway(const MicroState& state, int vehicle);

double local_density(const MicroState& state, int vehicle);

/// Velocities indexed by vehicle id.
Eigen::VectorXd ode_rhs(const MicroState& state);

MicroState step_continuous(const MicroState& state, double dt);

bool lane_change_admissible(const MicroState& state, int vehicle, int target_lane);

std::pair<MicroState, std::vector<LaneChangeEvent>> apply_lane_changes(const MicroState& state);

MicroEquilibrium detect_equilibrium(const MicroState& state, double tol = 1e-9);

/// Largest step for which no vehicle travels more than a tenth of the jam spacing.
double micro_dt_bound(const MicroState& state);

struct MicroSnapshot {
  double time = 0.0;
  std::vector<Vehicle> vehicles;
};

struct MicroAudit {
  long sweeps = 0;
  long gap_violations = 0;
  long count_violations = 0;
};

struct MicroRunOptions {
  int snapshot_stride = 50;
  bool lane_changes = true;
  bool audit = true;
};

struct MicroRun {
  MicroState state;
  std::vector<LaneChangeEvent> events;
  std::vector<MicroSnapshot> snapshots;
  MicroAudit audit;
  double dt_used = 0.0;
};

MicroRun run_micro(MicroState state, double T, double dt, const MicroRunOptions& options = {});

/// Mean local density over the vehicles of one lane; 0 for an empty lane.
double mean_local_density(const MicroState& state, int lane);

}  // namespace laneflow
