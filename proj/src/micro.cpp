#include "laneflow/micro.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

namespace laneflow {

namespace {

bool before(const MicroState& s, int a, int b) {
  const double pa = s.vehicles[a].position, pb = s.vehicles[b].position;
  return pa < pb || (pa == pb && a < b);
}

void sort_lane(MicroState& s, int lane) {
  auto& ids = s.lanes[lane];
  std::sort(ids.begin(), ids.end(), [&](int a, int b) { return before(s, a, b); });
}

std::size_t index_in_lane(const MicroState& s, int id) {
  const auto& ids = s.lanes[s.vehicles[id].lane];
  auto it = std::lower_bound(ids.begin(), ids.end(), id,
                             [&](int a, int b) { return before(s, a, b); });
  if (it == ids.end() || *it != id) throw LookupError("vehicle not found in its lane");
  return static_cast<std::size_t>(it - ids.begin());
}

void require_vehicle(const MicroState& s, int id) {
  if (id < 0 || id >= static_cast<int>(s.vehicles.size()))
    throw LookupError("unknown vehicle id " + std::to_string(id));
}

void require_lane(const MicroState& s, int lane) {
  if (lane < 0 || lane >= s.lane_count())
    throw DomainError("lane index " + std::to_string(lane) + " out of range");
}

double ring_forward(double from, double to, double L) {
  double d = to - from;
  if (d <= 0) d += L;
  return d;
}

double ring_backward(double from, double to, double L) {
  double d = from - to;
  if (d < 0) d += L;
  return d;
}

/// Gaps (behind, ahead) from position x to the vehicles of `lane`; both L when empty.
std::pair<double, double> gaps_in_lane(const MicroState& s, double x, int lane) {
  const double L = s.road_length;
  const auto& ids = s.lanes[lane];
  if (ids.empty()) return {L, L};
  auto it = std::upper_bound(ids.begin(), ids.end(), x,
                             [&](double v, int id) { return v < s.vehicles[id].position; });
  const int leader = it == ids.end() ? ids.front() : *it;
  const int follower = it == ids.begin() ? ids.back() : *(it - 1);
  return {ring_backward(x, s.vehicles[follower].position, L),
          ring_forward(x, s.vehicles[leader].position, L)};
}

Eigen::VectorXd velocities(const MicroState& s, const Eigen::VectorXd& pos) {
  Eigen::VectorXd v = Eigen::VectorXd::Zero(pos.size());
  const double L = s.road_length;
  for (int j = 0; j < s.lane_count(); ++j) {
    const auto& ids = s.lanes[j];
    const std::size_t n = ids.size();
    for (std::size_t k = 0; k < n; ++k) {
      const int id = ids[k];
      double h = L;
      if (n > 1) {
        const std::size_t next = (k + 1) % n;
        h = pos[ids[next]] - pos[id] + (next == 0 ? L : 0.0);
      }
      v[id] = h > 0 ? micro_speed(s.laws[j], h, s.params) : 0.0;
    }
  }
  return v;
}

}  // namespace

const Vehicle& MicroState::vehicle(int id) const {
  if (id < 0 || id >= static_cast<int>(vehicles.size()))
    throw LookupError("unknown vehicle id " + std::to_string(id));
  return vehicles[id];
}

MicroState make_state(std::vector<Vehicle> vehicles, double road_length,
                      const ModelParams& params) {
  params.validate();
  if (!(road_length > 0)) throw DomainError("road length must be positive");
  MicroState s;
  s.params = params;
  s.laws = params.laws();
  s.road_length = road_length;
  s.lanes.assign(params.lane_count, {});
  for (std::size_t i = 0; i < vehicles.size(); ++i) {
    Vehicle& v = vehicles[i];
    v.id = static_cast<int>(i);
    if (v.lane < 0 || v.lane >= params.lane_count) throw DomainError("vehicle lane out of range");
    if (!(v.position >= 0 && v.position < road_length))
      throw DomainError("vehicle position outside [0, L)");
  }
  s.vehicles = std::move(vehicles);
  for (const auto& v : s.vehicles) s.lanes[v.lane].push_back(v.id);
  for (int j = 0; j < params.lane_count; ++j) {
    sort_lane(s, j);
    const auto& ids = s.lanes[j];
    for (std::size_t k = 1; k < ids.size(); ++k)
      if (s.vehicles[ids[k]].position == s.vehicles[ids[k - 1]].position)
        throw DomainError("two vehicles share a position in lane " + std::to_string(j + 1));
  }
  return s;
}

MicroState init_uniform(const std::vector<int>& counts, double road_length,
                        const ModelParams& params) {
  if (static_cast<int>(counts.size()) != params.lane_count)
    throw ConfigError("need one vehicle count per lane", 0, "count");
  std::vector<Vehicle> vehicles;
  for (int j = 0; j < params.lane_count; ++j) {
    const int n = counts[j];
    if (n < 0) throw ConfigError("vehicle counts must be non-negative", 0, "count");
    if (n * params.spacing() > road_length * (1 + 1e-12))
      throw ConfigError("lane " + std::to_string(j + 1) + " over capacity", 0, "count");
    for (int i = 0; i < n; ++i) vehicles.push_back({0, road_length * i / n, j});
  }
  return make_state(std::move(vehicles), road_length, params);
}

Neighbors neighbors(const MicroState& state, int vehicle, int lane) {
  require_vehicle(state, vehicle);
  require_lane(state, lane);
  const auto& ids = state.lanes[lane];
  if (ids.empty()) return {};
  const Vehicle& me = state.vehicles[vehicle];
  if (lane == me.lane) {
    const std::size_t k = index_in_lane(state, vehicle), n = ids.size();
    return {ids[(k + n - 1) % n], ids[(k + 1) % n]};
  }
  auto it = std::upper_bound(ids.begin(), ids.end(), me.position,
                             [&](double v, int id) { return v < state.vehicles[id].position; });
  const int leader = it == ids.end() ? ids.front() : *it;
  const int follower = it == ids.begin() ? ids.back() : *(it - 1);
  return {follower, leader};
}

double headway(const MicroState& state, int vehicle) {
  require_vehicle(state, vehicle);
  const Vehicle& me = state.vehicles[vehicle];
  const auto& ids = state.lanes[me.lane];
  if (ids.size() == 1) return state.road_length;
  const int leader = *neighbors(state, vehicle, me.lane).leader;
  return ring_forward(me.position, state.vehicles[leader].position, state.road_length);
}

double local_density(const MicroState& state, int vehicle) {
  return state.params.rho_max * state.params.spacing() / headway(state, vehicle);
}

Eigen::VectorXd ode_rhs(const MicroState& state) {
  Eigen::VectorXd pos(state.vehicles.size());
  for (const auto& v : state.vehicles) pos[v.id] = v.position;
  return velocities(state, pos);
}

MicroState step_continuous(const MicroState& state, double dt) {
  if (dt < 0) throw DomainError("step_continuous: negative dt");
  if (dt == 0) return state;

  // Dormand-Prince tableau, fifth-order weights.
  static constexpr double a[6][5] = {
      {0, 0, 0, 0, 0},
      {1.0 / 5, 0, 0, 0, 0},
      {3.0 / 40, 9.0 / 40, 0, 0, 0},
      {44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0},
      {19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0},
      {9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656}};
  static constexpr double b[6] = {35.0 / 384,    0.0,           500.0 / 1113,
                                  125.0 / 192,   -2187.0 / 6784, 11.0 / 84};

  const auto n = static_cast<Eigen::Index>(state.vehicles.size());
  Eigen::VectorXd x0(n);
  for (const auto& v : state.vehicles) x0[v.id] = v.position;

  std::array<Eigen::VectorXd, 6> k;
  for (int i = 0; i < 6; ++i) {
    Eigen::VectorXd xi = x0;
    for (int m = 0; m < i; ++m)
      if (a[i][m] != 0) xi += dt * a[i][m] * k[m];
    k[i] = velocities(state, xi);
  }
  Eigen::VectorXd x1 = x0;
  for (int i = 0; i < 6; ++i)
    if (b[i] != 0) x1 += dt * b[i] * k[i];

  const double L = state.road_length;
  for (int j = 0; j < state.lane_count(); ++j) {
    const auto& ids = state.lanes[j];
    const std::size_t m = ids.size();
    if (m < 2) continue;
    for (std::size_t q = 0; q < m; ++q) {
      const std::size_t next = (q + 1) % m;
      const double h = x1[ids[next]] - x1[ids[q]] + (next == 0 ? L : 0.0);
      if (!(h > 0))
        throw NumericalError("step_continuous: in-lane ordering violated; reduce dt");
    }
  }

  MicroState out = state;
  for (auto& v : out.vehicles) {
    double p = std::fmod(x1[v.id], L);
    if (p < 0) p += L;
    if (p >= L) p -= L;
    v.position = p;
  }
  for (int j = 0; j < out.lane_count(); ++j) sort_lane(out, j);
  out.time = state.time + dt;
  return out;
}

namespace {

struct Assessment {
  bool admissible = false;
  double target_speed = 0.0;
};

Assessment assess(const MicroState& s, int id, int target) {
  const Vehicle& me = s.vehicles[id];
  const auto [behind, ahead] = gaps_in_lane(s, me.position, target);
  const double gap = s.params.spacing();
  const double v_target = micro_speed(s.laws[target], ahead, s.params);
  const double v_here = micro_speed(s.laws[me.lane], headway(s, id), s.params);
  const bool ok = v_target > v_here + kSpeedTieTolerance && ahead > gap && behind > gap;
  return {ok, v_target};
}

}  // namespace

bool lane_change_admissible(const MicroState& state, int vehicle, int target_lane) {
  require_vehicle(state, vehicle);
  require_lane(state, target_lane);
  if (std::abs(target_lane - state.vehicles[vehicle].lane) != 1)
    throw DomainError("lane_change_admissible: target lane is not adjacent");
  return assess(state, vehicle, target_lane).admissible;
}

std::pair<MicroState, std::vector<LaneChangeEvent>> apply_lane_changes(const MicroState& state) {
  MicroState out = state;
  std::vector<LaneChangeEvent> events;
  std::vector<int> order(out.vehicles.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) { return before(out, a, b); });

  const int J = out.lane_count();
  for (int id : order) {
    const int lane = out.vehicles[id].lane;
    Assessment left, right;
    if (lane + 1 < J) left = assess(out, id, lane + 1);
    if (lane - 1 >= 0) right = assess(out, id, lane - 1);
    int target = -1;
    if (left.admissible) target = lane + 1;
    if (right.admissible && (!left.admissible || right.target_speed > left.target_speed))
      target = lane - 1;
    if (target < 0) continue;

    auto& from = out.lanes[lane];
    from.erase(from.begin() + static_cast<std::ptrdiff_t>(index_in_lane(out, id)));
    out.vehicles[id].lane = target;
    auto& to = out.lanes[target];
    to.insert(std::lower_bound(to.begin(), to.end(), id,
                               [&](int a, int b) { return before(out, a, b); }),
              id);
    events.push_back({out.time, id, lane, target, out.vehicles[id].position});
  }
  return {std::move(out), std::move(events)};
}

MicroEquilibrium detect_equilibrium(const MicroState& state, double tol) {
  if (tol < 0) throw DomainError("detect_equilibrium: negative tolerance");
  for (int j = 0; j < state.lane_count(); ++j) {
    const auto& ids = state.lanes[j];
    if (ids.empty()) continue;
    const double expected = state.road_length / static_cast<double>(ids.size());
    for (int id : ids)
      if (std::abs(headway(state, id) - expected) > tol * expected) return MicroEquilibrium::None;
  }
  const int J = state.lane_count();
  for (const auto& v : state.vehicles) {
    if (v.lane + 1 < J && assess(state, v.id, v.lane + 1).admissible)
      return MicroEquilibrium::LocalOnly;
    if (v.lane > 0 && assess(state, v.id, v.lane - 1).admissible)
      return MicroEquilibrium::LocalOnly;
  }
  return MicroEquilibrium::Global;
}

double micro_dt_bound(const MicroState& state) {
  double vmax = 0;
  for (const auto& law : state.laws) vmax = std::max(vmax, law.vmax);
  return state.params.spacing() / (10.0 * vmax);
}

double mean_local_density(const MicroState& state, int lane) {
  require_lane(state, lane);
  const auto& ids = state.lanes[lane];
  if (ids.empty()) return 0.0;
  double sum = 0;
  for (int id : ids) sum += local_density(state, id);
  return sum / static_cast<double>(ids.size());
}

MicroRun run_micro(MicroState state, double T, double dt, const MicroRunOptions& options) {
  if (!(T > 0) || !(dt > 0)) throw DomainError("run_micro: T and dt must be positive");
  const double h = std::min(dt, micro_dt_bound(state));
  const long steps = static_cast<long>(std::ceil(T / h - 1e-9));
  const double step_dt = T / static_cast<double>(steps);
  const std::size_t total = state.vehicles.size();
  const double t0 = state.time;

  MicroRun run;
  run.dt_used = step_dt;
  const int stride = std::max(1, options.snapshot_stride);
  run.snapshots.push_back({state.time, state.vehicles});

  for (long n = 1; n <= steps; ++n) {
    state = step_continuous(state, step_dt);
    state.time = t0 + step_dt * static_cast<double>(n);
    if (options.lane_changes) {
      auto [next, events] = apply_lane_changes(state);
      state = std::move(next);
      if (options.audit) {
        ++run.audit.sweeps;
        std::size_t count = 0;
        for (const auto& ids : state.lanes) count += ids.size();
        if (count != total) ++run.audit.count_violations;
        const double gap = state.params.spacing();
        for (const auto& e : events) {
          const auto [behind, ahead] = [&] {
            const auto& ids = state.lanes[e.to_lane];
            if (ids.size() == 1) return std::pair{state.road_length, state.road_length};
            const auto nb = neighbors(state, e.vehicle, e.to_lane);
            const double x = state.vehicles[e.vehicle].position;
            return std::pair{ring_backward(x, state.vehicles[*nb.follower].position,
                                           state.road_length),
                             ring_forward(x, state.vehicles[*nb.leader].position,
                                          state.road_length)};
          }();
          if (!(behind > gap && ahead > gap)) ++run.audit.gap_violations;
        }
      }
      run.events.insert(run.events.end(), events.begin(), events.end());
    }
    if (n % stride == 0 || n == steps) run.snapshots.push_back({state.time, state.vehicles});
  }
  run.state = std::move(state);
  return run;
}

}  // namespace laneflow
