#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <random>

#include "laneflow/micro.hpp"

using namespace laneflow;

namespace {

ModelParams two_lanes(double l = 1.0 / 300.0) {
  ModelParams p;
  p.vehicle_length = p.safety_distance = l;
  return p;
}

/// Nearest vehicle of `lane` at position <= x (cyclic) and nearest at position > x, by scan.
std::pair<int, int> brute_neighbors(const MicroState& s, double x, int lane) {
  int follower = -1, leader = -1;
  double best_back = 1e300, best_ahead = 1e300;
  for (const auto& v : s.vehicles) {
    if (v.lane != lane) continue;
    double back = x - v.position;
    if (back < 0) back += s.road_length;
    double ahead = v.position - x;
    if (ahead <= 0) ahead += s.road_length;
    if (back < best_back || (back == best_back && v.id > follower)) {
      best_back = back;
      follower = v.id;
    }
    if (ahead < best_ahead || (ahead == best_ahead && v.id < leader)) {
      best_ahead = ahead;
      leader = v.id;
    }
  }
  return {follower, leader};
}

}  // namespace

TEST_CASE("neighbors: lone vehicle at the same position is both follower and leader") {
  auto s = make_state({{0, 0.3, 0}, {0, 0.3, 1}}, 1.0, two_lanes());
  const auto nb = neighbors(s, 0, 1);
  REQUIRE(nb.follower);
  CHECK(*nb.follower == 1);
  CHECK(*nb.leader == 1);
}

TEST_CASE("neighbors: empty lane") {
  auto s = make_state({{0, 0.3, 0}}, 1.0, two_lanes());
  const auto nb = neighbors(s, 0, 1);
  CHECK(!nb.follower);
  CHECK(!nb.leader);
}

TEST_CASE("neighbors: three vehicles, query between them") {
  auto s = make_state({{0, 0.1, 0}, {0, 0.4 + 1e-3, 0}, {0, 0.7, 0}, {0, 0.4, 1}}, 1.0,
                      two_lanes());
  const auto nb = neighbors(s, 3, 0);
  const auto [f, l] = brute_neighbors(s, 0.4, 0);
  CHECK(*nb.follower == f);
  CHECK(*nb.leader == l);
  CHECK(f == 0);
  CHECK(l == 1);
}

TEST_CASE("neighbors agree with a brute-force scan on random states") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<Vehicle> vs;
    const int n = 1 + static_cast<int>(u(rng) * 20);
    for (int k = 0; k < n; ++k) vs.push_back({0, u(rng), u(rng) < 0.5 ? 0 : 1});
    auto s = make_state(vs, 1.0, two_lanes());
    for (const auto& v : s.vehicles) {
      const int other = 1 - v.lane;
      const auto nb = neighbors(s, v.id, other);
      const auto [f, l] = brute_neighbors(s, v.position, other);
      if (f < 0) {
        CHECK(!nb.follower);
        continue;
      }
      CHECK(*nb.follower == f);
      CHECK(*nb.leader == l);
    }
  }
}

TEST_CASE("neighbors: unknown id") {
  auto s = make_state({{0, 0.3, 0}}, 1.0, two_lanes());
  CHECK_THROWS_AS(neighbors(s, 5, 0), LookupError);
}

TEST_CASE("ode_rhs examples") {
  auto p = two_lanes(1.0 / 300.0);
  p.vmax = {0.7, 1.0};
  auto s = init_uniform({0, 30}, 1.0, p);
  const auto v = ode_rhs(s);
  // density (1/150) / (1/30) = 0.2 under vmax = 1
  for (int id : s.lanes[1]) CHECK(v[id] == doctest::Approx(0.8).epsilon(1e-14));

  auto single = init_uniform({1, 0}, 1.0, p);
  CHECK(ode_rhs(single)[0] == doctest::Approx(0.7 * (1 - 1.0 / 150)).epsilon(1e-14));

  auto jam = make_state({{0, 0.0, 1}, {0, p.spacing(), 1}}, 1.0, p);
  CHECK(ode_rhs(jam)[0] == 0.0);
}

TEST_CASE("step_continuous: equilibrium translates rigidly, dt = 0 is identity") {
  auto p = two_lanes();
  auto s = init_uniform({20, 10}, 1.0, p);
  CHECK(step_continuous(s, 0.0).vehicles[3].position == s.vehicles[3].position);
  const auto v = ode_rhs(s);
  const double dt = 1e-3;
  auto next = step_continuous(s, dt);
  for (const auto& veh : s.vehicles) {
    double expected = std::fmod(veh.position + v[veh.id] * dt, 1.0);
    CHECK(next.vehicles[veh.id].position == doctest::Approx(expected).epsilon(1e-13));
  }
  CHECK(next.time == dt);
}

TEST_CASE("step_continuous: follower behind a jammed leader stays put") {
  auto p = two_lanes();
  auto s = make_state({{0, 0.0, 0}, {0, p.spacing(), 0}}, 1.0, p);
  CHECK(ode_rhs(s)[0] == 0.0);
}

TEST_CASE("step_continuous: ordering violation is reported") {
  auto p = two_lanes();
  auto s = make_state({{0, 0.0, 0}, {0, 0.02, 0}, {0, 0.02 + 1e-9, 0}}, 1.0, p);
  CHECK_THROWS_AS(step_continuous(s, 5.0), NumericalError);
}

TEST_CASE("rigid translation over many steps") {
  auto p = two_lanes();
  auto s = init_uniform({40, 0}, 1.0, p);
  const double dt = micro_dt_bound(s);
  for (int n = 0; n < 10000; ++n) s = step_continuous(s, dt);
  double worst = 0;
  for (int id : s.lanes[0]) worst = std::max(worst, std::abs(headway(s, id) - 1.0 / 40));
  CHECK(worst <= 1e-10);
}

TEST_CASE("lane_change_admissible examples") {
  auto p = two_lanes();
  const double g = p.spacing();
  SUBCASE("congested lane, empty target") {
    auto s = make_state({{0, 0.0, 0}, {0, g * 1.01, 0}}, 1.0, p);
    CHECK(lane_change_admissible(s, 0, 1));
  }
  SUBCASE("target leader exactly at spacing") {
    auto s = make_state({{0, 0.0, 0}, {0, g * 1.01, 0}, {0, g, 1}, {0, 0.9, 1}}, 1.0, p);
    CHECK_FALSE(lane_change_admissible(s, 0, 1));
  }
  SUBCASE("target gap too short to be faster") {
    std::vector<Vehicle> vs;
    for (int k = 0; k < 30; ++k) vs.push_back({0, k / 30.0, 0});
    for (int k = 0; k < 30; ++k) vs.push_back({0, k / 30.0 + 1.0 / 60, 1});
    auto s = make_state(vs, 1.0, p);
    // own speed 0.7 * (1 - 0.1) = 0.63; leader 1/60 ahead gives 1 - 0.2 = 0.8
    CHECK(lane_change_admissible(s, 0, 1));
    std::vector<Vehicle> dense;
    for (int k = 0; k < 30; ++k) dense.push_back({0, k / 30.0, 0});
    for (int k = 0; k < 60; ++k) dense.push_back({0, k / 60.0 + 1.0 / 120, 1});
    // leader 1/120 ahead gives 1 - 0.4 = 0.6 < 0.63
    CHECK_FALSE(lane_change_admissible(make_state(dense, 1.0, p), 0, 1));
  }
  SUBCASE("non-adjacent target") {
    ModelParams q = p;
    q.lane_count = 3;
    q.vmax = {0.6, 0.7, 1.0};
    auto s = make_state({{0, 0.0, 0}}, 1.0, q);
    CHECK_THROWS_AS(lane_change_admissible(s, 0, 2), DomainError);
  }
}

TEST_CASE("apply_lane_changes: single lane never changes") {
  ModelParams q = two_lanes();
  q.lane_count = 1;
  q.vmax = {0.7};
  std::vector<Vehicle> vs;
  for (int k = 0; k < 45; ++k) vs.push_back({0, k / 45.0, 0});
  auto s = make_state(vs, 1.0, q);
  auto [out, events] = apply_lane_changes(s);
  CHECK(events.empty());
  CHECK(out.lanes[0] == s.lanes[0]);
}

TEST_CASE("apply_lane_changes: left preferred unless right is strictly faster") {
  ModelParams p = two_lanes();
  p.lane_count = 3;
  p.vmax = {0.9, 0.95, 1.0};
  const double g = p.spacing();
  // middle lane nearly jammed; both neighbours empty, left is faster
  auto s = make_state({{0, 0.0, 1}, {0, g * 1.01, 1}}, 1.0, p);
  auto [a, ea] = apply_lane_changes(s);
  REQUIRE(!ea.empty());
  CHECK(ea.front().to_lane == 2);
  // crowd the left lane so the right one wins
  std::vector<Vehicle> vs{{0, 0.0, 1}, {0, g * 1.01, 1}};
  for (int k = 0; k < 200; ++k) vs.push_back({0, (k + 0.5) / 200.0, 2});
  auto [b, eb] = apply_lane_changes(make_state(vs, 1.0, p));
  REQUIRE(!eb.empty());
  CHECK(eb.front().to_lane == 0);
}

TEST_CASE("apply_lane_changes: position preserved bitwise and counts conserved") {
  auto p = two_lanes();
  auto s = init_uniform({150, 30}, 1.0, p);
  auto [out, events] = apply_lane_changes(s);
  CHECK(!events.empty());
  std::size_t total = 0;
  for (const auto& ids : out.lanes) total += ids.size();
  CHECK(total == 180);
  for (const auto& e : events) {
    CHECK(e.from_lane == 0);
    CHECK(e.to_lane == 1);
    CHECK(out.vehicles[e.vehicle].position == s.vehicles[e.vehicle].position);
  }
  // safety in the post-sweep configuration
  for (const auto& e : events) {
    const auto nb = neighbors(out, e.vehicle, 1);
    const double x = out.vehicles[e.vehicle].position;
    double ahead = out.vehicles[*nb.leader].position - x;
    if (ahead <= 0) ahead += 1.0;
    double behind = x - out.vehicles[*nb.follower].position;
    if (behind < 0) behind += 1.0;
    CHECK(ahead > p.spacing());
    CHECK(behind > p.spacing());
  }
}

TEST_CASE("local_density and init_uniform") {
  auto p = two_lanes();
  auto s = init_uniform({150, 30}, 1.0, p);
  for (int id : s.lanes[0]) CHECK(local_density(s, id) == doctest::Approx(1.0).epsilon(1e-12));
  for (int id : s.lanes[1]) CHECK(local_density(s, id) == doctest::Approx(0.2).epsilon(1e-12));
  auto t = init_uniform({100, 50}, 1.0, p);
  CHECK(headway(t, t.lanes[0][0]) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(headway(t, t.lanes[1][0]) == doctest::Approx(0.02).epsilon(1e-12));
  CHECK(mean_local_density(t, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
  CHECK(mean_local_density(t, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  auto u = init_uniform({0, 1}, 1.0, p);
  CHECK(u.lanes[0].empty());
  CHECK(u.vehicles[0].position == 0.0);
  auto w = make_state({{0, 0.2, 0}, {0, 0.2 + 2 * p.spacing(), 0}}, 1.0, p);
  CHECK(local_density(w, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK_THROWS_AS(init_uniform({151, 0}, 1.0, p), ConfigError);
  CHECK_THROWS_AS(make_state({{0, 0.2, 0}, {0, 0.2, 0}}, 1.0, p), DomainError);
}

TEST_CASE("detect_equilibrium") {
  auto p = two_lanes();
  CHECK(detect_equilibrium(init_uniform({150, 30}, 1.0, p)) == MicroEquilibrium::LocalOnly);
  CHECK(detect_equilibrium(init_uniform({0, 30}, 1.0, p)) == MicroEquilibrium::Global);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  std::vector<Vehicle> vs;
  for (int k = 0; k < 20; ++k) vs.push_back({0, (k + 0.5 + u(rng)) / 20.0, 0});
  CHECK(detect_equilibrium(make_state(vs, 1.0, p)) == MicroEquilibrium::None);
}

TEST_CASE("detect_equilibrium is never None for uniform initial states") {
  auto p = two_lanes();
  for (int a = 0; a <= 150; a += 10)
    for (int b = 0; b <= 150; b += 15)
      CHECK(detect_equilibrium(init_uniform({a, b}, 1.0, p)) != MicroEquilibrium::None);
}

TEST_CASE("run_micro: global equilibrium produces no events") {
  auto p = two_lanes();
  auto run = run_micro(init_uniform({0, 30}, 1.0, p), 1.0, 0.01);
  CHECK(run.events.empty());
  CHECK(run.audit.gap_violations == 0);
  CHECK(run.audit.count_violations == 0);
  CHECK(run.state.time == doctest::Approx(1.0));
}

TEST_CASE("run_micro: empty slow lane is never chosen") {
  auto p = two_lanes();
  auto run = run_micro(init_uniform({0, 30}, 1.0, p), 5.0, 0.01);
  CHECK(run.state.lanes[0].empty());
}

TEST_CASE("run_micro: safety and count invariants on random three-lane states") {
  ModelParams p = two_lanes();
  p.lane_count = 3;
  p.vmax = {0.6, 0.7, 1.0};
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 3; ++trial) {
    std::vector<Vehicle> vs;
    for (int j = 0; j < 3; ++j) {
      const int n = 10 + static_cast<int>(u(rng) * 60);
      for (int k = 0; k < n; ++k) vs.push_back({0, (k + 0.3 * u(rng)) / n, j});
    }
    auto run = run_micro(make_state(vs, 1.0, p), 2.0, 0.01);
    CHECK(run.audit.gap_violations == 0);
    CHECK(run.audit.count_violations == 0);
    std::size_t total = 0;
    for (const auto& ids : run.state.lanes) total += ids.size();
    CHECK(total == vs.size());
  }
}
