#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "laneflow/scenarios.hpp"

using namespace laneflow;
namespace fs = std::filesystem;

namespace {

ScenarioConfig local_config(double T) {
  auto c = parse_config(
      "experiment = perturb-local\n[grid]\nx_min = -0.5\nx_max = 0.5\ncells = 100\n"
      "[equilibrium]\nrho = 0.142, 0.400\n");
  c.T = T;
  c.snapshot_stride = 5;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "laneflow_scenarios" / name;
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("bump amplitude for the local equilibrium") {
  CHECK(bump_amplitude({0.142, 0.400}) == doctest::Approx(0.4));
  CHECK(gaussian_bump(0.0, {0.142, 0.400}) == doctest::Approx(0.4));
  CHECK(gaussian_bump(0.5, {0.142, 0.400}) < 1e-10);
  CHECK(gaussian_bump(0.1, {0.142, 0.400}) == doctest::Approx(0.4 * std::exp(-1.0)));
  CHECK(gaussian_bump(0.0, {0.142, 0.400}, 100.0, 0.05) == 0.05);
}

TEST_CASE("bumped states stay admissible") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 2000; ++k) {
    const std::array<double, 2> eq{u(rng), u(rng)};
    const double x = u(rng) - 0.5;
    const double g = gaussian_bump(x, eq);
    const double hi = eq[0] >= eq[1] ? eq[0] - g : eq[0] + g;
    const double lo = eq[0] >= eq[1] ? eq[1] + g : eq[1] - g;
    CHECK(hi >= -1e-15);
    CHECK(hi <= 1 + 1e-15);
    CHECK(lo >= -1e-15);
    CHECK(lo <= 1 + 1e-15);
  }
}

TEST_CASE("identical configs give identical outputs") {
  const auto c = local_config(0.2);
  const auto a = scratch("det_a"), b = scratch("det_b");
  write_outputs(run(c), a.string());
  write_outputs(run(c), b.string());
  for (const char* name : {"snapshots.csv", "means.csv"}) {
    CAPTURE(name);
    const auto x = slurp(a / name);
    CHECK(!x.empty());
    CHECK(x == slurp(b / name));
  }
}

TEST_CASE("means recomputed from the snapshot csv") {
  const auto c = local_config(0.3);
  const auto dir = scratch("means");
  const auto report = run(c);
  write_outputs(report, dir.string());
  const auto snaps = read_csv((dir / "snapshots.csv").string());
  const auto means = read_csv((dir / "means.csv").string());
  REQUIRE(snaps.header == std::vector<std::string>{"t", "x", "rho_1", "rho_2"});
  REQUIRE(means.header ==
          std::vector<std::string>{"t", "mean_1", "std_1", "mean_2", "std_2"});
  const int M = c.grid.cells;
  REQUIRE(snaps.rows.size() == means.rows.size() * M);
  for (std::size_t s = 0; s < means.rows.size(); ++s) {
    for (int j = 0; j < 2; ++j) {
      double sum = 0;
      for (int i = 0; i < M; ++i) sum += snaps.rows[s * M + i][2 + j];
      const double mean = sum / M;
      double var = 0;
      for (int i = 0; i < M; ++i) var += std::pow(snaps.rows[s * M + i][2 + j] - mean, 2);
      CHECK(std::abs(mean - means.rows[s][1 + 2 * j]) <= 1e-12);
      CHECK(std::abs(std::sqrt(var / (M - 1)) - means.rows[s][2 + 2 * j]) <= 1e-12);
    }
    CHECK(snaps.rows[s * M][0] == means.rows[s][0]);
  }
}

TEST_CASE("snapshot table round-trips through csv") {
  const auto report = run(local_config(0.1));
  const auto dir = scratch("table");
  fs::create_directories(dir);
  const auto t = snapshot_table(report.snapshots);
  write_csv(t, (dir / "s.csv").string());
  const auto back = read_csv((dir / "s.csv").string());
  CHECK(back.header == t.header);
  CHECK(back.rows == t.rows);
}

TEST_CASE("zero-amplitude local run stays at the equilibrium") {
  auto c = local_config(0.5);
  c.amplitude = 0.0;
  const auto r = run(c);
  REQUIRE(r.final_field);
  CHECK((r.final_field->rho.row(0).array() == 0.142).all());
  CHECK((r.final_field->rho.row(1).array() == 0.400).all());
}

TEST_CASE("zero-shift global run stays constant") {
  auto c = parse_config("experiment = perturb-global\n[grid]\ncells = 60\n[equilibrium]\n"
                        "rho = 0.27, 0.49\nshift = 0\n");
  c.T = 1.0;
  const auto r = run(c);
  CHECK(r.diagnostics["max_spatial_spread"].get<double>() == 0.0);
  for (const auto& m : r.means) {
    CHECK(m.mean[0] == doctest::Approx(0.27).epsilon(1e-14));
    CHECK(m.mean[1] == doctest::Approx(0.49).epsilon(1e-14));
  }
}

TEST_CASE("slow lane alone has no lane changes") {
  auto c = load_config(LANEFLOW_CONFIG_DIR "/consistency_test1.cfg");
  c.initial[0].count = 0;
  c.initial[1].count = 30;
  c.T = 5.0;
  const auto r = run(c);
  CHECK(r.events.empty());
  CHECK(r.micro_final_counts == std::vector<int>{0, 30});
  CHECK(r.micro_audit.gap_violations == 0);
  CHECK(r.micro_audit.count_violations == 0);
}

TEST_CASE("report json carries the lane summary") {
  const auto r = run(local_config(0.1));
  const auto j = r.to_json();
  CHECK(j["experiment"] == "perturb-local");
  REQUIRE(j["lanes"].size() == 2);
  CHECK(j["lanes"][0]["initial_mean"].get<double>() == r.means.front().mean[0]);
}

TEST_CASE("lane closure needs a closure section") {
  auto c = load_config(LANEFLOW_CONFIG_DIR "/lane_closure_test1.cfg");
  c.closure.reset();
  CHECK_THROWS_AS(run_lane_closure(c), ConfigError);
}

TEST_CASE("write_outputs reports an unwritable directory") {
  CHECK_THROWS_AS(write_outputs(run(local_config(0.05)), "/proc/laneflow/out"), IoError);
}
