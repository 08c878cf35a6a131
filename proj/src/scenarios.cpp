#include "laneflow/scenarios.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace laneflow {

using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

MeanSample sample_means(const DensityField<double>& f) {
  MeanSample s;
  s.t = f.time;
  for (int j = 0; j < f.lanes(); ++j) {
    const auto [m, sd] = mean_density(f, j);
    s.mean.push_back(m);
    s.std.push_back(sd);
  }
  return s;
}

/// Runs the macro solver to T, recording snapshots and lane means every `stride` steps and
/// at the final time. `extra` runs after every step.
DensityField<double> drive_macro(
    const DensityField<double>& initial, const ScenarioConfig& cfg, const BoundaryCondition& bc,
    const ClosureMask& mask, RunReport& report,
    const std::function<void(const DensityField<double>&)>& extra = {}) {
  const auto laws = cfg.model.laws();
  StepOptions opts;
  opts.cfl = cfg.cfl;
  const int stride = cfg.snapshot_stride;
  long last = -1;
  auto final = advance(initial, cfg.T, bc, cfg.model, laws, opts, mask,
                       std::function<void(const DensityField<double>&, long)>(
                           [&](const DensityField<double>& f, long n) {
                             if (extra) extra(f);
                             if (n % stride == 0) {
                               report.snapshots.push_back(f);
                               report.means.push_back(sample_means(f));
                               last = n;
                             }
                             report.macro_steps = n;
                           }));
  if (last != report.macro_steps) {
    report.snapshots.push_back(final);
    report.means.push_back(sample_means(final));
  }
  report.final_field = final;
  return final;
}

json lane_summary(const RunReport& r) {
  json out = json::array();
  if (r.means.empty()) return out;
  const auto& a = r.means.front();
  const auto& b = r.means.back();
  for (std::size_t j = 0; j < a.mean.size(); ++j)
    out.push_back({{"lane", j + 1},
                   {"initial_mean", a.mean[j]},
                   {"initial_std", a.std[j]},
                   {"final_mean", b.mean[j]},
                   {"final_std", b.std[j]}});
  return out;
}

std::vector<int> lane_counts(const MicroState& s) {
  std::vector<int> out;
  for (const auto& ids : s.lanes) out.push_back(static_cast<int>(ids.size()));
  return out;
}

std::vector<double> lane_densities(const MicroState& s) {
  std::vector<double> out;
  for (int j = 0; j < s.lane_count(); ++j) out.push_back(mean_local_density(s, j));
  return out;
}

}  // namespace

double bump_amplitude(const std::array<double, 2>& eq) {
  return eq[0] >= eq[1] ? std::min(eq[0], 1.0 - eq[1]) : std::min(eq[1], 1.0 - eq[0]);
}

double gaussian_bump(double x, const std::array<double, 2>& eq, double width,
                     std::optional<double> amplitude) {
  return std::exp(-width * x * x) * amplitude.value_or(bump_amplitude(eq));
}

DensityField<double> initial_field(const ScenarioConfig& cfg) {
  const int J = cfg.model.lane_count;
  auto f = make_field(cfg.grid, J);
  for (int j = 0; j < J; ++j) {
    const InitialLane& in = cfg.initial.at(j);
    if (in.kind == InitialKind::Vehicles)
      throw ConfigError("vehicle initial data needs a consistency run", 0,
                        "initial." + std::to_string(j + 1));
    for (int i = 0; i < cfg.grid.cells; ++i) {
      const double c = cfg.grid.center(i);
      double v = in.value;
      for (const Segment& s : in.segments)
        if (c >= s.from && c < s.to) v = s.value;
      f.rho(j, i) = v;
    }
  }
  const ClosureMask mask = config_mask(cfg);
  if (!mask.empty())
    for (int j = 0; j < J; ++j)
      for (int i = 0; i < cfg.grid.cells; ++i)
        if (mask.is_closed(j, i)) f.rho(j, i) = 0.0;
  return f;
}

BoundaryCondition resolved_bc(const ScenarioConfig& cfg, const DensityField<double>& initial) {
  BoundaryCondition bc = cfg.bc;
  const int J = initial.lanes(), M = initial.cells();
  if (bc.left.kind == BoundaryKind::Dirichlet && bc.left.values.empty())
    for (int j = 0; j < J; ++j) bc.left.values.push_back(initial.rho(j, 0));
  if (bc.right.kind == BoundaryKind::Dirichlet && bc.right.values.empty())
    for (int j = 0; j < J; ++j) bc.right.values.push_back(initial.rho(j, M - 1));
  bc.validate(J);
  return bc;
}

ClosureMask config_mask(const ScenarioConfig& cfg) {
  if (!cfg.closure) return {};
  return closure_mask(cfg.grid, cfg.model.lane_count, cfg.closure->lane, cfg.closure->start,
                      cfg.closure->end);
}

RunReport run_consistency(const ScenarioConfig& cfg) {
  const auto t0 = Clock::now();
  RunReport r;
  r.experiment = Experiment::Consistency;
  std::vector<int> counts;
  for (const auto& in : cfg.initial) counts.push_back(in.count);
  const MicroState micro0 = init_uniform(counts, cfg.grid.length(), cfg.model);
  r.micro_initial_counts = lane_counts(micro0);
  r.micro_initial_density = lane_densities(micro0);

  MicroRunOptions mo;
  mo.snapshot_stride = cfg.micro_snapshot_stride;
  MicroRun mr = run_micro(micro0, cfg.T, cfg.micro_dt, mo);
  r.micro_final_counts = lane_counts(mr.state);
  r.micro_final_density = lane_densities(mr.state);
  r.events = std::move(mr.events);
  r.micro_snapshots = std::move(mr.snapshots);
  r.micro_audit = mr.audit;

  const auto field0 = project_micro(micro0, cfg.grid);
  drive_macro(field0, cfg, BoundaryCondition::periodic(), {}, r);

  r.diagnostics["micro_dt"] = mr.dt_used;
  r.diagnostics["micro_equilibrium"] =
      detect_equilibrium(mr.state, 1e-9) == MicroEquilibrium::Global ? "global"
      : detect_equilibrium(mr.state, 1e-9) == MicroEquilibrium::LocalOnly ? "local_only"
                                                                            : "none";
  r.wall_seconds = seconds_since(t0);
  return r;
}

RunReport run_global_perturbation(const ScenarioConfig& cfg) {
  const auto t0 = Clock::now();
  RunReport r;
  r.experiment = Experiment::GlobalPerturbation;
  const auto eq = cfg.equilibrium.value();
  auto field = make_field(cfg.grid, 2);
  field.rho.row(0).setConstant(eq[0] + cfg.shift);
  field.rho.row(1).setConstant(eq[1] - cfg.shift);

  double max_spread = 0.0;
  const auto final = drive_macro(field, cfg, BoundaryCondition::periodic(), {}, r,
                                 [&](const DensityField<double>& f) {
                                   for (int j = 0; j < f.lanes(); ++j)
                                     max_spread = std::max(
                                         max_spread, f.rho.row(j).maxCoeff() - f.rho.row(j).minCoeff());
                                 });
  const auto& last = r.means.back();
  const Eigen::Vector2d limit(last.mean[0], last.mean[1]);
  const LanePair laws = lane_pair(cfg.model);
  r.diagnostics["max_spatial_spread"] = max_spread;
  r.diagnostics["error_to_equilibrium"] =
      std::max((final.rho.row(0) - eq[0]).abs().maxCoeff(),
               (final.rho.row(1) - eq[1]).abs().maxCoeff());
  r.diagnostics["limit_class"] = to_string(classify(limit, laws, cfg.model, cfg.tol_eq).tag);
  const Eigen::Vector2d start(eq[0] + cfg.shift, eq[1] - cfg.shift);
  const Eigen::Vector2d predicted = homogeneous_limit(start, laws, cfg.model);
  r.diagnostics["homogeneous_limit"] = {predicted[0], predicted[1]};
  r.wall_seconds = seconds_since(t0);
  return r;
}

RunReport run_local_perturbation(const ScenarioConfig& cfg) {
  const auto t0 = Clock::now();
  RunReport r;
  r.experiment = Experiment::LocalPerturbation;
  const auto eq = cfg.equilibrium.value();
  auto field = make_field(cfg.grid, 2);
  for (int i = 0; i < cfg.grid.cells; ++i) {
    const double g = gaussian_bump(cfg.grid.center(i), eq, cfg.bump_width, cfg.amplitude);
    field.rho(0, i) = eq[0] + g;
    field.rho(1, i) = eq[1] - g;
  }
  drive_macro(field, cfg, BoundaryCondition::periodic(), {}, r);
  r.diagnostics["amplitude"] = cfg.amplitude.value_or(bump_amplitude(eq));
  r.wall_seconds = seconds_since(t0);
  return r;
}

RunReport run_lane_closure(const ScenarioConfig& cfg) {
  if (!cfg.closure) throw ConfigError("lane-closure runs need a [closure] section", 0, "closure");
  const auto t0 = Clock::now();
  RunReport r;
  r.experiment = Experiment::LaneClosure;
  const auto field = initial_field(cfg);
  const auto bc = resolved_bc(cfg, field);
  const auto mask = config_mask(cfg);
  const int lane = cfg.closure->lane;
  int c0 = 0;
  while (c0 < cfg.grid.cells && !mask.is_closed(lane, c0)) ++c0;
  const double dx = cfg.grid.dx(), mu = cfg.model.mu;

  auto front_of = [&](const DensityField<double>& f) {
    int k = c0 - 1;
    while (k >= 0 && f.rho(lane, k) >= mu) --k;
    return cfg.grid.x_min + dx * (k + 1);
  };
  r.queue_front.push_back({field.time, front_of(field)});
  const auto final = drive_macro(field, cfg, bc, mask, r, [&](const DensityField<double>& f) {
    r.queue_front.push_back({f.time, front_of(f)});
  });

  bool monotone = true;
  for (std::size_t k = 1; k < r.queue_front.size(); ++k)
    if (r.queue_front[k].front > r.queue_front[k - 1].front) monotone = false;
  r.diagnostics["queue_front_final"] = r.queue_front.back().front;
  r.diagnostics["queue_front_monotone"] = monotone;
  r.diagnostics["closure_first_cell"] = c0;
  if (lane >= 1) {
    int near = 0;
    double peak = 0.0;
    for (int i = 0; i < c0; ++i) {
      const double v = final.rho(lane - 1, i);
      if (std::abs(v - mu) <= 0.05) ++near;
      peak = std::max(peak, v);
    }
    r.diagnostics["neighbor_lane"] = lane;  // 1-based index of lane - 1
    r.diagnostics["upstream_near_mu_fraction"] = c0 > 0 ? double(near) / c0 : 0.0;
    r.diagnostics["upstream_neighbor_peak"] = peak;
  }
  r.wall_seconds = seconds_since(t0);
  return r;
}

RunReport run_classify(const ScenarioConfig& cfg, std::optional<std::array<double, 2>> rho) {
  const auto t0 = Clock::now();
  RunReport r;
  r.experiment = Experiment::Classify;
  const auto point = rho ? *rho : cfg.equilibrium.value_or(std::array<double, 2>{0.0, 0.0});
  if (!rho && !cfg.equilibrium)
    throw ConfigError("classify needs [equilibrium] rho or --rho1/--rho2", 0, "equilibrium.rho");
  const LanePair laws = lane_pair(cfg.model);
  const Eigen::Vector2d p(point[0], point[1]);
  const auto cls = classify(p, laws, cfg.model, cfg.tol_eq);
  const auto crit = critical_densities(laws, cfg.model.mu);
  json& d = r.diagnostics;
  d["rho"] = {p[0], p[1]};
  d["class"] = to_string(cls.tag);
  d["merged_into_c"] = cls.merged_into_c;
  d["v_eq"] = cls.v_eq ? json(*cls.v_eq) : json(nullptr);
  d["rho1_mu"] = crit.rho1_mu;
  d["rho2_mu"] = crit.rho2_mu;
  d["v1_mu"] = crit.v1_mu;
  d["v2_mu"] = crit.v2_mu;
  d["tol_eq"] = cfg.tol_eq;
  const auto rhs = homogeneous_rhs(p, laws, cfg.model);
  d["source"] = {rhs[0], rhs[1]};
  if (cls.tag != EqTag::NotEquilibrium && cfg.shift != 0.0) {
    json v = json::array();
    for (double s : {cfg.shift, -cfg.shift}) {
      try {
        const auto verdict = predict_stability(p, s, laws, cfg.model, cfg.tol_eq);
        v.push_back({{"shift", s},
                     {"verdict", to_string(verdict.tag)},
                     {"limit", {verdict.limit[0], verdict.limit[1]}}});
      } catch (const DomainError& e) {
        v.push_back({{"shift", s}, {"error", e.what()}});
      }
    }
    d["stability"] = v;
  }
  for (int dir : {1, -1}) {
    try {
      d[dir > 0 ? "decay_rate_positive" : "decay_rate_negative"] =
          linear_decay_rate(p, dir, laws, cfg.model, cfg.tol_eq);
    } catch (const NotApplicableError&) {
    }
  }
  r.wall_seconds = seconds_since(t0);
  return r;
}

RunReport run_phase_portrait(const ScenarioConfig& cfg) {
  const auto t0 = Clock::now();
  RunReport r;
  r.experiment = Experiment::PhasePortrait;
  const LanePair laws = lane_pair(cfg.model);
  const auto starts = portrait_starts(cfg.portrait_resolution, cfg.model.rho_max);
  const long steps = static_cast<long>(std::ceil(cfg.T / cfg.ode_dt));
  const int stride = static_cast<int>(std::max(1L, steps / 200));
  r.portrait = phase_portrait(starts, cfg.T, cfg.ode_dt, laws, cfg.model, stride, 0.0);
  json counts = json::object();
  double worst = 0.0;
  for (const auto& e : r.portrait) {
    counts[to_string(e.cls.tag)] = counts.value(to_string(e.cls.tag), 0) + 1;
    worst = std::max(worst, e.residual);
  }
  r.diagnostics["class_counts"] = counts;
  r.diagnostics["max_residual"] = worst;
  r.wall_seconds = seconds_since(t0);
  return r;
}

RunReport run_custom(const ScenarioConfig& cfg) {
  const auto t0 = Clock::now();
  RunReport r;
  r.experiment = Experiment::Custom;
  const auto field = initial_field(cfg);
  drive_macro(field, cfg, resolved_bc(cfg, field), config_mask(cfg), r);
  r.wall_seconds = seconds_since(t0);
  return r;
}

RunReport run(const ScenarioConfig& cfg) {
  switch (cfg.experiment) {
    case Experiment::Consistency: return run_consistency(cfg);
    case Experiment::GlobalPerturbation: return run_global_perturbation(cfg);
    case Experiment::LocalPerturbation: return run_local_perturbation(cfg);
    case Experiment::LaneClosure: return run_lane_closure(cfg);
    case Experiment::Classify: return run_classify(cfg);
    case Experiment::PhasePortrait: return run_phase_portrait(cfg);
    case Experiment::Custom: return run_custom(cfg);
  }
  throw ConfigError("unknown experiment");
}

json RunReport::to_json() const {
  json j;
  j["experiment"] = to_string(experiment);
  j["wall_seconds"] = wall_seconds;
  if (!means.empty()) {
    j["final_time"] = means.back().t;
    j["macro_steps"] = macro_steps;
    j["lanes"] = lane_summary(*this);
  }
  if (!micro_final_counts.empty()) {
    j["micro"] = {{"initial_counts", micro_initial_counts},
                  {"final_counts", micro_final_counts},
                  {"initial_mean_local_density", micro_initial_density},
                  {"final_mean_local_density", micro_final_density},
                  {"lane_change_events", events.size()},
                  {"sweeps", micro_audit.sweeps},
                  {"gap_violations", micro_audit.gap_violations},
                  {"count_violations", micro_audit.count_violations}};
  }
  if (!portrait.empty()) {
    json ends = json::array();
    for (const auto& e : portrait)
      ends.push_back({{"start", {e.start[0], e.start[1]}},
                      {"end", {e.end[0], e.end[1]}},
                      {"class", to_string(e.cls.tag)},
                      {"residual", e.residual}});
    j["portrait"] = ends;
  }
  j["diagnostics"] = diagnostics;
  return j;
}

CsvTable snapshot_table(const std::vector<DensityField<double>>& snapshots) {
  CsvTable t;
  t.header = {"t", "x"};
  const int J = snapshots.empty() ? 0 : snapshots.front().lanes();
  for (int j = 0; j < J; ++j) t.header.push_back("rho_" + std::to_string(j + 1));
  for (const auto& f : snapshots)
    for (int i = 0; i < f.cells(); ++i) {
      std::vector<double> row{f.time, f.grid.center(i)};
      for (int j = 0; j < J; ++j) row.push_back(f.rho(j, i));
      t.rows.push_back(std::move(row));
    }
  return t;
}

CsvTable means_table(const std::vector<MeanSample>& means) {
  CsvTable t;
  t.header = {"t"};
  const std::size_t J = means.empty() ? 0 : means.front().mean.size();
  for (std::size_t j = 0; j < J; ++j) {
    t.header.push_back("mean_" + std::to_string(j + 1));
    t.header.push_back("std_" + std::to_string(j + 1));
  }
  for (const auto& s : means) {
    std::vector<double> row{s.t};
    for (std::size_t j = 0; j < J; ++j) {
      row.push_back(s.mean[j]);
      row.push_back(s.std[j]);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable events_table(const std::vector<LaneChangeEvent>& events) {
  CsvTable t;
  t.header = {"t", "vehicle", "from_lane", "to_lane", "x"};
  for (const auto& e : events)
    t.rows.push_back({e.time, double(e.vehicle), double(e.from_lane + 1), double(e.to_lane + 1),
                      e.position});
  return t;
}

CsvTable micro_snapshot_table(const std::vector<MicroSnapshot>& snapshots) {
  CsvTable t;
  t.header = {"t", "vehicle", "lane", "x"};
  for (const auto& s : snapshots)
    for (const auto& v : s.vehicles)
      t.rows.push_back({s.time, double(v.id), double(v.lane + 1), v.position});
  return t;
}

void write_outputs(const RunReport& report, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory '" + dir + "': " + ec.message());
  const fs::path base(dir);
  if (!report.snapshots.empty()) {
    write_csv(snapshot_table(report.snapshots), (base / "snapshots.csv").string());
    write_csv(means_table(report.means), (base / "means.csv").string());
  }
  if (report.experiment == Experiment::Consistency) {
    write_csv(events_table(report.events), (base / "events.csv").string());
    write_csv(micro_snapshot_table(report.micro_snapshots),
              (base / "micro_snapshots.csv").string());
  }
  if (!report.queue_front.empty()) {
    CsvTable q;
    q.header = {"t", "queue_front"};
    for (const auto& s : report.queue_front) q.rows.push_back({s.t, s.front});
    write_csv(q, (base / "queue_front.csv").string());
  }
  if (!report.portrait.empty()) {
    CsvTable tr, ends;
    tr.header = {"start", "t", "rho_1", "rho_2"};
    ends.header = {"start", "rho1_0", "rho2_0", "rho1_T", "rho2_T", "class_code", "residual"};
    for (std::size_t k = 0; k < report.portrait.size(); ++k) {
      const auto& e = report.portrait[k];
      for (std::size_t n = 0; n < e.trajectory.t.size(); ++n)
        tr.rows.push_back({double(k), e.trajectory.t[n], e.trajectory.rho[n][0],
                           e.trajectory.rho[n][1]});
      ends.rows.push_back({double(k), e.start[0], e.start[1], e.end[0], e.end[1],
                           double(static_cast<int>(e.cls.tag)), e.residual});
    }
    write_csv(tr, (base / "portrait_trajectories.csv").string());
    write_csv(ends, (base / "portrait_endpoints.csv").string());
  }
  std::ofstream out(base / "report.json");
  if (!out) throw IoError("cannot write '" + (base / "report.json").string() + "'");
  out << report.to_json().dump(2) << "\n";
}

}  // namespace laneflow
