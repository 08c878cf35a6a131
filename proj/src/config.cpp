#include "laneflow/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace laneflow {

namespace {

struct Entry {
  std::string value;
  int line = 0;
  bool used = false;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) out.push_back(trim(cur));
  return out;
}

bool parse_plain_double(const std::string& s, double& out) {
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && p == end;
}

class Reader {
 public:
  explicit Reader(const std::string& text) {
    std::istringstream in(text);
    std::string raw, section;
    int line = 0;
    while (std::getline(in, raw)) {
      ++line;
      const auto hash = raw.find('#');
      const std::string s = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
      if (s.empty()) continue;
      if (s.front() == '[') {
        if (s.back() != ']') throw ConfigError("malformed section header", line);
        section = trim(s.substr(1, s.size() - 2));
        if (section.empty()) throw ConfigError("empty section name", line);
        sections_[section] = line;
        continue;
      }
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("expected 'key = value'", line);
      const std::string key = trim(s.substr(0, eq));
      if (key.empty()) throw ConfigError("empty key", line);
      const std::string full = section.empty() ? key : section + "." + key;
      if (entries_.count(full)) throw ConfigError("duplicate key", line, full);
      entries_[full] = {trim(s.substr(eq + 1)), line, false};
    }
  }

  const Entry* take(const std::string& key) {
    auto it = entries_.find(key);
    if (it == entries_.end()) return nullptr;
    it->second.used = true;
    return &it->second;
  }

  bool has_section(const std::string& name) const { return sections_.count(name) > 0; }

  std::vector<std::pair<std::string, int>> sections_with_prefix(const std::string& prefix) const {
    std::vector<std::pair<std::string, int>> out;
    for (const auto& [name, line] : sections_)
      if (name.rfind(prefix, 0) == 0) out.emplace_back(name, line);
    return out;
  }

  void reject_unused() const {
    const Entry* first = nullptr;
    std::string first_key;
    for (const auto& [k, e] : entries_)
      if (!e.used && (!first || e.line < first->line)) {
        first = &e;
        first_key = k;
      }
    if (first) throw ConfigError("unknown key", first->line, first_key);
  }

  double number(const std::string& key, double fallback) {
    const Entry* e = take(key);
    return e ? to_double(*e, key) : fallback;
  }

  int integer(const std::string& key, int fallback) {
    const Entry* e = take(key);
    if (!e) return fallback;
    int v = 0;
    const char* end = e->value.data() + e->value.size();
    auto [p, ec] = std::from_chars(e->value.data(), end, v);
    if (ec != std::errc() || p != end) throw ConfigError("expected an integer", e->line, key);
    return v;
  }

  std::vector<double> numbers(const Entry& e, const std::string& key) {
    std::vector<double> out;
    for (const auto& part : split(e.value, ',')) out.push_back(to_double({part, e.line}, key));
    return out;
  }

  static double to_double(const Entry& e, const std::string& key) {
    double v = 0;
    const auto slash = e.value.find('/');
    if (slash == std::string::npos) {
      if (parse_plain_double(e.value, v)) return v;
    } else {
      double num = 0, den = 0;
      if (parse_plain_double(trim(e.value.substr(0, slash)), num) &&
          parse_plain_double(trim(e.value.substr(slash + 1)), den) && den != 0)
        return num / den;
    }
    throw ConfigError("expected a number, got '" + e.value + "'", e.line, key);
  }

 private:
  std::map<std::string, Entry> entries_;
  std::map<std::string, int> sections_;
};

ScenarioConfig defaults_for(Experiment e) {
  ScenarioConfig c;
  c.experiment = e;
  switch (e) {
    case Experiment::Consistency:
      c.T = 100;
      c.grid = {0.0, 1.0, 300};
      break;
    case Experiment::GlobalPerturbation:
      c.T = 50;
      c.grid = {-0.5, 0.5, 300};
      break;
    case Experiment::LocalPerturbation:
      c.T = 5;
      c.grid = {-0.5, 0.5, 100};
      break;
    case Experiment::LaneClosure:
      c.T = 1.2;
      c.cfl = 0.99;
      c.grid = {-0.5, 0.5, 1000};
      c.model.lane_count = 3;
      c.model.vmax = {0.6, 0.7, 1.0};
      c.bc.left.kind = BoundaryKind::Dirichlet;
      c.bc.right.kind = BoundaryKind::FreeOutflow;
      break;
    case Experiment::PhasePortrait:
      c.T = 200;
      break;
    case Experiment::Classify:
    case Experiment::Custom:
      break;
  }
  return c;
}

BoundarySide parse_side(Reader& r, const std::string& which, BoundarySide side) {
  if (const Entry* e = r.take("bc." + which)) {
    if (e->value == "periodic") side.kind = BoundaryKind::Periodic;
    else if (e->value == "dirichlet") side.kind = BoundaryKind::Dirichlet;
    else if (e->value == "outflow") side.kind = BoundaryKind::FreeOutflow;
    else throw ConfigError("expected periodic, dirichlet or outflow", e->line, "bc." + which);
  }
  if (const Entry* e = r.take("bc." + which + "_values")) {
    if (side.kind != BoundaryKind::Dirichlet)
      throw ConfigError("values are only allowed for a dirichlet boundary", e->line,
                        "bc." + which + "_values");
    side.values = r.numbers(*e, "bc." + which + "_values");
  }
  return side;
}

std::string kind_name(BoundaryKind k) {
  switch (k) {
    case BoundaryKind::Periodic: return "periodic";
    case BoundaryKind::Dirichlet: return "dirichlet";
    case BoundaryKind::FreeOutflow: return "outflow";
  }
  return "?";
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? ", " : "") + format_double(v[i]);
  return out;
}

}  // namespace

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::Consistency: return "consistency";
    case Experiment::GlobalPerturbation: return "perturb-global";
    case Experiment::LocalPerturbation: return "perturb-local";
    case Experiment::LaneClosure: return "lane-closure";
    case Experiment::Classify: return "classify";
    case Experiment::PhasePortrait: return "phase-portrait";
    case Experiment::Custom: return "custom";
  }
  return "?";
}

Experiment experiment_from_string(const std::string& name) {
  for (auto e : {Experiment::Consistency, Experiment::GlobalPerturbation,
                 Experiment::LocalPerturbation, Experiment::LaneClosure, Experiment::Classify,
                 Experiment::PhasePortrait, Experiment::Custom})
    if (to_string(e) == name) return e;
  throw ConfigError("unknown experiment '" + name + "'", 0, "experiment");
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

ScenarioConfig parse_config(const std::string& text, std::optional<Experiment> fallback) {
  Reader r(text);

  std::optional<Experiment> exp;
  if (const Entry* e = r.take("experiment")) {
    try {
      exp = experiment_from_string(e->value);
    } catch (const ConfigError& err) {
      throw ConfigError("unknown experiment '" + e->value + "'", e->line, "experiment");
    }
    if (fallback && *fallback != *exp)
      throw ConfigError("config is for '" + e->value + "', not '" + to_string(*fallback) + "'",
                        e->line, "experiment");
  }
  if (!exp) exp = fallback;
  if (!exp) throw ConfigError("missing required key", 0, "experiment");

  ScenarioConfig c = defaults_for(*exp);
  ModelParams& m = c.model;

  m.lane_count = r.integer("model.lanes", m.lane_count);
  const Entry* vmax_entry = r.take("model.vmax");
  if (vmax_entry) m.vmax = r.numbers(*vmax_entry, "model.vmax");
  if (m.lane_count < 1) throw ConfigError("lane count must be at least 1", 0, "model.lanes");
  if (static_cast<int>(m.vmax.size()) != m.lane_count)
    throw ConfigError("vmax needs one value per lane", vmax_entry ? vmax_entry->line : 0,
                      "model.vmax");
  m.vehicle_length = r.number("model.vehicle_length", m.vehicle_length);
  m.safety_distance = r.number("model.safety_distance", m.safety_distance);
  m.rho_max = r.number("model.rho_max", m.rho_max);
  m.mu = r.number("model.mu", 0.5 * m.rho_max);
  m.nu = r.number("model.nu", m.nu);
  if (const Entry* e = r.take("model.speed_law")) {
    if (e->value == "linear") m.speed_kind = SpeedKind::Linear;
    else if (e->value == "quadratic") m.speed_kind = SpeedKind::Quadratic;
    else throw ConfigError("expected linear or quadratic", e->line, "model.speed_law");
  }
  c.tol_eq = r.number("model.tol_eq", c.tol_eq);
  if (c.tol_eq < 0) throw ConfigError("must be non-negative", 0, "model.tol_eq");

  c.grid.x_min = r.number("grid.x_min", c.grid.x_min);
  c.grid.x_max = r.number("grid.x_max", c.grid.x_max);
  c.grid.cells = r.integer("grid.cells", c.grid.cells);
  if (c.grid.cells < 1) throw ConfigError("must be at least 1", 0, "grid.cells");
  if (!(c.grid.x_max > c.grid.x_min)) throw ConfigError("must exceed x_min", 0, "grid.x_max");
  m.road_length = c.grid.length();

  try {
    m.validate();
  } catch (const DomainError& err) {
    throw ConfigError(err.what(), 0, "model");
  }

  c.T = r.number("time.T", c.T);
  c.cfl = r.number("time.cfl", c.cfl);
  c.micro_dt = r.number("time.micro_dt", c.micro_dt);
  c.ode_dt = r.number("time.ode_dt", c.ode_dt);
  if (!(c.T > 0)) throw ConfigError("must be positive", 0, "time.T");
  if (!(c.cfl > 0 && c.cfl <= 1)) throw ConfigError("must lie in (0, 1]", 0, "time.cfl");
  if (!(c.micro_dt > 0)) throw ConfigError("must be positive", 0, "time.micro_dt");
  if (!(c.ode_dt > 0)) throw ConfigError("must be positive", 0, "time.ode_dt");

  c.bc.left = parse_side(r, "left", c.bc.left);
  c.bc.right = parse_side(r, "right", c.bc.right);
  if (c.bc.left.kind == BoundaryKind::Periodic || c.bc.right.kind == BoundaryKind::Periodic) {
    if (c.bc.left.kind != c.bc.right.kind)
      throw ConfigError("periodic must be set on both ends", 0, "bc");
  }
  for (const BoundarySide* s : {&c.bc.left, &c.bc.right})
    if (!s->values.empty() && static_cast<int>(s->values.size()) != m.lane_count)
      throw ConfigError("dirichlet values need one entry per lane", 0, "bc");

  if (const Entry* e = r.take("equilibrium.rho")) {
    const auto v = r.numbers(*e, "equilibrium.rho");
    if (v.size() != 2) throw ConfigError("expected two densities", e->line, "equilibrium.rho");
    for (double x : v)
      if (!(x >= 0 && x <= m.rho_max))
        throw ConfigError("density outside [0, rho_max]", e->line, "equilibrium.rho");
    c.equilibrium = std::array<double, 2>{v[0], v[1]};
  }
  const Entry* shift_entry = r.take("equilibrium.shift");
  if (shift_entry) c.shift = Reader::to_double(*shift_entry, "equilibrium.shift");
  if (const Entry* e = r.take("equilibrium.amplitude"))
    c.amplitude = Reader::to_double(*e, "equilibrium.amplitude");
  c.bump_width = r.number("equilibrium.bump_width", c.bump_width);

  c.initial.assign(m.lane_count, InitialLane{});
  std::vector<bool> seen(m.lane_count, false);
  for (const auto& [name, line] : r.sections_with_prefix("initial.")) {
    int lane = 0;
    const std::string idx = name.substr(8);
    auto [p, ec] = std::from_chars(idx.data(), idx.data() + idx.size(), lane);
    if (ec != std::errc() || p != idx.data() + idx.size())
      throw ConfigError("initial section needs a lane number", line, name);
    if (lane < 1 || lane > m.lane_count)
      throw ConfigError("lane index " + idx + " outside 1.." + std::to_string(m.lane_count),
                        line, name);
    InitialLane& in = c.initial[lane - 1];
    seen[lane - 1] = true;
    const std::string pre = name + ".";
    const Entry* type = r.take(pre + "type");
    const Entry* count = r.take(pre + "count");
    const Entry* segs = r.take(pre + "segments");
    in.value = r.number(pre + "value", 0.0);
    if (count) {
      in.count = r.integer(pre + "count", 0);
      if (in.count < 0) throw ConfigError("must be non-negative", count->line, pre + "count");
    }
    if (segs) {
      for (const auto& part : split(segs->value, ',')) {
        const auto f = split(part, ':');
        if (f.size() != 3)
          throw ConfigError("segments are from:to:value", segs->line, pre + "segments");
        Segment s{Reader::to_double({f[0], segs->line}, pre + "segments"),
                  Reader::to_double({f[1], segs->line}, pre + "segments"),
                  Reader::to_double({f[2], segs->line}, pre + "segments")};
        if (!(s.from < s.to))
          throw ConfigError("segment needs from < to", segs->line, pre + "segments");
        in.segments.push_back(s);
      }
    }
    if (type) {
      if (type->value == "uniform") in.kind = InitialKind::Uniform;
      else if (type->value == "segments") in.kind = InitialKind::Segments;
      else if (type->value == "vehicles") in.kind = InitialKind::Vehicles;
      else throw ConfigError("expected uniform, segments or vehicles", type->line, pre + "type");
    } else {
      in.kind = count ? InitialKind::Vehicles
                      : (segs ? InitialKind::Segments : InitialKind::Uniform);
    }
    if (in.kind == InitialKind::Vehicles && !count)
      throw ConfigError("missing required key", line, pre + "count");
    if (in.kind != InitialKind::Vehicles && !(in.value >= 0 && in.value <= m.rho_max))
      throw ConfigError("density outside [0, rho_max]", line, pre + "value");
    for (const auto& s : in.segments)
      if (!(s.value >= 0 && s.value <= m.rho_max))
        throw ConfigError("density outside [0, rho_max]", line, pre + "segments");
  }

  if (r.has_section("closure")) {
    ClosureSpec cl;
    const Entry* lane = r.take("closure.lane");
    const Entry* start = r.take("closure.start");
    const Entry* end = r.take("closure.end");
    if (!lane) throw ConfigError("missing required key", 0, "closure.lane");
    if (!start) throw ConfigError("missing required key", 0, "closure.start");
    if (!end) throw ConfigError("missing required key", 0, "closure.end");
    cl.lane = r.integer("closure.lane", 0) - 1;
    if (cl.lane < 0 || cl.lane >= m.lane_count)
      throw ConfigError("lane index outside 1.." + std::to_string(m.lane_count), lane->line,
                        "closure.lane");
    cl.start = Reader::to_double(*start, "closure.start");
    cl.end = Reader::to_double(*end, "closure.end");
    if (!(cl.start <= cl.end) || cl.start < c.grid.x_min || cl.end > c.grid.x_max)
      throw ConfigError("interval must lie inside the domain", end->line, "closure.end");
    c.closure = cl;
  }

  c.portrait_resolution = r.integer("portrait.resolution", c.portrait_resolution);
  if (c.portrait_resolution < 1) throw ConfigError("must be at least 1", 0, "portrait.resolution");

  if (const Entry* e = r.take("output.dir")) c.output_dir = e->value;
  c.snapshot_stride = r.integer("output.snapshot_stride", c.snapshot_stride);
  c.micro_snapshot_stride = r.integer("output.micro_snapshot_stride", c.micro_snapshot_stride);
  if (c.snapshot_stride < 1) throw ConfigError("must be at least 1", 0, "output.snapshot_stride");
  if (c.micro_snapshot_stride < 1)
    throw ConfigError("must be at least 1", 0, "output.micro_snapshot_stride");

  r.reject_unused();

  auto need_all_lanes = [&] {
    for (int j = 0; j < m.lane_count; ++j)
      if (!seen[j]) throw ConfigError("missing required section", 0, "initial." + std::to_string(j + 1));
  };
  switch (c.experiment) {
    case Experiment::Consistency:
      need_all_lanes();
      for (int j = 0; j < m.lane_count; ++j)
        if (c.initial[j].kind != InitialKind::Vehicles)
          throw ConfigError("consistency runs need vehicle counts", 0,
                            "initial." + std::to_string(j + 1) + ".count");
      break;
    case Experiment::GlobalPerturbation:
      if (!c.equilibrium) throw ConfigError("missing required key", 0, "equilibrium.rho");
      if (!shift_entry) throw ConfigError("missing required key", 0, "equilibrium.shift");
      {
        const double a = (*c.equilibrium)[0] + c.shift, b = (*c.equilibrium)[1] - c.shift;
        if (!(a >= 0 && a <= m.rho_max && b >= 0 && b <= m.rho_max))
          throw ConfigError("perturbed state leaves [0, rho_max]^2", shift_entry->line,
                            "equilibrium.shift");
      }
      break;
    case Experiment::LocalPerturbation:
      if (!c.equilibrium) throw ConfigError("missing required key", 0, "equilibrium.rho");
      break;
    case Experiment::LaneClosure:
    case Experiment::Custom:
      need_all_lanes();
      break;
    case Experiment::Classify:
    case Experiment::PhasePortrait:
      break;
  }
  if ((c.experiment == Experiment::GlobalPerturbation ||
       c.experiment == Experiment::LocalPerturbation ||
       c.experiment == Experiment::Consistency || c.experiment == Experiment::Classify ||
       c.experiment == Experiment::PhasePortrait) &&
      m.lane_count != 2)
    throw ConfigError("this experiment needs exactly two lanes", 0, "model.lanes");
  return c;
}

ScenarioConfig load_config(const std::string& path, std::optional<Experiment> fallback) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), fallback);
}

std::string serialize(const ScenarioConfig& c) {
  std::ostringstream o;
  const ModelParams& m = c.model;
  o << "experiment = " << to_string(c.experiment) << "\n\n[model]\n";
  o << "lanes = " << m.lane_count << "\n";
  o << "vmax = " << join(m.vmax) << "\n";
  o << "vehicle_length = " << format_double(m.vehicle_length) << "\n";
  o << "safety_distance = " << format_double(m.safety_distance) << "\n";
  o << "rho_max = " << format_double(m.rho_max) << "\n";
  o << "mu = " << format_double(m.mu) << "\n";
  o << "nu = " << format_double(m.nu) << "\n";
  o << "speed_law = " << (m.speed_kind == SpeedKind::Linear ? "linear" : "quadratic") << "\n";
  o << "tol_eq = " << format_double(c.tol_eq) << "\n\n[grid]\n";
  o << "x_min = " << format_double(c.grid.x_min) << "\n";
  o << "x_max = " << format_double(c.grid.x_max) << "\n";
  o << "cells = " << c.grid.cells << "\n\n[time]\n";
  o << "T = " << format_double(c.T) << "\n";
  o << "cfl = " << format_double(c.cfl) << "\n";
  o << "micro_dt = " << format_double(c.micro_dt) << "\n";
  o << "ode_dt = " << format_double(c.ode_dt) << "\n\n[bc]\n";
  o << "left = " << kind_name(c.bc.left.kind) << "\n";
  o << "right = " << kind_name(c.bc.right.kind) << "\n";
  if (!c.bc.left.values.empty()) o << "left_values = " << join(c.bc.left.values) << "\n";
  if (!c.bc.right.values.empty()) o << "right_values = " << join(c.bc.right.values) << "\n";
  o << "\n[equilibrium]\n";
  if (c.equilibrium)
    o << "rho = " << join({(*c.equilibrium)[0], (*c.equilibrium)[1]}) << "\n";
  o << "shift = " << format_double(c.shift) << "\n";
  if (c.amplitude) o << "amplitude = " << format_double(*c.amplitude) << "\n";
  o << "bump_width = " << format_double(c.bump_width) << "\n";
  for (std::size_t j = 0; j < c.initial.size(); ++j) {
    const InitialLane& in = c.initial[j];
    if (in == InitialLane{} && c.experiment != Experiment::LaneClosure &&
        c.experiment != Experiment::Custom)
      continue;
    o << "\n[initial." << j + 1 << "]\n";
    switch (in.kind) {
      case InitialKind::Uniform: o << "type = uniform\n"; break;
      case InitialKind::Segments: o << "type = segments\n"; break;
      case InitialKind::Vehicles: o << "type = vehicles\n"; break;
    }
    o << "value = " << format_double(in.value) << "\n";
    if (!in.segments.empty()) {
      o << "segments = ";
      for (std::size_t k = 0; k < in.segments.size(); ++k) {
        const Segment& s = in.segments[k];
        o << (k ? ", " : "") << format_double(s.from) << ":" << format_double(s.to) << ":"
          << format_double(s.value);
      }
      o << "\n";
    }
    if (in.kind == InitialKind::Vehicles) o << "count = " << in.count << "\n";
  }
  if (c.closure) {
    o << "\n[closure]\n";
    o << "lane = " << c.closure->lane + 1 << "\n";
    o << "start = " << format_double(c.closure->start) << "\n";
    o << "end = " << format_double(c.closure->end) << "\n";
  }
  o << "\n[portrait]\nresolution = " << c.portrait_resolution << "\n";
  o << "\n[output]\ndir = " << c.output_dir << "\n";
  o << "snapshot_stride = " << c.snapshot_stride << "\n";
  o << "micro_snapshot_stride = " << c.micro_snapshot_stride << "\n";
  return o.str();
}

}  // namespace laneflow
