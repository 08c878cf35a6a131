#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "laneflow/core.hpp"

namespace laneflow {

struct MicroState;

template <std::floating_point Scalar>
struct Grid {
  Scalar x_min = Scalar(0);
  Scalar x_max = Scalar(1);
  int cells = 100;

  Scalar length() const { return x_max - x_min; }
  Scalar dx() const { return length() / Scalar(cells); }
  Scalar center(int i) const { return x_min + (Scalar(i) + Scalar(0.5)) * dx(); }

  void validate() const {
    if (cells < 1 || !(x_max > x_min)) throw DomainError("grid needs cells >= 1 and x_max > x_min");
  }

  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Lanes along rows, cells along columns.
template <std::floating_point Scalar>
using LaneArray = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using LaneMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <std::floating_point Scalar>
struct DensityField {
  Grid<Scalar> grid;
  LaneArray<Scalar> rho;
  Scalar time = Scalar(0);

  int lanes() const { return static_cast<int>(rho.rows()); }
  int cells() const { return static_cast<int>(rho.cols()); }
};

template <std::floating_point Scalar>
DensityField<Scalar> make_field(const Grid<Scalar>& grid, int lanes, Scalar value = Scalar(0)) {
  grid.validate();
  return {grid, LaneArray<Scalar>::Constant(lanes, grid.cells, value), Scalar(0)};
}

enum class BoundaryKind { Periodic, Dirichlet, FreeOutflow };

struct BoundarySide {
  BoundaryKind kind = BoundaryKind::Periodic;
  std::vector<double> values;  ///< per lane, Dirichlet only

  friend bool operator==(const BoundarySide&, const BoundarySide&) = default;
};

struct BoundaryCondition {
  BoundarySide left;
  BoundarySide right;

  static BoundaryCondition periodic() { return {}; }

  bool is_periodic() const { return left.kind == BoundaryKind::Periodic; }

  void validate(int lanes) const {
    if ((left.kind == BoundaryKind::Periodic) != (right.kind == BoundaryKind::Periodic))
      throw DomainError("periodic boundary must be used on both ends");
    for (const BoundarySide* s : {&left, &right})
      if (s->kind == BoundaryKind::Dirichlet && static_cast<int>(s->values.size()) != lanes)
        throw DomainError("Dirichlet boundary needs one value per lane");
  }

  friend bool operator==(const BoundaryCondition&, const BoundaryCondition&) = default;
};

/// Closed (lane, cell) pairs: no flux across their faces, no lane-change transfers.
struct ClosureMask {
  LaneMask closed;

  bool empty() const { return closed.size() == 0 || !closed.any(); }
  bool is_closed(int lane, int cell) const {
    return closed.size() != 0 && closed(lane, cell);
  }
};

/// Closes the cells of `lane` whose centers lie in [a, b].
template <std::floating_point Scalar>
ClosureMask closure_mask(const Grid<Scalar>& grid, int lanes, int lane, Scalar a, Scalar b,
                         ClosureMask mask = {}) {
  if (lane < 0 || lane >= lanes) throw DomainError("closure lane out of range");
  if (!(a <= b) || a < grid.x_min || b > grid.x_max)
    throw DomainError("closure interval must lie inside the domain");
  if (mask.closed.size() == 0) mask.closed = LaneMask::Constant(lanes, grid.cells, false);
  for (int i = 0; i < grid.cells; ++i) {
    const Scalar c = grid.center(i);
    if (c >= a && c <= b) mask.closed(lane, i) = true;
  }
  return mask;
}

template <std::floating_point Scalar>
Scalar flux(const SpeedLaw<Scalar>& law, Scalar rho) {
  return rho * speed(law, rho);
}

template <std::floating_point Scalar>
Scalar flux_derivative(const SpeedLaw<Scalar>& law, Scalar rho) {
  detail::require_density(rho, law.rho_max, "flux_derivative");
  const Scalar r = rho / law.rho_max;
  switch (law.kind) {
    case SpeedKind::Linear: return law.vmax * (Scalar(1) - Scalar(2) * r);
    case SpeedKind::Quadratic: return law.vmax * (Scalar(1) - Scalar(3) * r * r);
  }
  throw DomainError("unknown speed law");
}

template <std::floating_point Scalar>
Scalar rusanov_flux(const SpeedLaw<Scalar>& law, Scalar rho_left, Scalar rho_right) {
  const Scalar alpha =
      std::max(std::abs(flux_derivative(law, rho_left)), std::abs(flux_derivative(law, rho_right)));
  return Scalar(0.5) * (flux(law, rho_left) + flux(law, rho_right)) -
         Scalar(0.5) * alpha * (rho_right - rho_left);
}

/// Net lane-change rate into `lane` at `cell`, before any step limiting.
template <std::floating_point Scalar>
Scalar source(const DensityField<Scalar>& field, int cell, int lane, const ModelParams& params,
              const std::vector<SpeedLaw<Scalar>>& laws, const ClosureMask& mask = {}) {
  if (mask.is_closed(lane, cell)) return Scalar(0);
  const Scalar here = field.rho(lane, cell);
  Scalar s = Scalar(0);
  for (int other : {lane - 1, lane + 1}) {
    if (other < 0 || other >= field.lanes() || mask.is_closed(other, cell)) continue;
    const Scalar there = field.rho(other, cell);
    s += lane_change_rate(there, here, laws[other], laws[lane], params);
    s -= lane_change_rate(here, there, laws[lane], laws[other], params);
  }
  return s;
}

template <std::floating_point Scalar>
Scalar cfl_dt(const DensityField<Scalar>& field, const std::vector<SpeedLaw<Scalar>>& laws,
              Scalar cfl) {
  if (!(cfl > Scalar(0) && cfl <= Scalar(1))) throw DomainError("cfl must lie in (0, 1]");
  Scalar alpha = Scalar(0), vmax = Scalar(0);
  for (int j = 0; j < field.lanes(); ++j) {
    vmax = std::max(vmax, laws[j].vmax);
    for (int i = 0; i < field.cells(); ++i)
      alpha = std::max(alpha, std::abs(flux_derivative(laws[j], field.rho(j, i))));
  }
  alpha = std::max(alpha, Scalar(0.1) * vmax);
  return cfl * field.grid.dx() / alpha;
}

/// Ghost values per lane: column 0 left, column 1 right.
template <std::floating_point Scalar>
Eigen::Array<Scalar, Eigen::Dynamic, 2> apply_bc(const DensityField<Scalar>& field,
                                                 const BoundaryCondition& bc) {
  bc.validate(field.lanes());
  const int J = field.lanes(), M = field.cells();
  Eigen::Array<Scalar, Eigen::Dynamic, 2> ghost(J, 2);
  for (int j = 0; j < J; ++j) {
    if (bc.is_periodic()) {
      ghost(j, 0) = field.rho(j, M - 1);
      ghost(j, 1) = field.rho(j, 0);
      continue;
    }
    ghost(j, 0) = bc.left.kind == BoundaryKind::Dirichlet ? Scalar(bc.left.values[j])
                                                          : field.rho(j, 0);
    ghost(j, 1) = bc.right.kind == BoundaryKind::Dirichlet ? Scalar(bc.right.values[j])
                                                           : field.rho(j, M - 1);
  }
  return ghost;
}

struct StepOptions {
  double cfl = 0.9;
  double dt_max = 0.0;  ///< 0 disables the cap
  int max_halvings = 20;
};

namespace detail {

/// Mass moved from lane s to lane t over dt, cut so that neither the safety switch (target
/// reaching mu) nor the incentive switch (speed ordering) is overshot within one step.
template <typename Scalar>
Scalar limited_transfer(Scalar rho_s, Scalar rho_t, Scalar amount, const SpeedLaw<Scalar>& law_s,
                        const SpeedLaw<Scalar>& law_t, const ModelParams& params) {
  const Scalar rmax = Scalar(params.rho_max), mu = Scalar(params.mu);
  const Scalar tie = Scalar(kSpeedTieTolerance);
  Scalar m = std::min({amount, rho_s, rmax - rho_t});
  if (rho_t < mu) m = std::min(m, mu - rho_t);
  if (m <= Scalar(0)) return Scalar(0);
  auto gap = [&](Scalar q) { return speed(law_t, rho_t + q) - speed(law_s, rho_s - q); };
  if (gap(m) >= -tie) return m;
  Scalar lo = Scalar(0), hi = m;
  for (int it = 0; it < 200; ++it) {
    const Scalar mid = Scalar(0.5) * (lo + hi);
    const Scalar d = gap(mid);
    if (std::abs(d) <= tie) return mid;
    (d > 0 ? lo : hi) = mid;
    if (!(lo < mid && mid < hi)) break;
  }
  return lo;
}

}  // namespace detail

/// One unsplit explicit update. The CFL step is halved until all densities stay in [0, rho_max].
template <std::floating_point Scalar>
DensityField<Scalar> step(const DensityField<Scalar>& field, const BoundaryCondition& bc,
                          const ModelParams& params, const std::vector<SpeedLaw<Scalar>>& laws,
                          const StepOptions& opts, const ClosureMask& mask = {}) {
  const int J = field.lanes(), M = field.cells();
  if (static_cast<int>(laws.size()) != J) throw DomainError("one speed law per lane required");
  const bool periodic = bc.is_periodic();
  const auto ghost = apply_bc(field, bc);
  const Scalar dx = field.grid.dx(), rmax = Scalar(params.rho_max);

  LaneArray<Scalar> F(J, M + 1);
  for (int j = 0; j < J; ++j) {
    for (int i = 0; i <= M; ++i) {
      const Scalar l = i == 0 ? ghost(j, 0) : field.rho(j, i - 1);
      const Scalar r = i == M ? ghost(j, 1) : field.rho(j, i);
      const int cl = i == 0 ? (periodic ? M - 1 : -1) : i - 1;
      const int cr = i == M ? (periodic ? 0 : -1) : i;
      const bool gated = (cl >= 0 && mask.is_closed(j, cl)) || (cr >= 0 && mask.is_closed(j, cr));
      F(j, i) = gated ? Scalar(0) : rusanov_flux(laws[j], l, r);
    }
  }

  LaneArray<Scalar> rate_up(std::max(J - 1, 0), M), rate_down(std::max(J - 1, 0), M);
  for (int h = 0; h + 1 < J; ++h)
    for (int i = 0; i < M; ++i) {
      if (mask.is_closed(h, i) || mask.is_closed(h + 1, i)) {
        rate_up(h, i) = rate_down(h, i) = Scalar(0);
        continue;
      }
      const Scalar a = field.rho(h, i), b = field.rho(h + 1, i);
      rate_up(h, i) = lane_change_rate(a, b, laws[h], laws[h + 1], params);
      rate_down(h, i) = lane_change_rate(b, a, laws[h + 1], laws[h], params);
    }

  Scalar dt = cfl_dt(field, laws, Scalar(opts.cfl));
  if (opts.dt_max > 0) dt = std::min(dt, Scalar(opts.dt_max));
  const Scalar tol = Scalar(1e-12);

  for (int attempt = 0; attempt <= opts.max_halvings; ++attempt) {
    LaneArray<Scalar> next = field.rho;
    for (int j = 0; j < J; ++j)
      for (int i = 0; i < M; ++i) next(j, i) -= dt / dx * (F(j, i + 1) - F(j, i));
    for (int h = 0; h + 1 < J; ++h)
      for (int i = 0; i < M; ++i) {
        const Scalar a = field.rho(h, i), b = field.rho(h + 1, i);
        Scalar m = Scalar(0);
        if (rate_up(h, i) > 0)
          m = -detail::limited_transfer(a, b, dt * rate_up(h, i), laws[h], laws[h + 1], params);
        else if (rate_down(h, i) > 0)
          m = detail::limited_transfer(b, a, dt * rate_down(h, i), laws[h + 1], laws[h], params);
        next(h, i) += m;
        next(h + 1, i) -= m;
      }

    bool ok = true;
    for (Eigen::Index k = 0; k < next.size() && ok; ++k) {
      Scalar& v = next.data()[k];
      if (!(v >= -tol && v <= rmax + tol)) ok = false;
      else v = std::clamp(v, Scalar(0), rmax);
    }
    if (ok) return {field.grid, std::move(next), field.time + dt};
    dt *= Scalar(0.5);
  }
  throw NumericalError("macro step: density left [0, rho_max] after repeated dt halving");
}

template <std::floating_point Scalar>
DensityField<Scalar> step(const DensityField<Scalar>& field, const BoundaryCondition& bc,
                          const ModelParams& params, const std::vector<SpeedLaw<Scalar>>& laws,
                          Scalar cfl) {
  StepOptions opts;
  opts.cfl = double(cfl);
  return step(field, bc, params, laws, opts);
}

/// Steps until `T`, calling `observer(field, step_index)` after every step and once at start.
template <std::floating_point Scalar>
DensityField<Scalar> advance(
    DensityField<Scalar> field, Scalar T, const BoundaryCondition& bc, const ModelParams& params,
    const std::vector<SpeedLaw<Scalar>>& laws, StepOptions opts, const ClosureMask& mask = {},
    const std::function<void(const DensityField<Scalar>&, long)>& observer = {}) {
  long n = 0;
  if (observer) observer(field, n);
  while (field.time < T) {
    const Scalar remaining = T - field.time;
    if (remaining <= Scalar(1e-14) * std::max(Scalar(1), std::abs(T))) break;
    StepOptions o = opts;
    o.dt_max = opts.dt_max > 0 ? std::min(opts.dt_max, double(remaining)) : double(remaining);
    field = step(field, bc, params, laws, o, mask);
    ++n;
    if (observer) observer(field, n);
  }
  return field;
}

/// Returns (mean, sample standard deviation) over cells.
template <std::floating_point Scalar>
std::pair<Scalar, Scalar> mean_density(const DensityField<Scalar>& field, int lane) {
  if (lane < 0 || lane >= field.lanes()) throw DomainError("lane out of range");
  const auto row = field.rho.row(lane);
  const Scalar mean = field.grid.dx() * row.sum() / field.grid.length();
  const Eigen::Index M = row.size();
  if (M < 2) return {mean, Scalar(0)};
  const Scalar var = (row - mean).square().sum() / Scalar(M - 1);
  return {mean, std::sqrt(var)};
}

/// Total mass over all lanes.
template <std::floating_point Scalar>
Scalar total_mass(const DensityField<Scalar>& field) {
  return field.rho.sum() * field.grid.dx();
}

/// Cell averages of the piecewise-constant local densities of a ring-road state.
DensityField<double> project_micro(const MicroState& state, const Grid<double>& grid);

}  // namespace laneflow
