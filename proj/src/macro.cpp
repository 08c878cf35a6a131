#include "laneflow/macro.hpp"

#include <cmath>

#include "laneflow/micro.hpp"

namespace laneflow {

namespace {

/// Adds value * |[a, b) ∩ cell| / dx to every cell; a, b in grid coordinates with a < b.
void deposit(Eigen::Ref<Eigen::Array<double, 1, Eigen::Dynamic>> row, const Grid<double>& grid,
             double a, double b, double value) {
  const double dx = grid.dx();
  const int M = grid.cells;
  int first = static_cast<int>(std::floor((a - grid.x_min) / dx));
  int last = static_cast<int>(std::floor((b - grid.x_min) / dx));
  first = std::clamp(first, 0, M - 1);
  last = std::clamp(last, 0, M - 1);
  for (int i = first; i <= last; ++i) {
    const double lo = grid.x_min + dx * i;
    const double hi = i == M - 1 ? grid.x_max : grid.x_min + dx * (i + 1);
    const double overlap = std::min(b, hi) - std::max(a, lo);
    if (overlap > 0) row[i] += value * overlap / dx;
  }
}

}  // namespace

DensityField<double> project_micro(const MicroState& state, const Grid<double>& grid) {
  grid.validate();
  const double L = state.road_length;
  if (std::abs(grid.length() - L) > 1e-12 * L)
    throw DomainError("project_micro: grid extent must equal the road length");
  auto field = make_field(grid, state.lane_count());
  field.time = state.time;
  for (int j = 0; j < state.lane_count(); ++j) {
    auto row = field.rho.row(j);
    for (int id : state.lanes[j]) {
      const double rho = local_density(state, id);
      const double a = grid.x_min + state.vehicles[id].position;
      const double b = a + headway(state, id);
      if (b <= grid.x_max) {
        deposit(row, grid, a, b, rho);
      } else {
        deposit(row, grid, a, grid.x_max, rho);
        deposit(row, grid, grid.x_min, b - L, rho);
      }
    }
  }
  // Overlap sums of jam-spaced vehicles can land a few ulps above rho_max.
  const double rmax = state.params.rho_max;
  field.rho = field.rho.min(rmax).max(0.0);
  return field;
}

}  // namespace laneflow
