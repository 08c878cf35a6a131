#pragma once

#include <cmath>
#include <concepts>
#include <string>
#include <vector>

#include "laneflow/errors.hpp"

namespace laneflow {

enum class SpeedKind { Linear, Quadratic };

/// Density-speed relation of one lane.
template <std::floating_point Scalar>
struct SpeedLaw {
  SpeedKind kind = SpeedKind::Linear;
  Scalar vmax = Scalar(1);
  Scalar rho_max = Scalar(1);

  friend bool operator==(const SpeedLaw&, const SpeedLaw&) = default;
};

/// Speed differences below this are treated as ties by the lane-change dynamics.
inline constexpr double kSpeedTieTolerance = 1e-12;

struct ModelParams {
  int lane_count = 2;
  double vehicle_length = 1.0 / 300.0;
  double safety_distance = 1.0 / 300.0;
  double rho_max = 1.0;
  double mu = 0.5;
  double nu = 1.0;
  double road_length = 1.0;
  std::vector<double> vmax{0.7, 1.0};
  SpeedKind speed_kind = SpeedKind::Linear;

  double spacing() const { return vehicle_length + safety_distance; }

  void validate() const {
    if (lane_count < 1) throw DomainError("lane_count must be at least 1");
    if (static_cast<int>(vmax.size()) != lane_count)
      throw DomainError("vmax needs one entry per lane");
    if (!(vehicle_length > 0) || !(safety_distance > 0) || !(rho_max > 0) || !(nu > 0) ||
        !(road_length > 0))
      throw DomainError("l, d_s, rho_max, nu and road_length must be positive");
    if (std::abs(mu - 0.5 * rho_max) > 1e-15 * rho_max)
      throw DomainError("mu must equal rho_max / 2");
    for (std::size_t j = 0; j < vmax.size(); ++j) {
      if (!(vmax[j] > 0)) throw DomainError("vmax entries must be positive");
      if (j > 0 && !(vmax[j] > vmax[j - 1]))
        throw DomainError("vmax must be strictly increasing in lane index");
    }
  }

  template <std::floating_point Scalar = double>
  std::vector<SpeedLaw<Scalar>> laws() const {
    std::vector<SpeedLaw<Scalar>> out;
    out.reserve(vmax.size());
    for (double v : vmax) out.push_back({speed_kind, Scalar(v), Scalar(rho_max)});
    return out;
  }

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

namespace detail {
template <typename Scalar>
void require_density(Scalar rho, Scalar rho_max, const char* what) {
  if (!(rho >= Scalar(0) && rho <= rho_max))
    throw DomainError(std::string(what) + ": density " + std::to_string(double(rho)) +
                      " outside [0, rho_max]");
}
}  // namespace detail

template <std::floating_point Scalar>
Scalar speed(const SpeedLaw<Scalar>& law, Scalar rho) {
  detail::require_density(rho, law.rho_max, "speed");
  const Scalar r = rho / law.rho_max;
  switch (law.kind) {
    case SpeedKind::Linear: return law.vmax * (Scalar(1) - r);
    case SpeedKind::Quadratic: return law.vmax * (Scalar(1) - r * r);
  }
  throw DomainError("unknown speed law");
}

/// dv/drho.
template <std::floating_point Scalar>
Scalar speed_derivative(const SpeedLaw<Scalar>& law, Scalar rho) {
  detail::require_density(rho, law.rho_max, "speed_derivative");
  switch (law.kind) {
    case SpeedKind::Linear: return -law.vmax / law.rho_max;
    case SpeedKind::Quadratic: return Scalar(-2) * law.vmax * rho / (law.rho_max * law.rho_max);
  }
  throw DomainError("unknown speed law");
}

template <std::floating_point Scalar>
Scalar speed_inverse(const SpeedLaw<Scalar>& law, Scalar v) {
  if (!(v >= Scalar(0) && v <= law.vmax))
    throw DomainError("speed_inverse: speed outside [0, vmax]");
  const Scalar q = Scalar(1) - v / law.vmax;
  switch (law.kind) {
    case SpeedKind::Linear: return law.rho_max * q;
    case SpeedKind::Quadratic: return law.rho_max * std::sqrt(q);
  }
  throw DomainError("unknown speed law");
}

/// Follow-the-leader speed for a given headway; over-compressed headways give speed 0.
template <std::floating_point Scalar>
Scalar micro_speed(const SpeedLaw<Scalar>& law, Scalar headway, const ModelParams& params) {
  if (!(headway > Scalar(0))) throw DomainError("micro_speed: headway must be positive");
  const Scalar s = Scalar(params.spacing());
  if (headway <= s) return Scalar(0);
  return speed(law, law.rho_max * s / headway);
}

template <std::floating_point Scalar>
Scalar lambda_fn(Scalar rho, Scalar rho_max) {
  detail::require_density(rho, rho_max, "lambda_fn");
  return Scalar(1) - rho / rho_max;
}

/// Defined on [0, rho_max / 2] only.
template <std::floating_point Scalar>
Scalar g_fn(Scalar rho, Scalar rho_max) {
  if (!(rho >= Scalar(0) && rho <= rho_max / Scalar(2)))
    throw DomainError("g_fn: density outside [0, mu]");
  return Scalar(1) - Scalar(2) * rho / rho_max;
}

template <std::floating_point Scalar>
Scalar amplification(Scalar rho_source, Scalar rho_target, Scalar rho_max) {
  if (!(rho_source > Scalar(0) && rho_source <= rho_max))
    throw DomainError("amplification: source density outside (0, rho_max]");
  if (!(rho_target >= Scalar(0) && rho_target < rho_max / Scalar(2)))
    throw DomainError("amplification: target density outside [0, mu)");
  const Scalar lam = lambda_fn(rho_source, rho_max);
  const Scalar den = lam + (Scalar(1) - Scalar(2) * lam) * rho_target / rho_max;
  if (!(den > Scalar(0))) throw NumericalError("amplification: non-positive denominator");
  return Scalar(1) / den - Scalar(1);
}

/// 1 iff the target lane is strictly faster (beyond `tie`) and strictly below mu.
template <std::floating_point Scalar>
int lc_indicator(Scalar v_target, Scalar v_source, Scalar rho_target, Scalar mu,
                 Scalar tie = Scalar(0)) {
  return (v_target > v_source + tie && rho_target < mu) ? 1 : 0;
}

template <std::floating_point Scalar>
Scalar lc_probability(Scalar rho_source, Scalar rho_target, const SpeedLaw<Scalar>& source_law,
                      const SpeedLaw<Scalar>& target_law, const ModelParams& params,
                      Scalar tie = Scalar(0)) {
  const int ind = lc_indicator(speed(target_law, rho_target), speed(source_law, rho_source),
                               rho_target, Scalar(params.mu), tie);
  if (ind == 0) return Scalar(0);
  return g_fn(rho_target, Scalar(params.rho_max));
}

/// Mass rate moved from the source lane into the target lane.
template <std::floating_point Scalar>
Scalar transfer_kernel(Scalar rho_source, Scalar rho_target, const SpeedLaw<Scalar>& source_law,
                       const SpeedLaw<Scalar>& target_law, const ModelParams& params,
                       Scalar tie = Scalar(0)) {
  if (rho_source == Scalar(0) || rho_target == Scalar(0)) return Scalar(0);
  const Scalar pi = lc_probability(rho_source, rho_target, source_law, target_law, params, tie);
  if (pi == Scalar(0)) return Scalar(0);
  const Scalar rmax = Scalar(params.rho_max);
  const Scalar lam = lambda_fn(rho_source, rmax);
  const Scalar den = lam + (Scalar(1) - Scalar(2) * lam) * rho_target / rmax;
  return Scalar(params.nu) * pi * (rho_target / den - rho_target);
}

/// Rate into an exactly empty target lane: one vehicle's worth of density per ring length.
template <std::floating_point Scalar>
Scalar empty_lane_transfer(Scalar rho_source, const SpeedLaw<Scalar>& source_law,
                           const SpeedLaw<Scalar>& target_law, const ModelParams& params,
                           Scalar tie = Scalar(0)) {
  if (rho_source == Scalar(0)) return Scalar(0);
  const Scalar pi = lc_probability(rho_source, Scalar(0), source_law, target_law, params, tie);
  return Scalar(params.nu) * pi * Scalar(params.spacing() / params.road_length) *
         Scalar(params.rho_max);
}

/// Rate used by the macroscopic and homogeneous dynamics.
template <std::floating_point Scalar>
Scalar lane_change_rate(Scalar rho_source, Scalar rho_target, const SpeedLaw<Scalar>& source_law,
                        const SpeedLaw<Scalar>& target_law, const ModelParams& params) {
  const Scalar tie = Scalar(kSpeedTieTolerance);
  if (rho_target == Scalar(0))
    return empty_lane_transfer(rho_source, source_law, target_law, params, tie);
  return transfer_kernel(rho_source, rho_target, source_law, target_law, params, tie);
}

}  // namespace laneflow
