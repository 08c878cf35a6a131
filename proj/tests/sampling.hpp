#pragma once

#include <array>
#include <cmath>
#include <random>
#include <vector>

#include "laneflow/equilibria.hpp"

namespace laneflow::testing {

/// Two-dimensional Halton point (bases 2 and 3).
inline Eigen::Vector2d halton(std::uint64_t index) {
  auto radical = [](std::uint64_t i, std::uint64_t base) {
    double f = 1.0, r = 0.0;
    while (i > 0) {
      f /= static_cast<double>(base);
      r += f * static_cast<double>(i % base);
      i /= base;
    }
    return r;
  };
  return {radical(index, 2), radical(index, 3)};
}

struct SampledEquilibrium {
  EqTag tag;
  Eigen::Vector2d rho;
};

/// Draws an equilibrium of the requested class for linear laws with rho_max = 1.
inline SampledEquilibrium sample_equilibrium(EqTag tag, const LanePair& laws,
                                             const ModelParams& params, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double mu = params.mu;
  const auto crit = critical_densities(laws, mu);
  auto lerp = [&](double a, double b) { return a + (b - a) * u(rng); };
  Eigen::Vector2d r;
  switch (tag) {
    case EqTag::A: {
      const double r1 = lerp(0.02, crit.rho1_mu - 0.02);
      r = {r1, equilibrium_curve(laws, r1)};
      break;
    }
    case EqTag::B2: {
      const double r1 = lerp(crit.rho1_mu + 0.01, mu - 0.01);
      r = {r1, equilibrium_curve(laws, r1)};
      break;
    }
    case EqTag::C: r = {lerp(mu + 0.02, 0.98), lerp(mu + 0.02, 0.98)}; break;
    case EqTag::D: {
      const double r2 = lerp(mu + 0.01, crit.rho2_mu - 0.01);
      const double lo = speed_inverse(laws[0], speed(laws[1], r2));
      r = {lerp(lo + 0.01, mu - 0.01), r2};
      break;
    }
    case EqTag::E: r = {0.0, lerp(0.0, speed_inverse(laws[1], laws[0].vmax) - 0.01)}; break;
    default: r = {0.0, 0.0};
  }
  return {tag, r};
}

/// Shift that keeps the perturbed state inside [0, rho_max]^2, with the requested sign.
inline double admissible_shift(const Eigen::Vector2d& eq, double magnitude, int direction,
                               double rho_max) {
  const double room = direction > 0 ? std::min(eq[1], rho_max - eq[0])
                                    : std::min(eq[0], rho_max - eq[1]);
  return direction * std::min(magnitude, room);
}

}  // namespace laneflow::testing
