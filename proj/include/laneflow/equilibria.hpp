#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "laneflow/core.hpp"

namespace laneflow {

/// Two-lane analysis: index 0 is the slow lane, index 1 the fast lane.
using LanePair = std::array<SpeedLaw<double>, 2>;

LanePair lane_pair(const ModelParams& params);

enum class EqTag { A, B1, B2, C, D, E, NotEquilibrium };

std::string to_string(EqTag tag);

struct EquilibriumClass {
  EqTag tag = EqTag::NotEquilibrium;
  std::optional<double> v_eq;  ///< common speed when the lane speeds coincide
  double rho1_mu = 0.0;
  double rho2_mu = 0.0;
  bool merged_into_c = false;  ///< B1 states behave as class C under perturbation
};

struct CriticalDensities {
  double rho1_mu = 0.0;
  double rho2_mu = 0.0;
  double v1_mu = 0.0;
  double v2_mu = 0.0;
};

CriticalDensities critical_densities(const LanePair& laws, double mu);

inline constexpr double kDefaultTolEq = 2e-3;

EquilibriumClass classify(const Eigen::Vector2d& rho, const LanePair& laws,
                          const ModelParams& params, double tol_eq = kDefaultTolEq);

/// (dρ1/dt, dρ2/dt) of the space-homogeneous system; the entries sum to zero.
Eigen::Vector2d homogeneous_rhs(const Eigen::Vector2d& rho, const LanePair& laws,
                                const ModelParams& params);

struct Trajectory {
  std::vector<double> t;
  std::vector<Eigen::Vector2d> rho;

  const Eigen::Vector2d& back() const { return rho.back(); }
};

/// Classical RK4 on ρ1 with ρ2 = total − ρ1. A step that would carry the state across a
/// point where the lane-change direction changes is shortened onto that point.
Trajectory integrate_homogeneous(const Eigen::Vector2d& start, double T, double dt,
                                 const LanePair& laws, const ModelParams& params,
                                 int sample_stride = 1);

/// Where the homogeneous flow started at `start` comes to rest.
Eigen::Vector2d homogeneous_limit(const Eigen::Vector2d& start, const LanePair& laws,
                                  const ModelParams& params);

double linear_decay_rate(const Eigen::Vector2d& eq, int direction, const LanePair& laws,
                         const ModelParams& params, double tol_eq = kDefaultTolEq);

/// Least-squares slope of log|ρ1(t) − eq1| over samples with t ≤ t_end; NaN when fewer
/// than two samples have a nonzero deviation.
double fit_decay_rate(const Trajectory& trajectory, const Eigen::Vector2d& eq, double t_end);

enum class Stability { GloballyAsymptoticallyStable, AsymptoticallyStable, MarginallyStable };

std::string to_string(Stability s);

struct StabilityVerdict {
  Stability tag = Stability::MarginallyStable;
  Eigen::Vector2d limit = Eigen::Vector2d::Zero();
};

/// `shift` moves mass into lane 1 (positive) or out of it (negative).
StabilityVerdict predict_stability(const Eigen::Vector2d& eq, double shift, const LanePair& laws,
                                   const ModelParams& params, double tol_eq = kDefaultTolEq);

/// Line of equal speeds for linear laws.
double equilibrium_curve(const LanePair& laws, double rho1);

struct PortraitEntry {
  Eigen::Vector2d start;
  Eigen::Vector2d end;
  EquilibriumClass cls;
  double residual = 0.0;
  Trajectory trajectory;
};

std::vector<Eigen::Vector2d> portrait_starts(int resolution, double rho_max);

std::vector<PortraitEntry> phase_portrait(const std::vector<Eigen::Vector2d>& starts, double T,
                                          double dt, const LanePair& laws,
                                          const ModelParams& params, int sample_stride = 100,
                                          double tol_eq = 0.0);

}  // namespace laneflow
