#include "laneflow/equilibria.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace laneflow {

namespace {

void require_pair(const Eigen::Vector2d& rho, double rho_max) {
  for (int k = 0; k < 2; ++k)
    if (!(rho[k] >= 0 && rho[k] <= rho_max))
      throw DomainError("two-lane state outside [0, rho_max]^2");
}

int sign(double v) { return (v > 0) - (v < 0); }

double s1(double y, double total, const LanePair& laws, const ModelParams& params) {
  return homogeneous_rhs(Eigen::Vector2d(y, total - y), laws, params)[0];
}

/// First point from `from` toward `to` where the sign of S1 differs from `s0`.
double first_switch(double from, double to, int s0, double total, const LanePair& laws,
                    const ModelParams& params) {
  if (sign(s1(to, total, laws, params)) == s0) return to;
  double lo = from, hi = to;
  for (int it = 0; it < 400; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (sign(s1(mid, total, laws, params)) == s0 ? lo : hi) = mid;
  }
  return hi;
}

}  // namespace

LanePair lane_pair(const ModelParams& params) {
  if (params.lane_count != 2) throw DomainError("two-lane analysis needs lane_count = 2");
  const auto laws = params.laws();
  return {laws[0], laws[1]};
}

std::string to_string(EqTag tag) {
  switch (tag) {
    case EqTag::A: return "A";
    case EqTag::B1: return "B1";
    case EqTag::B2: return "B2";
    case EqTag::C: return "C";
    case EqTag::D: return "D";
    case EqTag::E: return "E";
    case EqTag::NotEquilibrium: return "NotEquilibrium";
  }
  return "?";
}

std::string to_string(Stability s) {
  switch (s) {
    case Stability::GloballyAsymptoticallyStable: return "globally_asymptotically_stable";
    case Stability::AsymptoticallyStable: return "asymptotically_stable";
    case Stability::MarginallyStable: return "marginally_stable";
  }
  return "?";
}

CriticalDensities critical_densities(const LanePair& laws, double mu) {
  CriticalDensities c;
  c.v1_mu = speed(laws[0], mu);
  c.v2_mu = speed(laws[1], mu);
  c.rho1_mu = c.v2_mu <= laws[0].vmax ? speed_inverse(laws[0], c.v2_mu) : 0.0;
  c.rho2_mu = speed_inverse(laws[1], std::min(c.v1_mu, laws[1].vmax));
  return c;
}

EquilibriumClass classify(const Eigen::Vector2d& rho, const LanePair& laws,
                          const ModelParams& params, double tol_eq) {
  require_pair(rho, params.rho_max);
  const double mu = params.mu, r1 = rho[0], r2 = rho[1];
  const auto crit = critical_densities(laws, mu);
  EquilibriumClass out;
  out.rho1_mu = crit.rho1_mu;
  out.rho2_mu = crit.rho2_mu;

  const double v1 = speed(laws[0], r1), v2 = speed(laws[1], r2);
  if (r1 == 0 && laws[0].vmax <= laws[1].vmax && r2 <= speed_inverse(laws[1], laws[0].vmax)) {
    out.tag = EqTag::E;
    return out;
  }
  if (std::abs(v1 - v2) <= std::max(tol_eq, kSpeedTieTolerance)) {
    out.v_eq = 0.5 * (v1 + v2);
    if (r1 < mu && r2 < mu) {
      out.tag = EqTag::A;
    } else if (r1 < mu && r2 >= mu && r2 < crit.rho2_mu) {
      out.tag = EqTag::B2;
    } else {
      out.tag = EqTag::B1;
      out.merged_into_c = true;
    }
    return out;
  }
  if (r1 >= mu && r2 >= mu) {
    out.tag = EqTag::C;
  } else if (r1 < mu && r2 >= mu && v1 < v2 && r2 <= crit.rho2_mu) {
    out.tag = EqTag::D;
  } else {
    out.tag = EqTag::NotEquilibrium;
  }
  return out;
}

Eigen::Vector2d homogeneous_rhs(const Eigen::Vector2d& rho, const LanePair& laws,
                                const ModelParams& params) {
  require_pair(rho, params.rho_max);
  const double into1 = lane_change_rate(rho[1], rho[0], laws[1], laws[0], params);
  const double into2 = lane_change_rate(rho[0], rho[1], laws[0], laws[1], params);
  const double s = into1 - into2;
  return {s, -s};
}

Trajectory integrate_homogeneous(const Eigen::Vector2d& start, double T, double dt,
                                 const LanePair& laws, const ModelParams& params,
                                 int sample_stride) {
  require_pair(start, params.rho_max);
  if (!(T >= 0) || !(dt > 0)) throw DomainError("integrate_homogeneous: need T >= 0, dt > 0");
  const double total = start[0] + start[1];
  const double lo = std::max(0.0, total - params.rho_max);
  const double hi = std::min(params.rho_max, total);
  auto f = [&](double y) { return s1(std::clamp(y, lo, hi), total, laws, params); };

  const long steps = T == 0 ? 0 : static_cast<long>(std::ceil(T / dt - 1e-9));
  const double h = steps == 0 ? 0.0 : T / static_cast<double>(steps);
  const int stride = std::max(1, sample_stride);

  Trajectory out;
  double y = start[0];
  bool moved = false;
  out.t.push_back(0.0);
  out.rho.push_back(start);
  for (long n = 1; n <= steps; ++n) {
    const double f0 = f(y);
    if (f0 != 0) {
      const int s0 = sign(f0);
      const double k1 = f0;
      const double k2 = f(y + 0.5 * h * k1);
      const double k3 = f(y + 0.5 * h * k2);
      const double k4 = f(y + h * k3);
      // Stages on both sides of a switch mix two vector fields; step with Euler instead.
      const bool straddles = sign(k2) != s0 || sign(k3) != s0 || sign(k4) != s0;
      const double incr = straddles ? h * k1 : h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4);
      double next = std::clamp(y + incr, lo, hi);
      if (sign(f(next)) != s0) next = first_switch(y, next, s0, total, laws, params);
      moved = moved || next != y;
      y = next;
    }
    if (n % stride == 0 || n == steps) {
      out.t.push_back(h * static_cast<double>(n));
      out.rho.push_back(moved ? Eigen::Vector2d(y, total - y) : start);
    }
  }
  return out;
}

Eigen::Vector2d homogeneous_limit(const Eigen::Vector2d& start, const LanePair& laws,
                                  const ModelParams& params) {
  require_pair(start, params.rho_max);
  const double total = start[0] + start[1];
  const int s0 = sign(s1(start[0], total, laws, params));
  if (s0 == 0) return start;
  const double bound =
      s0 < 0 ? std::max(0.0, total - params.rho_max) : std::min(params.rho_max, total);
  const double y = first_switch(start[0], bound, s0, total, laws, params);
  return {y, total - y};
}

namespace {

/// Amplification with the empty-source value λ = 1 allowed.
double amplification_closed(double rho_source, double rho_target, double rho_max) {
  if (rho_source > 0) return amplification(rho_source, rho_target, rho_max);
  return 1.0 / (1.0 - rho_target / rho_max) - 1.0;
}

}  // namespace

double linear_decay_rate(const Eigen::Vector2d& eq, int direction, const LanePair& laws,
                         const ModelParams& params, double tol_eq) {
  if (direction == 0) throw DomainError("linear_decay_rate: direction must be nonzero");
  const auto cls = classify(eq, laws, params, tol_eq);
  const bool applicable = cls.tag == EqTag::A || (cls.tag == EqTag::E && direction > 0);
  if (!applicable)
    throw NotApplicableError("linear decay rate is defined for class A, or class E with a "
                             "positive shift; got class " + to_string(cls.tag));
  const int src = direction > 0 ? 0 : 1, dst = 1 - src;
  const double target = eq[dst];
  if (target == 0) return 0.0;
  const double gprime = -2.0 / params.rho_max;
  return params.nu * target * amplification_closed(eq[src], target, params.rho_max) * gprime;
}

double fit_decay_rate(const Trajectory& trajectory, const Eigen::Vector2d& eq, double t_end) {
  double n = 0, st = 0, sl = 0, stt = 0, stl = 0;
  for (std::size_t k = 0; k < trajectory.t.size(); ++k) {
    const double t = trajectory.t[k];
    if (t > t_end) break;
    const double dev = std::abs(trajectory.rho[k][0] - eq[0]);
    if (dev == 0) continue;
    const double l = std::log(dev);
    n += 1;
    st += t;
    sl += l;
    stt += t * t;
    stl += t * l;
  }
  const double den = n * stt - st * st;
  if (n < 2 || den == 0) return std::numeric_limits<double>::quiet_NaN();
  return (n * stl - st * sl) / den;
}

StabilityVerdict predict_stability(const Eigen::Vector2d& eq, double shift, const LanePair& laws,
                                   const ModelParams& params, double tol_eq) {
  const auto cls = classify(eq, laws, params, tol_eq);
  if (cls.tag == EqTag::NotEquilibrium)
    throw DomainError("predict_stability: state is not an equilibrium");
  const Eigen::Vector2d perturbed(eq[0] + shift, eq[1] - shift);
  if (!(perturbed.array() >= 0).all() || !(perturbed.array() <= params.rho_max).all())
    throw DomainError("predict_stability: perturbed state leaves [0, rho_max]^2");

  StabilityVerdict v;
  v.limit = homogeneous_limit(perturbed, laws, params);
  if (cls.tag == EqTag::A || cls.tag == EqTag::E)
    v.tag = Stability::GloballyAsymptoticallyStable;
  else if ((v.limit - eq).cwiseAbs().maxCoeff() <= 1e-9)
    v.tag = Stability::AsymptoticallyStable;
  else
    v.tag = Stability::MarginallyStable;
  return v;
}

double equilibrium_curve(const LanePair& laws, double rho1) {
  for (const auto& law : laws)
    if (law.kind != SpeedKind::Linear)
      throw NotApplicableError("equilibrium_curve requires linear speed laws");
  const double rmax = laws[0].rho_max;
  if (!(rho1 >= 0 && rho1 <= rmax)) throw DomainError("equilibrium_curve: rho1 out of range");
  return rmax * (1.0 - laws[0].vmax / laws[1].vmax * (1.0 - rho1 / rmax));
}

std::vector<Eigen::Vector2d> portrait_starts(int resolution, double rho_max) {
  if (resolution < 1) throw DomainError("portrait resolution must be positive");
  std::vector<Eigen::Vector2d> out;
  for (int i = 0; i <= resolution; ++i)
    for (int k = 0; k <= resolution; ++k)
      out.emplace_back(rho_max * i / resolution, rho_max * k / resolution);
  return out;
}

std::vector<PortraitEntry> phase_portrait(const std::vector<Eigen::Vector2d>& starts, double T,
                                          double dt, const LanePair& laws,
                                          const ModelParams& params, int sample_stride,
                                          double tol_eq) {
  std::vector<PortraitEntry> out;
  out.reserve(starts.size());
  for (const auto& s : starts) {
    PortraitEntry e;
    e.start = s;
    e.trajectory = integrate_homogeneous(s, T, dt, laws, params, sample_stride);
    Eigen::Vector2d end = e.trajectory.back();
    const double total = end[0] + end[1];
    for (int k = 0; k < 2; ++k) {
      if (end[k] != params.mu && std::abs(end[k] - params.mu) <= 1e-9) {
        const double other = total - params.mu;
        if (other >= 0 && other <= params.rho_max) {
          end[k] = params.mu;
          end[1 - k] = other;
        }
        break;
      }
    }
    e.end = end;
    e.cls = classify(end, laws, params, tol_eq);
    e.residual = std::abs(homogeneous_rhs(end, laws, params)[0]);
    out.push_back(std::move(e));
  }
  return out;
}

}  // namespace laneflow
