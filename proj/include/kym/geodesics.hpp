#pragma once

// Geodesics in the space of pairs (metric, bundle metric) and K-energy
// convexity along them.
//
// In symplectic coordinates the metric geodesic is linear in u.  For the
// bundle part, write the bundle metric in the complex frame as g(y, t) and its
// moment-coordinate form m(x, t) with x = grad f_t(y).  The reduced geodesic
// equation in the complex frame,
//
//   g_tt - 2 (f_t' / f'') g_t' + g'' (f_t' / f'')^2 = 0   (per torus direction),
//
// is the second t-derivative of g along the curves y(t) solving grad f_t(y) = x
// with x fixed, i.e. m_tt = 0 at fixed x.  So the coupled geodesic is linear in
// both u and m at fixed moment coordinates.

#include <cmath>
#include <vector>

#include "errors.hpp"
#include "invariants.hpp"
#include "system.hpp"

namespace kym {

struct GeodesicPath {
  std::vector<double> t;
  std::vector<PairState> states;
};

inline GeodesicPath metric_geodesic(const PairState& s0, const PairState& s1, int N) {
  if (N < 2) throw Error(ErrorCode::PathTooCoarse, "a path needs at least two samples");
  if (!same_class(s0, s1)) throw Error(ErrorCode::ClassMismatch, "endpoints live in different classes");
  GeodesicPath p;
  for (int k = 0; k < N; ++k) {
    const double t = double(k) / (N - 1);
    PairState s = s0;
    for (std::size_t j = 0; j < s.size(); ++j) s.phi[j] = (1 - t) * s0.phi[j] + t * s1.phi[j];
    if (k == N - 1) s.phi = s1.phi;
    try {
      (void)hessian_fields(*s.model, s.phi);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NotPositiveDefinite)
        throw Error(ErrorCode::LeavesCone, "metric degenerates at t = " + std::to_string(t), e.node());
      throw;
    }
    p.t.push_back(t);
    p.states.push_back(std::move(s));
  }
  return p;
}

// m_t with m_tt = 0 at fixed moment coordinates, endpoint values exact.
inline GeodesicPath bundle_geodesic(GeodesicPath path, const std::vector<double>& m0, const std::vector<double>& m1) {
  const int N = int(path.states.size());
  for (int k = 0; k < N; ++k) {
    const double t = path.t[k];
    auto& m = path.states[k].m;
    if (m0.size() != m.size() || m1.size() != m.size()) throw Error(ErrorCode::ShapeMismatch, "bundle endpoints");
    for (std::size_t j = 0; j < m.size(); ++j) m[j] = (1 - t) * m0[j] + t * m1[j];
    if (k == 0) m = m0;
    if (k == N - 1) m = m1;
  }
  return path;
}

inline GeodesicPath coupled_geodesic(const PairState& s0, const PairState& s1, int N) {
  return bundle_geodesic(metric_geodesic(s0, s1, N), s0.m, s1.m);
}

struct ConvexityReport {
  KEnergyPath energy;
  double min_second_difference = 0;  // of the cumulative K-energy over one time step
  double range = 0;
  bool pass = false;
  double slope_fd = 0;      // dM/dt at t = 0 from the cumulative values
  double slope_direct = 0;  // first variation at the start point
};

inline ConvexityReport convexity_report(const GeodesicPath& path, const Coupling& a, const TopoConstants& tc) {
  ConvexityReport rep;
  const int N = int(path.states.size());
  if (N < 3) throw Error(ErrorCode::PathTooCoarse, "need at least three samples");
  rep.energy = k_energy_path(path.states, a, tc);
  const auto& M = rep.energy.M;
  double lo = M[0], hi = M[0];
  for (double v : M) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  rep.range = hi - lo;
  rep.min_second_difference = INFINITY;
  for (int k = 1; k + 1 < N; ++k) rep.min_second_difference = std::min(rep.min_second_difference, rep.energy.d2M[k]);
  rep.pass = rep.min_second_difference >= -1e-6 * (rep.range + 1);

  const double dt = path.t[1] - path.t[0];
  rep.slope_fd = (-3 * M[0] + 4 * M[1] - M[2]) / (2 * dt);
  const auto& s0 = path.states.front();
  const auto& s1 = path.states.back();
  std::vector<double> ud(s0.size()), md(s0.size());
  for (std::size_t j = 0; j < s0.size(); ++j) {
    ud[j] = s1.phi[j] - s0.phi[j];
    md[j] = s1.m[j] - s0.m[j];
  }
  rep.slope_direct = k_energy_rate(s0, a, tc, ud, md);
  return rep;
}

}  // namespace kym
