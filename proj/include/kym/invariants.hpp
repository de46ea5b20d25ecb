#pragma once

// Futaki character, Calabi-Yang-Mills functional and K-energy along paths.

#include <cmath>
#include <vector>

#include "errors.hpp"
#include "system.hpp"

namespace kym {

// Torus generator a with Hamiltonian phi_zeta = <a, x> + b and lift constant
// kappa.  The lift potential is theta = kappa - <sigma, a>.
struct ToricVectorField {
  Vec2d a{};
  double b = 0;
  double kappa = 0;

  double hamiltonian(const Vec2d& x) const { return a.x * x.x + a.y * x.y + b; }

  // b makes the Hamiltonian integrate to zero; kappa makes the lift potential
  // of the reference section integrate to zero.
  static ToricVectorField normalized(const ToricModel& M, const BundleData& bd, Vec2d a) {
    const Grid& G = M.grid();
    std::vector<double> ax(G.size()), sa(G.size());
    for (int k = 0; k < int(G.size()); ++k) {
      ax[k] = a.x * G.x(k).x + a.y * G.x(k).y;
      sa[k] = a.x * bd.sigma_ref(k).x + a.y * bd.sigma_ref(k).y;
    }
    const double vol = integrate(std::vector<double>(G.size(), 1.0), G);
    return {a, -integrate(ax, G) / vol, integrate(sa, G) / vol};
  }
};

inline double futaki(const StateFields<double>& f, const Grid& G, const Coupling& a, const TopoConstants& tc,
                     const ToricVectorField& zeta) {
  const auto sa = s_alpha_field(f, a, tc);
  std::vector<double> lift(G.size()), ham(G.size());
  for (int k = 0; k < int(G.size()); ++k) {
    const auto& s = f.gauge.sigma[k];
    const double theta = zeta.kappa - (s.x * zeta.a.x + s.y * zeta.a.y);
    lift[k] = theta * (f.gauge.tr[k] - tc.z);
    ham[k] = zeta.hamiltonian(G.x(k)) * sa[k];
  }
  return -4 * a.alpha1 * integrate(lift, G) - integrate(ham, G);
}

inline double futaki(const PairState& s, const Coupling& a, const TopoConstants& tc, const ToricVectorField& zeta) {
  return futaki(evaluate_fields(s), s.grid(), a, tc, zeta);
}

inline bool same_class(const PairState& s1, const PairState& s2) {
  if (s1.model == s2.model && s1.bundle == s2.bundle) return true;
  const auto& G1 = s1.grid();
  const auto& G2 = s2.grid();
  if (G1.size() != G2.size() || G1.hx() != G2.hx() || G1.hy() != G2.hy()) return false;
  const auto& F1 = s1.model->polytope().facets();
  const auto& F2 = s2.model->polytope().facets();
  if (F1.size() != F2.size()) return false;
  for (std::size_t i = 0; i < F1.size(); ++i)
    if (F1[i].normal != F2[i].normal || F1[i].offset != F2[i].offset) return false;
  return s1.bundle->labels() == s2.bundle->labels();
}

inline double base_point_independence(const PairState& s1, const PairState& s2, const Coupling& a,
                                      const ToricVectorField& zeta) {
  if (!same_class(s1, s2)) throw Error(ErrorCode::ClassMismatch, "states live in different classes");
  const auto tc = topo_constants(s1, a);
  return std::abs(futaki(s1, a, tc, zeta) - futaki(s2, a, tc, zeta));
}

// Mean-zero affine function closest to -S_alpha; the toric field it
// generates pairs positively with the character when the state is not a
// solution of the scalar equation.
inline ToricVectorField extremal_field(const PairState& s, const Coupling& a, const TopoConstants& tc) {
  auto sa = s_alpha_field(s, a, tc);
  for (auto& v : sa) v = -v;
  const auto fit = affine_fit(s.grid(), sa);
  return ToricVectorField::normalized(*s.model, *s.bundle, {fit[1], fit[2]});
}

// (1/vol) int (S - alpha |F|^2)^2 + (alpha1/vol) int |F|^2, alpha = 2 alpha1 / alpha0
template <class T>
T cym_from_fields(const StateFields<T>& f, const Grid& G, const Coupling& a) {
  const double alpha = 2 * a.alpha1 / a.alpha0;
  std::vector<double> w(G.size());
  double vol = 0;
  for (int k = 0; k < int(G.size()); ++k) vol += G.weight(k);
  std::vector<T> terms(G.size());
  for (int k = 0; k < int(G.size()); ++k) {
    const T& t = f.gauge.tr[k];
    const T F2 = t * t - 2.0 * f.gauge.det[k];
    const T kk = f.metric.S[k] - alpha * F2;
    terms[k] = kk * kk + a.alpha1 * F2;
    w[k] = G.weight(k) / vol;
  }
  if constexpr (std::is_same_v<T, double>) {
    CompensatedSum s;
    for (int k = 0; k < int(G.size()); ++k) s.add(w[k] * terms[k]);
    return s.value();
  } else {
    return weighted_sum<T>(w, [&](std::size_t k) -> const T& { return terms[k]; });
  }
}

inline double cym_functional(const PairState& s, const Coupling& a) {
  return cym_from_fields(evaluate_fields(s), s.grid(), a);
}

// Right-hand side of the constraint under which solutions minimize the
// functional: alpha1 > 2 alpha S_hat + alpha^2 (c_hat - z^2).
inline bool minimality_condition(const Coupling& a, const TopoConstants& tc) {
  const double alpha = 2 * a.alpha1 / a.alpha0;
  return a.alpha1 > 2 * alpha * tc.S_hat + alpha * alpha * (tc.c_hat - tc.z * tc.z);
}

// First variation of the K-energy at a state in direction (udot, mdot):
//
//   4 alpha1 int xi (tr B - z) + int phi S_alpha,
//   phi = -(udot - mean udot),  xi = <sigma, grad udot> - mdot.
inline double k_energy_rate(const StateFields<double>& f, const Grid& G, const Coupling& a, const TopoConstants& tc,
                            const std::vector<double>& udot, const std::vector<double>& mdot) {
  const auto sa = s_alpha_field(f, a, tc);
  const double vol = integrate(std::vector<double>(G.size(), 1.0), G);
  const double mean = integrate(udot, G) / vol;
  std::vector<double> t1(G.size()), t2(G.size());
  for (int k = 0; k < int(G.size()); ++k) {
    const Vec2d g = G.gradient(udot, k);
    const auto& s = f.gauge.sigma[k];
    const double xi = s.x * g.x + s.y * g.y - mdot[k];
    t1[k] = xi * (f.gauge.tr[k] - tc.z);
    t2[k] = -(udot[k] - mean) * sa[k];
  }
  return 4 * a.alpha1 * integrate(t1, G) + integrate(t2, G);
}

inline double k_energy_rate(const PairState& s, const Coupling& a, const TopoConstants& tc,
                            const std::vector<double>& udot, const std::vector<double>& mdot) {
  return k_energy_rate(evaluate_fields(s), s.grid(), a, tc, udot, mdot);
}

struct KEnergyPath {
  std::vector<double> t;
  std::vector<double> M;    // cumulative K-energy, M[0] = 0
  std::vector<double> dM;   // rate at each sample
  std::vector<double> d2M;  // centered second difference M[k+1] - 2 M[k] + M[k-1] (ends: NaN)
};

// Velocities by second-order differences in time, trapezoid rule for the
// integral.  Uniform time grid on [0, 1].
inline KEnergyPath k_energy_path(const std::vector<PairState>& states, const Coupling& a, const TopoConstants& tc) {
  const int N = int(states.size());
  if (N < 3) throw Error(ErrorCode::PathTooCoarse, "need at least three samples");
  for (const auto& s : states)
    if (!same_class(s, states[0])) throw Error(ErrorCode::ClassMismatch, "path leaves the class");
  const double dt = 1.0 / (N - 1);
  const std::size_t n = states[0].size();

  auto velocity = [&](int k, const std::vector<double> PairState::*field) {
    std::vector<double> v(n);
    for (std::size_t j = 0; j < n; ++j) {
      auto at = [&](int i) { return (states[i].*field)[j]; };
      if (k == 0)
        v[j] = (-3 * at(0) + 4 * at(1) - at(2)) / (2 * dt);
      else if (k == N - 1)
        v[j] = (3 * at(N - 1) - 4 * at(N - 2) + at(N - 3)) / (2 * dt);
      else
        v[j] = (at(k + 1) - at(k - 1)) / (2 * dt);
    }
    return v;
  };

  // resolution check: second differences must not dominate first differences
  for (int k = 1; k + 1 < N; ++k) {
    double d1 = 0, d2 = 0;
    for (std::size_t j = 0; j < n; ++j) {
      for (auto field : {&PairState::phi, &PairState::m}) {
        const double p = (states[k + 1].*field)[j], c = (states[k].*field)[j], q = (states[k - 1].*field)[j];
        d1 = std::max(d1, std::abs(p - q));
        d2 = std::max(d2, std::abs(p - 2 * c + q));
      }
    }
    if (d2 > d1 && d2 > 1e-12) throw Error(ErrorCode::PathTooCoarse, "time steps do not resolve the path");
  }

  KEnergyPath out;
  for (int k = 0; k < N; ++k) {
    out.t.push_back(k * dt);
    out.dM.push_back(k_energy_rate(states[k], a, tc, velocity(k, &PairState::phi), velocity(k, &PairState::m)));
  }
  out.M.assign(N, 0.0);
  for (int k = 1; k < N; ++k) out.M[k] = out.M[k - 1] + 0.5 * dt * (out.dM[k - 1] + out.dM[k]);
  out.d2M.assign(N, std::nan(""));
  for (int k = 1; k + 1 < N; ++k) out.d2M[k] = out.M[k + 1] - 2 * out.M[k] + out.M[k - 1];
  return out;
}

}  // namespace kym
