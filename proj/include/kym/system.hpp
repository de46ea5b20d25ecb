#pragma once

// The coupled system on a toric surface in reduced form:
//
//   tr B = z,     alpha0 S + alpha1 4 det B = c,
//
// with the topological constants computed from the state.

#include <algorithm>
#include <cmath>
#include <memory>
#include <vector>

#include "errors.hpp"
#include "gauge.hpp"
#include "polytope.hpp"
#include "toric.hpp"

namespace kym {

struct Coupling {
  double alpha0 = 1.0;
  double alpha1 = 0.0;
};

struct TopoConstants {
  double z = 0, S_hat = 0, c_hat = 0, c = 0, vol = 0;
};

// (u, H) in reduced coordinates: the smooth corrections phi and m on a shared grid.
struct PairState {
  std::shared_ptr<const ToricModel> model;
  std::shared_ptr<const BundleData> bundle;
  std::vector<double> phi;
  std::vector<double> m;
  // class scale relative to the model the run started from
  double scale_a = 1.0, scale_b = 1.0;

  static PairState reference(std::shared_ptr<const ToricModel> M, std::shared_ptr<const BundleData> B) {
    PairState s;
    const std::size_t n = M->size();
    s.model = std::move(M);
    s.bundle = std::move(B);
    s.phi.assign(n, 0.0);
    s.m.assign(n, 0.0);
    return s;
  }

  const Grid& grid() const { return model->grid(); }
  std::size_t size() const { return phi.size(); }
};

template <class T>
struct StateFields {
  MetricFields<T> metric;
  GaugeFields<T> gauge;
};

template <class T>
StateFields<T> evaluate_fields(const ToricModel& M, const BundleData& bd, const std::vector<T>& phi,
                               const std::vector<T>& m) {
  StateFields<T> f;
  f.metric = metric_fields(M, phi);
  f.gauge = curvature_matrix(M.grid(), bd, f.metric, m);
  return f;
}

inline StateFields<double> evaluate_fields(const PairState& s) {
  return evaluate_fields<double>(*s.model, *s.bundle, s.phi, s.m);
}

inline TopoConstants topo_constants(const ToricModel& M, const BundleData& bd, const StateFields<double>& f,
                                    const Coupling& a) {
  TopoConstants tc;
  tc.vol = M.volume();
  tc.z = boundary_flux(M.polytope(), bd.facet_traces()) / tc.vol;
  tc.S_hat = integrate(f.metric.S, M.grid()) / tc.vol;
  tc.c_hat = integrate(topform_FF(f.gauge), M.grid()) / (2 * tc.vol);
  tc.c = a.alpha0 * tc.S_hat + 2 * a.alpha1 * tc.c_hat;
  return tc;
}

inline TopoConstants topo_constants(const PairState& s, const Coupling& a) {
  return topo_constants(*s.model, *s.bundle, evaluate_fields(s), a);
}

template <class T>
struct Residual {
  std::vector<T> hym;     // tr B - z
  std::vector<T> scalar;  // alpha0 S + 4 alpha1 det B - c
};

template <class T>
Residual<T> residual_from_fields(const StateFields<T>& f, const Coupling& a, const TopoConstants& tc) {
  Residual<T> r;
  const std::size_t n = f.gauge.tr.size();
  r.hym.resize(n);
  r.scalar.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    r.hym[k] = f.gauge.tr[k] - tc.z;
    r.scalar[k] = a.alpha0 * f.metric.S[k] + (4.0 * a.alpha1) * f.gauge.det[k] - tc.c;
  }
  return r;
}

inline Residual<double> residual(const PairState& s, const Coupling& a, const TopoConstants& tc) {
  return residual_from_fields(evaluate_fields(s), a, tc);
}

struct ResidualNorms {
  double hym_linf = 0, hym_l2 = 0, scalar_linf = 0, scalar_l2 = 0;
  double linf() const { return std::max(hym_linf, scalar_linf); }
  double l2() const { return std::hypot(hym_l2, scalar_l2); }
};

// quadrature L2 norm normalized by the volume, and max norm
inline ResidualNorms residual_norms(const Residual<double>& r, const Grid& G) {
  ResidualNorms out;
  double vol = 0;
  for (double w : G.weights()) vol += w;
  auto norms = [&](const std::vector<double>& f, double& linf, double& l2) {
    std::vector<double> sq(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) {
      linf = std::max(linf, std::abs(f[k]));
      sq[k] = f[k] * f[k];
    }
    l2 = std::sqrt(integrate(sq, G) / vol);
  };
  norms(r.hym, out.hym_linf, out.hym_l2);
  norms(r.scalar, out.scalar_linf, out.scalar_l2);
  return out;
}

// 4 det(B - z) = 2 (tr B - 2 z)^2 - 2 |B - z|_g^2 node-wise, with the metric
// norm |M|_g^2 = tr(M H M^T U).  Hess(u) is singular on the boundary, so only
// interior nodes are checked.  Returns the maximum violation.
inline double identity_check(const PairState& s, const TopoConstants& tc) {
  const auto f = evaluate_fields(s);
  const ToricModel& M = *s.model;
  double worst = 0;
  for (int k = 0; k < int(M.size()); ++k) {
    if (M.grid().on_boundary(k)) continue;
    const Sym2d H = hessian_u(M, f.metric, k);
    Mat2d A = f.gauge.B[k];
    A(0, 0) -= tc.z;
    A(1, 1) -= tc.z;
    const Mat2d norm2 = A * to_mat(H) * transpose(A) * to_mat(f.metric.U[k]);
    const double lhs = 4 * det(A);
    const double t = trace(f.gauge.B[k]) - 2 * tc.z;
    const double rhs = 2 * t * t - 2 * trace(norm2);
    worst = std::max(worst, std::abs(lhs - rhs));
  }
  return worst;
}

// S_alpha = -alpha0 S - alpha1 4 det(B - z)
inline std::vector<double> s_alpha_field(const StateFields<double>& f, const Coupling& a, const TopoConstants& tc) {
  std::vector<double> out(f.metric.S.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    // det(B - z) = det B - z tr B + z^2
    const double d = f.gauge.det[k] - tc.z * f.gauge.tr[k] + tc.z * tc.z;
    out[k] = -a.alpha0 * f.metric.S[k] - 4 * a.alpha1 * d;
  }
  return out;
}

inline std::vector<double> s_alpha_field(const PairState& s, const Coupling& a, const TopoConstants& tc) {
  return s_alpha_field(evaluate_fields(s), a, tc);
}

// Weighted least-squares fit of a nodal field by c0 + c1 x + c2 y.
inline std::array<double, 3> affine_fit(const Grid& G, const std::vector<double>& f) {
  double A[3][3] = {}, b[3] = {};
  for (int k = 0; k < int(G.size()); ++k) {
    const double w = G.weight(k);
    const double p[3] = {1.0, G.x(k).x, G.x(k).y};
    for (int i = 0; i < 3; ++i) {
      b[i] += w * p[i] * f[k];
      for (int j = 0; j < 3; ++j) A[i][j] += w * p[i] * p[j];
    }
  }
  // Cramer on the 3x3 normal equations
  auto det3 = [](double m[3][3]) {
    return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
           m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  };
  const double D = det3(A);
  std::array<double, 3> c{};
  for (int col = 0; col < 3; ++col) {
    double m[3][3];
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m[i][j] = (j == col) ? b[i] : A[i][j];
    c[col] = det3(m) / D;
  }
  return c;
}

struct ExtremalResidual {
  std::vector<Vec2d> first;    // 4 alpha1 grad(tr B) + B grad(S_alpha)
  std::vector<double> second;  // S_alpha minus its affine fit
};

inline ExtremalResidual extremal_residual(const Grid& G, const std::vector<Mat2d>& B, const std::vector<double>& trB,
                                          const std::vector<double>& s_alpha, const Coupling& a) {
  ExtremalResidual r;
  const auto fit = affine_fit(G, s_alpha);
  for (int k = 0; k < int(G.size()); ++k) {
    const Vec2d dt = G.gradient(trB, k);
    const Vec2d ds = G.gradient(s_alpha, k);
    const Mat2d& b = B[k];
    r.first.push_back({4 * a.alpha1 * dt.x + b(0, 0) * ds.x + b(0, 1) * ds.y,
                       4 * a.alpha1 * dt.y + b(1, 0) * ds.x + b(1, 1) * ds.y});
    r.second.push_back(s_alpha[k] - (fit[0] + fit[1] * G.x(k).x + fit[2] * G.x(k).y));
  }
  return r;
}

inline ExtremalResidual extremal_residual(const PairState& s, const Coupling& a, const TopoConstants& tc) {
  const auto f = evaluate_fields(s);
  return extremal_residual(s.grid(), f.gauge.B, f.gauge.tr, s_alpha_field(f, a, tc), a);
}

}  // namespace kym
