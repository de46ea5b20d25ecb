#pragma once

// Jacobian of the discrete residual and the symmetric operator built from it.
//
// Unknowns are stacked as (phi, m), residual rows as (scalar, hym).  The
// Jacobian is exact: the residual pipeline is evaluated once with SparseDual
// scalars seeded on every unknown.

#include <Eigen/Sparse>
#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "ad.hpp"
#include "errors.hpp"
#include "invariants.hpp"
#include "system.hpp"

namespace kym {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

struct TangentVector {
  std::vector<double> phi;
  std::vector<double> m;
};

struct LinearOperator {
  SpMat matrix;
  Vec weights;  // quadrature masses, repeated for both blocks
  std::string method = "forward-mode sparse automatic differentiation";
};

inline Vec stacked_weights(const Grid& G) {
  const int n = int(G.size());
  Vec w(2 * n);
  for (int k = 0; k < n; ++k) w[k] = w[n + k] = G.weight(k);
  return w;
}

inline Vec stack(const std::vector<double>& a, const std::vector<double>& b) {
  Vec v(a.size() + b.size());
  for (std::size_t k = 0; k < a.size(); ++k) v[k] = a[k];
  for (std::size_t k = 0; k < b.size(); ++k) v[a.size() + k] = b[k];
  return v;
}

inline Vec stack(const Residual<double>& r) { return stack(r.scalar, r.hym); }

template <class T>
Residual<T> residual_of(const ToricModel& M, const BundleData& bd, const std::vector<T>& phi,
                        const std::vector<T>& m, const Coupling& a, const TopoConstants& tc) {
  return residual_from_fields(evaluate_fields(M, bd, phi, m), a, tc);
}

// Seeded evaluation; returns fields in SparseDual for reuse.
inline StateFields<SparseDual> dual_fields(const PairState& s) {
  const int n = int(s.size());
  std::vector<SparseDual> phi(n), m(n);
  for (int k = 0; k < n; ++k) {
    phi[k] = SparseDual::variable(s.phi[k], k);
    m[k] = SparseDual::variable(s.m[k], n + k);
  }
  return evaluate_fields(*s.model, *s.bundle, phi, m);
}

inline SpMat jacobian_from(const Residual<SparseDual>& r, int n) {
  std::vector<Eigen::Triplet<double>> trip;
  auto rows = [&](const std::vector<SparseDual>& f, int offset) {
    for (int k = 0; k < n; ++k)
      for (const auto& e : f[k].derivative())
        if (e.value != 0.0) trip.emplace_back(offset + k, e.index, e.value);
  };
  rows(r.scalar, 0);
  rows(r.hym, n);
  SpMat J(2 * n, 2 * n);
  J.setFromTriplets(trip.begin(), trip.end());
  return J;
}

inline LinearOperator assemble_jacobian(const PairState& s, const Coupling& a, const TopoConstants& tc) {
  const int n = int(s.size());
  const auto f = dual_fields(s);
  LinearOperator op;
  op.matrix = jacobian_from(residual_from_fields(f, a, tc), n);
  op.weights = stacked_weights(s.grid());
  return op;
}

inline double weighted_norm(const Vec& v, const Vec& w) { return std::sqrt((v.array().square() * w.array()).sum()); }

// max over eps of |(r(s + eps v) - r(s))/eps - J v| / |J v| in the weighted norm
struct FdSweep {
  std::vector<double> eps;
  std::vector<double> ratio;
};

inline FdSweep fd_consistency(const PairState& s, const Coupling& a, const TopoConstants& tc, const TangentVector& v,
                              std::vector<double> eps = {1e-3, 1e-4, 1e-5}) {
  const auto J = assemble_jacobian(s, a, tc);
  const Vec dv = stack(v.phi, v.m);
  const Vec Jv = J.matrix * dv;
  const Vec r0 = stack(residual(s, a, tc));
  const double nJv = weighted_norm(Jv, J.weights);
  FdSweep out;
  for (double e : eps) {
    PairState t = s;
    for (std::size_t k = 0; k < s.size(); ++k) {
      t.phi[k] += e * v.phi[k];
      t.m[k] += e * v.m[k];
    }
    const Vec r1 = stack(residual(t, a, tc));
    const Vec diff = (r1 - r0) / e - Jv;
    out.eps.push_back(e);
    out.ratio.push_back(nJv > 0 ? weighted_norm(diff, J.weights) / nJv : weighted_norm(diff, J.weights));
  }
  return out;
}

// The symmetric form of the linearization.  With metric direction udot and
// gauge direction g, the bundle-potential variation is
// mdot = g + <sigma, grad udot>.  Rows are repackaged as
// (delta S_alpha, 4 alpha1 delta(tr B)).  The result is
//
//   Lsym = -P J T,   T = [[1, 0], [G, 1]],  P = [[-1, 4 alpha1 z], [0, 4 alpha1]],
//
// acting on (udot, g); G applies <sigma, grad .> node-wise.
inline SpMat symmetric_operator(const PairState& s, const Coupling& a, const TopoConstants& tc, const SpMat& J) {
  const int n = int(s.size());
  const auto f = evaluate_fields(s);
  const Grid& G = s.grid();
  std::vector<Eigen::Triplet<double>> tT, tP;
  for (int k = 0; k < n; ++k) {
    tT.emplace_back(k, k, 1.0);
    tT.emplace_back(n + k, n + k, 1.0);
    const auto nodes = G.grad().nodes(k);
    const auto wx = G.grad().weights(k, 0), wy = G.grad().weights(k, 1);
    const auto& sg = f.gauge.sigma[k];
    for (std::size_t j = 0; j < nodes.size(); ++j) tT.emplace_back(n + k, nodes[j], sg.x * wx[j] + sg.y * wy[j]);
    tP.emplace_back(k, k, -1.0);
    tP.emplace_back(k, n + k, 4 * a.alpha1 * tc.z);
    tP.emplace_back(n + k, n + k, 4 * a.alpha1);
  }
  SpMat T(2 * n, 2 * n), P(2 * n, 2 * n);
  T.setFromTriplets(tT.begin(), tT.end());
  P.setFromTriplets(tP.begin(), tP.end());
  SpMat L = -(P * (J * T));
  L.prune(0.0);
  return L;
}

// Smooth test directions on the polygon: products of low cosines in the
// bounding-box coordinates, the same family in both blocks.
inline std::vector<TangentVector> smooth_test_vectors(const Grid& G, int modes = 2) {
  const auto lo = G.origin();
  const double W = G.nx() * G.hx(), H = G.ny() * G.hy();
  std::vector<TangentVector> out;
  for (int block = 0; block < 2; ++block)
    for (int p = 0; p <= modes; ++p)
      for (int q = 0; q <= modes; ++q) {
        if (p + q == 0) continue;
        TangentVector v;
        v.phi.assign(G.size(), 0.0);
        v.m.assign(G.size(), 0.0);
        for (int k = 0; k < int(G.size()); ++k) {
          const double X = (G.x(k).x - lo.x) / W, Y = (G.x(k).y - lo.y) / H;
          const double val = std::cos(M_PI * p * X) * std::cos(M_PI * q * Y);
          (block == 0 ? v.phi : v.m)[k] = val;
        }
        out.push_back(std::move(v));
      }
  return out;
}

// Weak-form asymmetry of Lsym: for test fields a, b drawn from the smooth
// family of one block each, compare <a, L b> with <L a, b>.  Each block pair
// is normalized by its own largest pairing, so the small coupling blocks are
// not swamped by the fourth-order metric block.  Testing against smooth
// fields keeps the one-sided boundary rows from dominating the measure.
inline double operator_asymmetry(const SpMat& L, const Grid& G) {
  const Vec w = stacked_weights(G);
  const auto tv = smooth_test_vectors(G);
  const int half = int(tv.size()) / 2;  // first half phi block, second half m block
  std::vector<Vec> v, Lv;
  for (const auto& t : tv) {
    v.push_back(stack(t.phi, t.m));
    Lv.push_back(L * v.back());
  }
  double worst = 0;
  for (int bi = 0; bi < 2; ++bi)
    for (int bj = bi; bj < 2; ++bj) {
      double num = 0, den = 0;
      for (int i = bi * half; i < (bi + 1) * half; ++i)
        for (int j = bj * half; j < (bj + 1) * half; ++j) {
          const double ab = (v[i].array() * Lv[j].array() * w.array()).sum();
          const double ba = (Lv[i].array() * v[j].array() * w.array()).sum();
          num = std::max(num, std::abs(ab - ba));
          den = std::max({den, std::abs(ab), std::abs(ba)});
        }
      if (den > 0) worst = std::max(worst, num / den);
    }
  return worst;
}

inline double adjoint_asymmetry_unchecked(const PairState& s, const Coupling& a, const TopoConstants& tc) {
  const auto J = assemble_jacobian(s, a, tc);
  return operator_asymmetry(symmetric_operator(s, a, tc, J.matrix), s.grid());
}

inline double adjoint_check(const PairState& s, const Coupling& a, double hym_threshold = 1e-6) {
  const auto tc = topo_constants(s, a);
  const auto r = residual(s, a, tc);
  const auto nr = residual_norms(r, s.grid());
  if (nr.hym_linf > hym_threshold)
    throw Error(ErrorCode::NotAtHYM, "|tr B - z| = " + std::to_string(nr.hym_linf) + " exceeds threshold");
  return adjoint_asymmetry_unchecked(s, a, tc);
}

inline void write_matrix(std::ostream& out, const SpMat& A) {
  out.precision(17);
  out << "# rows " << A.rows() << " cols " << A.cols() << " nnz " << A.nonZeros() << "\n";
  for (int c = 0; c < A.outerSize(); ++c)
    for (SpMat::InnerIterator it(A, c); it; ++it) out << it.row() << " " << it.col() << " " << it.value() << "\n";
}

// Projection onto the W-orthogonal complement of {1, x, y} in the first block
// and {1} in the second.
inline Vec project_kernel(const Vec& v, const Grid& G) {
  const int n = int(G.size());
  Vec out = v;
  std::vector<std::vector<double>> basis;
  {
    std::vector<double> one(n, 1.0), x(n), y(n);
    for (int k = 0; k < n; ++k) {
      x[k] = G.x(k).x;
      y[k] = G.x(k).y;
    }
    basis = {one, x, y};
  }
  // Gram-Schmidt in the weighted inner product
  std::vector<std::vector<double>> q;
  for (auto b : basis) {
    for (const auto& e : q) {
      double d = 0;
      for (int k = 0; k < n; ++k) d += G.weight(k) * b[k] * e[k];
      for (int k = 0; k < n; ++k) b[k] -= d * e[k];
    }
    double nn = 0;
    for (int k = 0; k < n; ++k) nn += G.weight(k) * b[k] * b[k];
    nn = std::sqrt(nn);
    for (auto& x : b) x /= nn;
    q.push_back(b);
  }
  for (const auto& e : q) {
    double d = 0;
    for (int k = 0; k < n; ++k) d += G.weight(k) * out[k] * e[k];
    for (int k = 0; k < n; ++k) out[k] -= d * e[k];
  }
  double vol = 0, mean = 0;
  for (int k = 0; k < n; ++k) {
    vol += G.weight(k);
    mean += G.weight(k) * out[n + k];
  }
  for (int k = 0; k < n; ++k) out[n + k] -= mean / vol;
  return out;
}

// <v, Lsym v> / |v|^2 minimized over the smooth test family, after removing
// the kernel components (affine udot, constant g).
inline double min_rayleigh_quotient(const SpMat& L, const Grid& G) {
  const Vec w = stacked_weights(G);
  double best = INFINITY;
  for (const auto& t : smooth_test_vectors(G)) {
    const Vec v = project_kernel(stack(t.phi, t.m), G);
    const double nv = weighted_norm(v, w);
    if (nv < 1e-12) continue;
    const Vec Lv = L * v;
    best = std::min(best, (v.array() * Lv.array() * w.array()).sum() / (nv * nv));
  }
  return best;
}

}  // namespace kym
