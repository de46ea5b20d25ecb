#pragma once

// Torus-invariant Kahler metrics in symplectic (action-angle) coordinates.
//
// u = u_ref + phi with u_ref = sum_i l_i log l_i.  The singular part is never
// differenced: with L = prod l_i, N = sum_i nu_i^perp nu_i^perp^T prod_{k!=i} l_k
// and Q = sum_{i<j} det(nu_i, nu_j)^2 prod_{k!=i,j} l_k one has
//
//   U = Hess(u)^{-1} = (N + L adj(Hphi)) / (Q + L det(Hphi) + tr(N Hphi)),
//
// a ratio of smooth functions that stays finite up to the boundary.

#include <cmath>
#include <memory>
#include <span>
#include <vector>

#include "ad.hpp"
#include "errors.hpp"
#include "polytope.hpp"
#include "small.hpp"

namespace kym {

// Closed-form reference data at a point, in jets so derivatives are exact.
struct ReferenceJets {
  Jet2 L, Q;
  Sym2<Jet2> N;
};

inline ReferenceJets reference_jets(const Polytope& P, double x, double y) {
  const auto& F = P.facets();
  const int k = int(F.size());
  std::vector<Jet2> l(k);
  for (int i = 0; i < k; ++i) l[i] = Jet2::linear(F[i].eval(x, y), F[i].normal[0], F[i].normal[1]);
  auto prod_except = [&](int a, int b) {
    Jet2 p(1.0);
    for (int i = 0; i < k; ++i)
      if (i != a && i != b) p *= l[i];
    return p;
  };
  ReferenceJets r;
  r.L = prod_except(-1, -1);
  for (int i = 0; i < k; ++i) {
    const double px = F[i].normal[1], py = -F[i].normal[0];
    const Jet2 p = prod_except(i, -1);
    r.N.xx += p * Jet2(px * px);
    r.N.xy += p * Jet2(px * py);
    r.N.yy += p * Jet2(py * py);
  }
  for (int i = 0; i < k; ++i)
    for (int j = i + 1; j < k; ++j) {
      const double d = F[i].normal[0] * F[j].normal[1] - F[i].normal[1] * F[j].normal[0];
      r.Q += Jet2(d * d) * prod_except(i, j);
    }
  return r;
}

// Reference potential u_ref = sum l_i log l_i at an interior point, with jets.
inline Jet2 reference_potential(const Polytope& P, double x, double y) {
  Jet2 u;
  for (const auto& f : P.facets()) {
    const double l = f.eval(x, y);
    const double a = f.normal[0], b = f.normal[1];
    // l log l: first derivative (log l + 1) nu, second nu nu^T / l
    u += Jet2(l * std::log(l), (std::log(l) + 1) * a, (std::log(l) + 1) * b, a * a / l, a * b / l, b * b / l);
  }
  return u;
}

// Polygon + lattice + reference fields evaluated once per grid.
class ToricModel {
 public:
  ToricModel(Polytope P, Grid G) : P_(std::move(P)), G_(std::move(G)) {
    const std::size_t n = G_.size();
    L_.resize(n);
    Q_.resize(n);
    N_.resize(n);
    Uref_.resize(n);
    Sref_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& x = G_.x(int(k));
      const ReferenceJets r = reference_jets(P_, x.x, x.y);
      L_[k] = r.L.v;
      Q_[k] = r.Q.v;
      N_[k] = {r.N.xx.v, r.N.xy.v, r.N.yy.v};
      const Jet2 uxx = r.N.xx / r.Q, uxy = r.N.xy / r.Q, uyy = r.N.yy / r.Q;
      Uref_[k] = {uxx.v, uxy.v, uyy.v};
      // Abreu: S = -d_j d_k U^{jk}
      Sref_[k] = -(uxx.hxx + 2 * uxy.hxy + uyy.hyy);
    }
    vol_ = P_.area();
  }

  static std::shared_ptr<const ToricModel> make(const Polytope& P, double h) {
    return std::make_shared<const ToricModel>(P, Grid::build(P, h));
  }

  const Polytope& polytope() const { return P_; }
  const Grid& grid() const { return G_; }
  std::size_t size() const { return G_.size(); }
  double volume() const { return vol_; }

  double L(int n) const { return L_[n]; }
  double Q(int n) const { return Q_[n]; }
  const Sym2d& N(int n) const { return N_[n]; }
  const Sym2d& U_ref(int n) const { return Uref_[n]; }
  double S_ref(int n) const { return Sref_[n]; }

 private:
  Polytope P_;
  Grid G_;
  std::vector<double> L_, Q_;
  std::vector<Sym2d> N_, Uref_;
  std::vector<double> Sref_;
  double vol_ = 0;
};

// u = u_ref + phi; only phi lives on the grid.
struct SymplecticPotential {
  std::vector<double> phi;
};

template <class T>
struct MetricFields {
  std::vector<Sym2<T>> Hphi;               // Hessian of the smooth correction
  std::vector<Sym2<T>> U;                  // inverse Hessian of u
  std::vector<std::array<Sym2<T>, 2>> dU;  // d_k U, k = 0, 1
  std::vector<T> S;                        // scalar curvature (filled by abreu_scalar)
};

// Hessian of u at an interior node, H = H_ref + Hphi.
template <class T>
Sym2<T> hessian_u(const ToricModel& M, const MetricFields<T>& mf, int n) {
  const auto& x = M.grid().x(n);
  const Jet2 u = reference_potential(M.polytope(), x.x, x.y);
  return {mf.Hphi[n].xx + u.hxx, mf.Hphi[n].xy + u.hxy, mf.Hphi[n].yy + u.hyy};
}

// Node-wise positivity of Hess(u).  Interior nodes must have smallest
// eigenvalue above 1e-10 * trace; at boundary nodes Hess(u) is infinite in
// the normal direction and only the signs of L det H and L tr H are checked.
inline void check_positive(const ToricModel& M, int n, double LdetH, double LtrH) {
  const double L = M.L(n);
  // at a vertex U vanishes, so L tr H = 0 is allowed there
  bool ok = LdetH > 0 && LtrH >= 0;
  if (ok && L > 0) {
    // lambda_min / tr = (tr - sqrt(tr^2 - 4 det)) / (2 tr) with tr, det scaled by L
    const double disc = std::max(0.0, LtrH * LtrH - 4 * L * LdetH);
    // stable form of tr - sqrt(tr^2 - 4 det)
    const double lmin_over_tr = 2 * L * LdetH / (LtrH * (LtrH + std::sqrt(disc)));
    ok = lmin_over_tr > 1e-10;
  }
  if (!ok) throw Error(ErrorCode::NotPositiveDefinite, "Hess(u) is not positive definite at a grid node", n);
}

template <class T>
MetricFields<T> hessian_fields(const ToricModel& M, const std::vector<T>& phi) {
  const Grid& G = M.grid();
  const std::size_t n = G.size();
  if (phi.size() != n) throw Error(ErrorCode::ShapeMismatch, "potential does not match grid");
  MetricFields<T> mf;
  mf.Hphi.resize(n);
  mf.U.resize(n);
  for (int k = 0; k < int(n); ++k) {
    const Sym2<T> hp = G.hessian(phi, k);
    const Sym2d& N = M.N(k);
    const double L = M.L(k);
    // L adj(H), L det(H)
    const T axx = N.xx + L * hp.yy;
    const T axy = N.xy - L * hp.xy;
    const T ayy = N.yy + L * hp.xx;
    const T den = M.Q(k) + L * (hp.xx * hp.yy - hp.xy * hp.xy) + (N.xx * hp.xx + 2.0 * N.xy * hp.xy + N.yy * hp.yy);
    check_positive(M, k, value_of(den), value_of(axx) + value_of(ayy));
    mf.U[k] = {axx / den, axy / den, ayy / den};
    mf.Hphi[k] = hp;
  }
  mf.dU.resize(n);
  for (int k = 0; k < int(n); ++k) {
    const auto gx = G.template gradient_of<T>(k, [&](int m) -> const T& { return mf.U[m].xx; });
    const auto gxy = G.template gradient_of<T>(k, [&](int m) -> const T& { return mf.U[m].xy; });
    const auto gy = G.template gradient_of<T>(k, [&](int m) -> const T& { return mf.U[m].yy; });
    mf.dU[k][0] = {gx.x, gxy.x, gy.x};
    mf.dU[k][1] = {gx.y, gxy.y, gy.y};
  }
  return mf;
}

// S = S_ref - d_j d_k (U - U_ref)^{jk}, the double divergence taken in weak
// form.  U - U_ref has vanishing normal-normal part to second order at the
// facets, so the boundary terms of the two integrations by parts drop out and
// int S psi = int S_ref psi - int (U - U_ref) : Hess psi holds exactly on the
// grid.  With psi affine this pins int S and int S x to their reference values.
template <class T>
const std::vector<T>& abreu_scalar(const ToricModel& M, MetricFields<T>& mf) {
  const Grid& G = M.grid();
  const std::size_t n = G.size();
  mf.S.assign(n, T(0.0));
  const auto& D = G.div2();
  std::vector<double> w;
  std::vector<T> corr;
  for (int k = 0; k < int(n); ++k) {
    const auto nodes = D.nodes(k);
    const auto wxx = D.weights(k, 0), wxy = D.weights(k, 1), wyy = D.weights(k, 2);
    w.clear();
    corr.clear();
    for (std::size_t j = 0; j < nodes.size(); ++j) {
      const int m = nodes[j];
      const Sym2d& R = M.U_ref(m);
      corr.push_back(mf.U[m].xx - R.xx);
      w.push_back(wxx[j]);
      corr.push_back(mf.U[m].xy - R.xy);
      w.push_back(wxy[j]);
      corr.push_back(mf.U[m].yy - R.yy);
      w.push_back(wyy[j]);
    }
    const T div2 = weighted_sum<T>(w, [&](std::size_t j) -> const T& { return corr[j]; });
    mf.S[k] = M.S_ref(k) - div2;
  }
  return mf.S;
}

template <class T>
MetricFields<T> metric_fields(const ToricModel& M, const std::vector<T>& phi) {
  MetricFields<T> mf = hessian_fields(M, phi);
  abreu_scalar(M, mf);
  return mf;
}

// Delta_u m = d_j (U^{jk} d_k m), expanded as (d_j U^{jk}) d_k m + U^{jk} d_j d_k m
// so that the second derivatives use the compact Hessian stencil.
template <class T>
std::vector<T> metric_laplacian(const Grid& G, const MetricFields<T>& mf, const std::vector<T>& m) {
  std::vector<T> out(G.size());
  for (int k = 0; k < int(G.size()); ++k) {
    const Vec2<T> g = G.gradient(m, k);
    const Sym2<T> H = G.hessian(m, k);
    const auto& U = mf.U[k];
    const auto& dU = mf.dU[k];
    // divergence of the rows of U
    const T divx = dU[0].xx + dU[1].xy;
    const T divy = dU[0].xy + dU[1].yy;
    out[k] = divx * g.x + divy * g.y + U.xx * H.xx + 2.0 * U.xy * H.xy + U.yy * H.yy;
  }
  return out;
}

}  // namespace kym
