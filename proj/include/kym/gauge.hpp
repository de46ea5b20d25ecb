#pragma once

// Torus-invariant Hermitian metrics on a line bundle over the toric surface.
//
// The connection is encoded by its moment section sigma (a 2-vector field on
// the polygon) with curvature matrix B_{kj} = d_k sigma_j.  Facet labels c_i
// fix the equivariant line bundle; the reference section is
//
//   sigma_ref = U_ref grad(G_ref),   G_ref = -sum_i c_i log l_i,
//
// whose trace on facet i is <sigma_ref, nu_i> = -c_i.  A bundle potential m
// shifts sigma by U grad(m) and a change of metric u_ref -> u_ref + phi is
// absorbed so that U B stays symmetric:
//
//   sigma = sigma_ref + U (grad m - Hphi sigma_ref).

#include <cmath>
#include <vector>

#include "ad.hpp"
#include "errors.hpp"
#include "polytope.hpp"
#include "small.hpp"
#include "toric.hpp"

namespace kym {

class BundleData {
 public:
  BundleData() = default;

  BundleData(const ToricModel& M, std::vector<int> labels) : labels_(std::move(labels)) {
    const Polytope& P = M.polytope();
    if (labels_.size() != P.num_facets()) throw Error(ErrorCode::ShapeMismatch, "one bundle label per facet expected");
    const std::size_t n = M.size();
    sigma_.resize(n);
    B_.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const auto& x = M.grid().x(int(k));
      const auto [sx, sy] = reference_section(P, labels_, x.x, x.y);
      sigma_[k] = {sx.v, sy.v};
      B_[k](0, 0) = sx.gx;
      B_[k](1, 0) = sx.gy;
      B_[k](0, 1) = sy.gx;
      B_[k](1, 1) = sy.gy;
    }
    cache_cell_areas(M.grid());
  }

  static BundleData trivial(const ToricModel& M) {
    return BundleData(M, std::vector<int>(M.polytope().num_facets(), 0));
  }

  // Arbitrary reference section (used by flat test harnesses).
  static BundleData custom(const Grid& G, std::vector<Vec2d> sigma, std::vector<Mat2d> B) {
    BundleData b;
    b.sigma_ = std::move(sigma);
    b.B_ = std::move(B);
    b.cache_cell_areas(G);
    return b;
  }

  // named-model degrees: labels on the facets that do not pass through the origin
  static std::vector<int> labels_from_degrees(const Polytope& P, const std::vector<int>& degrees) {
    std::vector<int> labels(P.num_facets(), 0);
    std::vector<int> slots;
    for (std::size_t i = 0; i < P.num_facets(); ++i)
      if (P.facets()[i].offset != 0.0) slots.push_back(int(i));
    if (degrees.size() != slots.size())
      throw Error(ErrorCode::InvalidConfig, "expected " + std::to_string(slots.size()) + " bundle degrees for " +
                                                P.name());
    for (std::size_t k = 0; k < slots.size(); ++k) labels[slots[k]] = degrees[k];
    return labels;
  }

  const std::vector<int>& labels() const { return labels_; }
  bool is_trivial() const {
    for (int c : labels_)
      if (c != 0) return false;
    for (const auto& s : sigma_)
      if (s.x != 0.0 || s.y != 0.0) return false;
    return true;
  }
  const Vec2d& sigma_ref(int n) const { return sigma_[n]; }
  const Mat2d& B_ref(int n) const { return B_[n]; }
  // area swept by sigma_ref over element c
  double cell_area(std::size_t c) const { return area_[c]; }
  std::size_t size() const { return sigma_.size(); }

  // <sigma, nu_i> on facet i; independent of the smooth corrections
  std::vector<std::optional<double>> facet_traces() const {
    std::vector<std::optional<double>> t;
    for (int c : labels_) t.push_back(-double(c));
    return t;
  }

  // sigma_ref with jets: -sum_i c_i N nu_i / (l_i Q)
  static Vec2<Jet2> reference_section(const Polytope& P, const std::vector<int>& c, double x, double y) {
    const auto& F = P.facets();
    const int k = int(F.size());
    std::vector<Jet2> l(k);
    for (int i = 0; i < k; ++i) l[i] = Jet2::linear(F[i].eval(x, y), F[i].normal[0], F[i].normal[1]);
    const ReferenceJets r = reference_jets(P, x, y);
    Vec2<Jet2> num;
    for (int i = 0; i < k; ++i) {
      if (c[i] == 0) continue;
      // N nu_i / l_i = sum_{j != i} nu_j^perp (nu_j^perp . nu_i) prod_{m != i,j} l_m
      for (int j = 0; j < k; ++j) {
        if (j == i) continue;
        const double px = F[j].normal[1], py = -F[j].normal[0];
        const double dot = px * F[i].normal[0] + py * F[i].normal[1];
        if (dot == 0.0) continue;
        Jet2 p(1.0);
        for (int m = 0; m < k; ++m)
          if (m != i && m != j) p *= l[m];
        num.x -= Jet2(c[i] * dot * px) * p;
        num.y -= Jet2(c[i] * dot * py) * p;
      }
    }
    return {num.x / r.Q, num.y / r.Q};
  }

 private:
  void cache_cell_areas(const Grid& G) {
    area_.clear();
    for (const auto& c : G.cells()) {
      double a = 0;
      for (int i = 0; i < c.corners; ++i) {
        const auto& u = sigma_[c.node[i]];
        const auto& v = sigma_[c.node[(i + 1) % c.corners]];
        a += u.x * v.y - v.x * u.y;
      }
      area_.push_back(0.5 * a);
    }
  }

  std::vector<int> labels_;
  std::vector<Vec2d> sigma_;
  std::vector<Mat2d> B_;
  std::vector<double> area_;
};

// Node-wise B is kept for pointwise algebra (the identity check, U B
// symmetry).  Trace and determinant entering the equations are taken in
// conservative form instead: tr is the weak divergence of sigma - sigma_ref
// over the element mesh, det lumps the signed area swept by sigma over each
// cell.  Facet nodes of sigma slide along fixed lines and vertex values are
// fixed, so int tr B and int det B do not depend on (phi, m) on the grid, as
// they do not in the smooth setting.
template <class T>
struct GaugeFields {
  std::vector<Vec2<T>> sigma;
  std::vector<Mat2<T>> B;  // B(k, j) = d_k sigma_j
  std::vector<T> tr;       // Lambda F
  std::vector<T> det;      // Lambda^2 (F ^ F) / 4
};

namespace detail {

template <class T>
T shoelace(const Grid::Cell& c, const std::vector<Vec2<T>>& p) {
  T a(0.0);
  for (int i = 0; i < c.corners; ++i) {
    const auto& u = p[c.node[i]];
    const auto& v = p[c.node[(i + 1) % c.corners]];
    a += u.x * v.y - v.x * u.y;
  }
  return 0.5 * a;
}

}  // namespace detail

template <class T>
GaugeFields<T> curvature_matrix(const Grid& G, const BundleData& bd, const MetricFields<T>& mf,
                                const std::vector<T>& m) {
  const std::size_t n = G.size();
  if (m.size() != n || bd.size() != n) throw Error(ErrorCode::ShapeMismatch, "bundle potential does not match grid");
  GaugeFields<T> gf;
  gf.sigma.resize(n);
  gf.B.resize(n);
  // q = Hphi sigma_ref, differenced below
  std::vector<T> qx(n), qy(n);
  std::vector<Vec2<T>> w(n);
  for (int k = 0; k < int(n); ++k) {
    const auto& s = bd.sigma_ref(k);
    const auto& H = mf.Hphi[k];
    qx[k] = H.xx * s.x + H.xy * s.y;
    qy[k] = H.xy * s.x + H.yy * s.y;
    const Vec2<T> g = G.gradient(m, k);
    w[k] = {g.x - qx[k], g.y - qy[k]};
    const auto& U = mf.U[k];
    gf.sigma[k] = {s.x + U.xx * w[k].x + U.xy * w[k].y, s.y + U.xy * w[k].x + U.yy * w[k].y};
  }
  for (int k = 0; k < int(n); ++k) {
    const auto& U = mf.U[k];
    const Sym2<T> Hm = G.hessian(m, k);
    const Vec2<T> dqx = G.gradient(qx, k), dqy = G.gradient(qy, k);
    // dw(a, l) = d_a w_l
    Mat2<T> dw;
    dw(0, 0) = Hm.xx - dqx.x;
    dw(0, 1) = Hm.xy - dqy.x;
    dw(1, 0) = Hm.xy - dqx.y;
    dw(1, 1) = Hm.yy - dqy.y;
    for (int a = 0; a < 2; ++a)
      for (int j = 0; j < 2; ++j) {
        const auto& dUa = mf.dU[k][a];
        gf.B[k](a, j) = bd.B_ref(k)(a, j) + dUa(j, 0) * w[k].x + dUa(j, 1) * w[k].y + U(j, 0) * dw(a, 0) +
                        U(j, 1) * dw(a, 1);
      }
  }

  // weak trace: sigma - sigma_ref = -U Hphi sigma_ref + U grad m, interpolated
  // on the elements (the m part through the element gradient, which keeps the
  // stencil compact)
  const auto& qps = G.quad_points();
  const auto& cells = G.cells();
  std::vector<Vec2<T>> ds0(n);
  for (int k = 0; k < int(n); ++k) {
    const auto& U = mf.U[k];
    ds0[k] = {-(U.xx * qx[k] + U.xy * qy[k]), -(U.xy * qx[k] + U.yy * qy[k])};
  }
  std::vector<T> dsx(qps.size()), dsy(qps.size());
  for (std::size_t q = 0; q < qps.size(); ++q) {
    const auto& Q = qps[q];
    const auto& C = cells[Q.cell];
    T sx(0.0), sy(0.0), gx(0.0), gy(0.0), uxx(0.0), uxy(0.0), uyy(0.0);
    for (int a = 0; a < C.corners; ++a) {
      const int v = C.node[a];
      const double p = Q.psi[a];
      sx += p * ds0[v].x;
      sy += p * ds0[v].y;
      uxx += p * mf.U[v].xx;
      uxy += p * mf.U[v].xy;
      uyy += p * mf.U[v].yy;
      gx += Q.dpsi[a].x * m[v];
      gy += Q.dpsi[a].y * m[v];
    }
    dsx[q] = sx + uxx * gx + uxy * gy;
    dsy[q] = sy + uxy * gx + uyy * gy;
  }
  gf.tr.resize(n);
  {
    const auto& D = G.weak_div();
    std::vector<double> wt;
    std::vector<const T*> ref;
    for (int k = 0; k < int(n); ++k) {
      const auto qs = D.nodes(k);
      const auto wx = D.weights(k, 0), wy = D.weights(k, 1);
      wt.clear();
      ref.clear();
      for (std::size_t j = 0; j < qs.size(); ++j) {
        wt.push_back(wx[j]);
        ref.push_back(&dsx[qs[j]]);
        wt.push_back(wy[j]);
        ref.push_back(&dsy[qs[j]]);
      }
      gf.tr[k] = trace(bd.B_ref(k)) + weighted_sum<T>(wt, [&](std::size_t j) -> const T& { return *ref[j]; });
    }
  }

  // lumped determinant: swept area of sigma minus that of sigma_ref per cell
  std::vector<T> dA(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) dA[c] = detail::shoelace(cells[c], gf.sigma) - bd.cell_area(c);
  gf.det.resize(n);
  {
    const auto& L = G.cell_lump();
    for (int k = 0; k < int(n); ++k) {
      const auto cs = L.nodes(k);
      gf.det[k] = det(bd.B_ref(k)) + weighted_sum<T>(L.weights(k, 0), [&](std::size_t j) -> const T& { return dA[cs[j]]; });
    }
  }
  return gf;
}

template <class T>
const std::vector<T>& lambda_F(const GaugeFields<T>& g) {
  return g.tr;
}

template <class T>
std::vector<T> topform_FF(const GaugeFields<T>& g) {
  std::vector<T> r;
  r.reserve(g.det.size());
  for (const auto& d : g.det) r.push_back(4.0 * d);
  return r;
}

// Pointwise |F|^2 = (tr B)^2 - 2 det B from the node-wise B.  U B is
// symmetric, so B has real eigenvalues and the value is their sum of squares;
// anything below -tol is reported.  (The conservative tr and det used in the
// equations can dip slightly below zero near the boundary and are not used
// here.)
inline std::vector<double> pointwise_norm_F(const GaugeFields<double>& g, double tol = 1e-10) {
  std::vector<double> r;
  r.reserve(g.B.size());
  for (std::size_t n = 0; n < g.B.size(); ++n) {
    const double t = trace(g.B[n]);
    const double v = t * t - 2 * det(g.B[n]);
    if (v < -tol * std::max(1.0, t * t)) throw Error(ErrorCode::NegativeNorm, "|F|^2 < 0", int(n));
    r.push_back(std::max(v, 0.0));
  }
  return r;
}

}  // namespace kym
