#pragma once

// Delzant polygons, their lattice discretization, quadrature and boundary flux.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ad.hpp"
#include "errors.hpp"
#include "small.hpp"

namespace kym {

// l(x) = <normal, x> + offset, nonnegative on the polygon
struct Facet {
  std::array<int, 2> normal{};
  double offset = 0.0;

  double eval(double x, double y) const { return normal[0] * x + normal[1] * y + offset; }
  double norm() const { return std::hypot(double(normal[0]), double(normal[1])); }
};

class Polytope {
 public:
  static Polytope from_facets(std::vector<Facet> facets, std::string name = "custom") {
    Polytope p;
    p.facets_ = std::move(facets);
    p.name_ = std::move(name);
    p.validate();
    return p;
  }

  // "square(a,b)", "square(a)", "rectangle(a,b)", "triangle(a)", "trapezoid(a,b)"
  static Polytope named(std::string_view spec) {
    auto open = spec.find('(');
    auto close = spec.rfind(')');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open)
      throw Error(ErrorCode::InvalidConfig, "malformed polytope model '" + std::string(spec) + "'");
    std::string kind(spec.substr(0, open));
    std::vector<double> args;
    {
      std::string inner(spec.substr(open + 1, close - open - 1));
      std::replace(inner.begin(), inner.end(), ',', ' ');
      std::istringstream in(inner);
      double v;
      while (in >> v) args.push_back(v);
      if (!in.eof()) throw Error(ErrorCode::InvalidConfig, "bad model arguments in '" + std::string(spec) + "'");
    }
    for (double a : args)
      if (!(a > 0)) throw Error(ErrorCode::InvalidConfig, "model sizes must be positive");
    std::string canon = std::string(spec);
    if (kind == "square" || kind == "rectangle") {
      if (args.size() == 1) args.push_back(args[0]);
      if (args.size() != 2) throw Error(ErrorCode::InvalidConfig, kind + " takes one or two sizes");
      return from_facets({{{1, 0}, 0.0}, {{0, 1}, 0.0}, {{-1, 0}, args[0]}, {{0, -1}, args[1]}}, canon);
    }
    if (kind == "triangle") {
      if (args.size() != 1) throw Error(ErrorCode::InvalidConfig, "triangle takes one size");
      return from_facets({{{1, 0}, 0.0}, {{0, 1}, 0.0}, {{-1, -1}, args[0]}}, canon);
    }
    if (kind == "trapezoid") {
      if (args.size() != 2) throw Error(ErrorCode::InvalidConfig, "trapezoid takes two sizes");
      return from_facets({{{1, 0}, 0.0}, {{0, 1}, 0.0}, {{-1, 0}, args[0]}, {{-1, -1}, args[1]}}, canon);
    }
    throw Error(ErrorCode::InvalidConfig, "unknown polytope model '" + kind + "'");
  }

  const std::vector<Facet>& facets() const { return facets_; }
  const std::vector<Vec2d>& vertices() const { return vertices_; }
  // the two facets meeting at vertex k
  const std::vector<std::array<int, 2>>& vertex_facets() const { return vertex_facets_; }
  const std::string& name() const { return name_; }

  std::size_t num_facets() const { return facets_.size(); }
  double area() const { return area_; }

  // endpoints of facet i, ordered counter-clockwise around the polygon
  std::array<Vec2d, 2> facet_segment(std::size_t i) const { return segments_[i]; }
  double facet_length(std::size_t i) const {
    auto [a, b] = segments_[i];
    return std::hypot(b.x - a.x, b.y - a.y);
  }

  bool axis_aligned() const {
    return std::all_of(facets_.begin(), facets_.end(),
                       [](const Facet& f) { return f.normal[0] == 0 || f.normal[1] == 0; });
  }

  // diag(sx, sy) applied to the polygon; only lattice-compatible when the
  // facets are axis aligned or sx == sy
  Polytope scaled(double sx, double sy) const {
    if (!(sx > 0 && sy > 0)) throw Error(ErrorCode::InvalidConfig, "scale factors must be positive");
    if (!axis_aligned() && sx != sy)
      throw Error(ErrorCode::UnsupportedGrid, "anisotropic rescaling of a polygon with slanted facets");
    std::vector<Facet> f = facets_;
    // <nu, x> + lambda with x = D x': for axis-aligned or isotropic D the
    // normal is unchanged and the offset picks up the matching factor
    for (auto& fi : f) fi.offset *= (fi.normal[0] != 0 ? sx : sy);
    std::ostringstream nm;
    nm << name_;
    if (sx != 1.0 || sy != 1.0) nm << "*[" << sx << "," << sy << "]";
    return from_facets(std::move(f), nm.str());
  }

  Vec2d bbox_min() const { return lo_; }
  Vec2d bbox_max() const { return hi_; }

 private:
  void validate() {
    const int k = int(facets_.size());
    if (k < 3) throw Error(ErrorCode::Unbounded, "fewer than three facets");
    for (const auto& f : facets_)
      if (f.normal[0] == 0 && f.normal[1] == 0) throw Error(ErrorCode::NonDelzant, "zero facet normal");

    // bounded iff the normals positively span the plane: all angular gaps < pi
    std::vector<double> ang;
    for (const auto& f : facets_) ang.push_back(std::atan2(double(f.normal[1]), double(f.normal[0])));
    std::sort(ang.begin(), ang.end());
    double gap = ang.front() + 2 * M_PI - ang.back();
    for (std::size_t i = 1; i < ang.size(); ++i) gap = std::max(gap, ang[i] - ang[i - 1]);
    if (gap >= M_PI - 1e-12) throw Error(ErrorCode::Unbounded, "facet normals do not enclose a bounded region");

    double scale = 0;
    for (const auto& f : facets_) scale = std::max(scale, std::abs(f.offset));
    scale = std::max(scale, 1.0);
    const double tol = 1e-10 * scale;

    vertices_.clear();
    vertex_facets_.clear();
    for (int i = 0; i < k; ++i)
      for (int j = i + 1; j < k; ++j) {
        const auto& a = facets_[i];
        const auto& b = facets_[j];
        const long d = long(a.normal[0]) * b.normal[1] - long(a.normal[1]) * b.normal[0];
        if (d == 0) continue;
        // solve <a.n, x> = -a.off, <b.n, x> = -b.off
        const double x = (-a.offset * b.normal[1] + b.offset * a.normal[1]) / double(d);
        const double y = (-b.offset * a.normal[0] + a.offset * b.normal[0]) / double(d);
        bool inside = true;
        int active = 0;
        for (const auto& f : facets_) {
          const double l = f.eval(x, y);
          if (l < -tol) inside = false;
          if (std::abs(l) <= tol) ++active;
        }
        if (!inside) continue;
        if (active != 2) throw Error(ErrorCode::NonDelzant, "more than two facets meet at a vertex");
        if (std::abs(d) != 1) {
          std::ostringstream msg;
          msg << "normals of facets " << i << " and " << j << " have determinant " << d << " at vertex (" << x + 0.0
              << ", " << y + 0.0 << ")";
          throw Error(ErrorCode::NonDelzant, msg.str());
        }
        vertices_.push_back({x, y});
        vertex_facets_.push_back({i, j});
      }
    if (vertices_.size() != std::size_t(k))
      throw Error(ErrorCode::NonDelzant, "every facet must support exactly one edge of the polygon");
    std::vector<int> count(k, 0);
    for (auto vf : vertex_facets_) {
      ++count[vf[0]];
      ++count[vf[1]];
    }
    for (int c : count)
      if (c != 2) throw Error(ErrorCode::NonDelzant, "redundant or degenerate facet");

    // counter-clockwise order around the centroid
    Vec2d c{0, 0};
    for (auto v : vertices_) {
      c.x += v.x / k;
      c.y += v.y / k;
    }
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return std::atan2(vertices_[a].y - c.y, vertices_[a].x - c.x) <
             std::atan2(vertices_[b].y - c.y, vertices_[b].x - c.x);
    });
    std::vector<Vec2d> vs;
    std::vector<std::array<int, 2>> vf;
    for (int o : order) {
      vs.push_back(vertices_[o]);
      vf.push_back(vertex_facets_[o]);
    }
    vertices_ = vs;
    vertex_facets_ = vf;

    area_ = 0;
    for (int i = 0; i < k; ++i) {
      const auto& p = vertices_[i];
      const auto& q = vertices_[(i + 1) % k];
      area_ += 0.5 * (p.x * q.y - q.x * p.y);
    }
    if (!(area_ > tol)) throw Error(ErrorCode::NonDelzant, "empty polygon");

    segments_.assign(k, {});
    for (int i = 0; i < k; ++i) {
      const int n = (i + 1) % k;
      // consecutive vertices share exactly one facet
      int shared = -1;
      for (int a : vertex_facets_[i])
        for (int b : vertex_facets_[n])
          if (a == b) shared = a;
      segments_[shared] = {vertices_[i], vertices_[n]};
    }

    lo_ = hi_ = vertices_[0];
    for (auto v : vertices_) {
      lo_.x = std::min(lo_.x, v.x);
      lo_.y = std::min(lo_.y, v.y);
      hi_.x = std::max(hi_.x, v.x);
      hi_.y = std::max(hi_.y, v.y);
    }
  }

  std::vector<Facet> facets_;
  std::vector<Vec2d> vertices_;
  std::vector<std::array<int, 2>> vertex_facets_;
  std::vector<std::array<Vec2d, 2>> segments_;
  std::string name_;
  double area_ = 0;
  Vec2d lo_{}, hi_{};
};

// Compensated (Neumaier) summation, used for every reduction so that results
// do not depend on accumulated round-off.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = s_ + v;
    if (std::abs(s_) >= std::abs(v))
      c_ += (s_ - t) + v;
    else
      c_ += (v - t) + s_;
    s_ = t;
  }
  double value() const { return s_ + c_; }

 private:
  double s_ = 0, c_ = 0;
};

// Linear finite-difference weights at a node, stored in CSR form.
struct StencilTable {
  std::vector<int> start{0};
  std::vector<int> node;
  std::array<std::vector<double>, 3> w;  // one weight array per component

  std::span<const int> nodes(int n) const { return {node.data() + start[n], std::size_t(start[n + 1] - start[n])}; }
  std::span<const double> weights(int n, int c) const {
    return {w[c].data() + start[n], std::size_t(start[n + 1] - start[n])};
  }
};

class Grid {
 public:
  // h: lattice spacing.  Axis-aligned polygons get the spacing adjusted per
  // axis so that the edges are hit exactly; slanted polygons need hx == hy and
  // vertices on the lattice.
  static Grid build(const Polytope& P, double h) {
    if (!(h > 0)) throw Error(ErrorCode::UnsupportedGrid, "grid spacing must be positive");
    const Vec2d lo = P.bbox_min(), hi = P.bbox_max();
    if (P.axis_aligned()) {
      const int nx = std::max(1, int(std::lround((hi.x - lo.x) / h)));
      const int ny = std::max(1, int(std::lround((hi.y - lo.y) / h)));
      return build_lattice(P, (hi.x - lo.x) / nx, (hi.y - lo.y) / ny);
    }
    return build_lattice(P, h, h);
  }

  static Grid build_lattice(const Polytope& P, double hx, double hy) {
    for (const auto& f : P.facets())
      if (std::abs(f.normal[0]) > 1 || std::abs(f.normal[1]) > 1)
        throw Error(ErrorCode::UnsupportedGrid, "facet normals with entries beyond +-1 are not lattice aligned");
    if (!P.axis_aligned() && std::abs(hx - hy) > 1e-14 * std::max(hx, hy))
      throw Error(ErrorCode::UnsupportedGrid, "slanted facets need a square lattice");

    Grid g;
    g.hx_ = hx;
    g.hy_ = hy;
    g.origin_ = P.bbox_min();
    const Vec2d hi = P.bbox_max();
    g.nx_ = int(std::lround((hi.x - g.origin_.x) / hx));
    g.ny_ = int(std::lround((hi.y - g.origin_.y) / hy));
    for (auto v : P.vertices()) {
      const double ix = (v.x - g.origin_.x) / hx, iy = (v.y - g.origin_.y) / hy;
      if (std::abs(ix - std::round(ix)) > 1e-8 || std::abs(iy - std::round(iy)) > 1e-8)
        throw Error(ErrorCode::UnsupportedGrid, "polygon vertex is not a lattice point");
    }
    if (g.nx_ < 4 || g.ny_ < 4) throw Error(ErrorCode::UnsupportedGrid, "grid too coarse (need >= 4 cells per side)");

    const double tol = 1e-9 * std::min(hx, hy);
    const int kf = int(P.num_facets());
    g.id_.assign(std::size_t(g.nx_ + 1) * (g.ny_ + 1), -1);
    for (int j = 0; j <= g.ny_; ++j)
      for (int i = 0; i <= g.nx_; ++i) {
        const double x = g.origin_.x + i * hx, y = g.origin_.y + j * hy;
        bool inside = true;
        std::uint32_t mask = 0;
        std::vector<double> ls(kf);
        for (int f = 0; f < kf; ++f) {
          double l = P.facets()[f].eval(x, y);
          if (l < -tol) inside = false;
          if (std::abs(l) <= tol) {
            mask |= 1u << f;
            l = 0.0;
          }
          ls[f] = l;
        }
        if (!inside) continue;
        g.id_[g.lattice(i, j)] = int(g.ij_.size());
        g.ij_.push_back({i, j});
        g.x_.push_back({x, y});
        g.facet_mask_.push_back(mask);
        g.l_.insert(g.l_.end(), ls.begin(), ls.end());
      }
    g.nfacets_ = kf;
    g.build_weights();
    g.build_cells();
    g.build_stencils();
    return g;
  }

  std::size_t size() const { return x_.size(); }
  double hx() const { return hx_; }
  double hy() const { return hy_; }
  double h() const { return std::max(hx_, hy_); }
  int nx() const { return nx_; }
  int ny() const { return ny_; }
  Vec2d origin() const { return origin_; }
  const Vec2d& x(int n) const { return x_[n]; }
  std::array<int, 2> ij(int n) const { return ij_[n]; }
  // node id at lattice index, -1 outside
  int node_at(int i, int j) const {
    if (i < 0 || j < 0 || i > nx_ || j > ny_) return -1;
    return id_[lattice(i, j)];
  }
  double weight(int n) const { return w_[n]; }
  const std::vector<double>& weights() const { return w_; }
  double l(int n, int f) const { return l_[std::size_t(n) * nfacets_ + f]; }
  bool on_boundary(int n) const { return facet_mask_[n] != 0; }
  bool on_facet(int n, int f) const { return (facet_mask_[n] >> f) & 1u; }

  // gradient weights: 2 per entry (d/dx, d/dy)
  const StencilTable& grad() const { return grad_; }
  // Hessian weights: 3 per entry (xx, xy, yy)
  const StencilTable& hess() const { return hess_; }
  // Weak double divergence: row k holds the quadrature adjoint of the
  // Hessian stencil, so that sum_k w_k psi_k (d_i d_j V^ij)_k equals
  // sum_n w_n V_n : Hess(psi)_n for every grid function psi.  The xy weight
  // already carries the factor 2 of the symmetric contraction.
  const StencilTable& div2() const { return div2_; }

  // Finite-element view of the lattice: full squares carry bilinear
  // elements, squares cut by a diagonal facet linear ones.  Corners are
  // listed counter-clockwise.
  struct Cell {
    std::array<int, 4> node{-1, -1, -1, -1};
    int corners = 0;
    double area = 0;
  };
  struct QuadPoint {
    int cell = 0;
    double weight = 0;
    std::array<double, 4> psi{};
    std::array<Vec2d, 4> dpsi{};
  };
  const std::vector<Cell>& cells() const { return cells_; }
  const std::vector<QuadPoint>& quad_points() const { return qp_; }
  // Row k: quadrature points q with weights (-w_q dpsi_k(q)) / w_k, so that
  // sum_q (wx sx_q + wy sy_q) is the weak divergence of a continuous field
  // with vanishing normal component on the facets.
  const StencilTable& weak_div() const { return weak_div_; }
  // Row k: cells c containing node k with weight 1 / (corners_c w_k); lumps
  // cell integrals onto the nodes with the quadrature masses above.
  const StencilTable& cell_lump() const { return cell_lump_; }

  template <class T>
  Vec2<T> gradient(const std::vector<T>& f, int n) const {
    return gradient_of<T>(n, [&](int m) -> const T& { return f[m]; });
  }
  template <class T, class Get>
  Vec2<T> gradient_of(int n, Get get) const {
    const auto nodes = grad_.nodes(n);
    auto at = [&](std::size_t k) -> decltype(auto) { return get(nodes[k]); };
    return {weighted_sum<T>(grad_.weights(n, 0), at), weighted_sum<T>(grad_.weights(n, 1), at)};
  }
  template <class T>
  Sym2<T> hessian(const std::vector<T>& f, int n) const {
    return hessian_of<T>(n, [&](int m) -> const T& { return f[m]; });
  }
  template <class T, class Get>
  Sym2<T> hessian_of(int n, Get get) const {
    const auto nodes = hess_.nodes(n);
    auto at = [&](std::size_t k) -> decltype(auto) { return get(nodes[k]); };
    return {weighted_sum<T>(hess_.weights(n, 0), at), weighted_sum<T>(hess_.weights(n, 1), at),
            weighted_sum<T>(hess_.weights(n, 2), at)};
  }

 private:
  std::size_t lattice(int i, int j) const { return std::size_t(j) * (nx_ + 1) + i; }

  void build_weights() {
    w_.assign(size(), 0.0);
    const double cell = hx_ * hy_;
    for (int j = 0; j < ny_; ++j)
      for (int i = 0; i < nx_; ++i) {
        std::array<int, 4> c{node_at(i, j), node_at(i + 1, j), node_at(i + 1, j + 1), node_at(i, j + 1)};
        const int in = int(std::count_if(c.begin(), c.end(), [](int v) { return v >= 0; }));
        if (in == 4) {
          for (int v : c) w_[v] += cell / 4;
        } else if (in == 3) {
          // a diagonal facet cuts the cell in half
          for (int v : c)
            if (v >= 0) w_[v] += cell / 6;
        }
      }
  }

  void build_cells() {
    cells_.clear();
    qp_.clear();
    const double cell = hx_ * hy_;
    const double g = 0.5 / std::sqrt(3.0);
    for (int j = 0; j < ny_; ++j)
      for (int i = 0; i < nx_; ++i) {
        const std::array<int, 4> c{node_at(i, j), node_at(i + 1, j), node_at(i + 1, j + 1), node_at(i, j + 1)};
        const int in = int(std::count_if(c.begin(), c.end(), [](int v) { return v >= 0; }));
        if (in < 3) continue;
        Cell C;
        const int id = int(cells_.size());
        if (in == 4) {
          C.node = c;
          C.corners = 4;
          C.area = cell;
          // 2x2 Gauss on the bilinear element, local coordinates (xi, eta) in [0, 1]^2
          for (double xi : {0.5 - g, 0.5 + g})
            for (double eta : {0.5 - g, 0.5 + g}) {
              QuadPoint q;
              q.cell = id;
              q.weight = cell / 4;
              q.psi = {(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta};
              q.dpsi = {Vec2d{-(1 - eta) / hx_, -(1 - xi) / hy_}, Vec2d{(1 - eta) / hx_, -xi / hy_},
                        Vec2d{eta / hx_, xi / hy_}, Vec2d{-eta / hx_, (1 - xi) / hy_}};
              qp_.push_back(q);
            }
        } else {
          int k = 0;
          for (int v : c)
            if (v >= 0) C.node[k++] = v;
          C.corners = 3;
          C.area = cell / 2;
          // linear element, centroid rule
          const Vec2d a = x_[C.node[0]], b = x_[C.node[1]], d = x_[C.node[2]];
          const double twice = (b.x - a.x) * (d.y - a.y) - (d.x - a.x) * (b.y - a.y);
          QuadPoint q;
          q.cell = id;
          q.weight = cell / 2;
          q.psi = {1.0 / 3, 1.0 / 3, 1.0 / 3, 0.0};
          q.dpsi = {Vec2d{(b.y - d.y) / twice, (d.x - b.x) / twice}, Vec2d{(d.y - a.y) / twice, (a.x - d.x) / twice},
                    Vec2d{(a.y - b.y) / twice, (b.x - a.x) / twice}, Vec2d{0, 0}};
          qp_.push_back(q);
        }
        cells_.push_back(C);
      }

    std::vector<std::vector<std::pair<int, std::array<double, 3>>>> div_rows(size()), lump_rows(size());
    for (int q = 0; q < int(qp_.size()); ++q) {
      const auto& Q = qp_[q];
      const auto& C = cells_[Q.cell];
      for (int a = 0; a < C.corners; ++a) {
        const int k = C.node[a];
        div_rows[k].push_back({q, {-Q.weight * Q.dpsi[a].x / w_[k], -Q.weight * Q.dpsi[a].y / w_[k], 0.0}});
      }
    }
    for (int c = 0; c < int(cells_.size()); ++c)
      for (int a = 0; a < cells_[c].corners; ++a) {
        const int k = cells_[c].node[a];
        lump_rows[k].push_back({c, {1.0 / (cells_[c].corners * w_[k]), 0.0, 0.0}});
      }
    weak_div_ = StencilTable{};
    cell_lump_ = StencilTable{};
    for (const auto& r : div_rows) append(weak_div_, 2, r);
    for (const auto& r : lump_rows) append(cell_lump_, 1, r);
  }

  // Directions along which one-dimensional difference formulas are tried.
  // The quadratic form v^T H v along three pairwise independent directions
  // determines H, which is how corner nodes are handled.
  struct Dir {
    int di, dj;
  };
  static constexpr std::array<Dir, 8> kDirs{{{1, 0}, {0, 1}, {1, 1}, {1, -1}, {2, 1}, {1, 2}, {2, -1}, {1, -2}}};

  // weights in units of the step parameter s (x = x_n + s*v)
  struct Line {
    bool ok = false;
    bool central = false;
    std::vector<std::pair<int, double>> taps;  // (node, weight)
  };

  Line first_along(int n, Dir d) const {
    const auto [i, j] = ij_[n];
    auto at = [&](int s) { return node_at(i + s * d.di, j + s * d.dj); };
    Line L;
    if (at(1) >= 0 && at(-1) >= 0) {
      L = {true, true, {{at(1), 0.5}, {at(-1), -0.5}}};
    } else if (at(1) >= 0 && at(2) >= 0) {
      L = {true, false, {{n, -1.5}, {at(1), 2.0}, {at(2), -0.5}}};
    } else if (at(-1) >= 0 && at(-2) >= 0) {
      L = {true, false, {{n, 1.5}, {at(-1), -2.0}, {at(-2), 0.5}}};
    }
    return L;
  }

  Line second_along(int n, Dir d) const {
    const auto [i, j] = ij_[n];
    auto at = [&](int s) { return node_at(i + s * d.di, j + s * d.dj); };
    Line L;
    if (at(1) >= 0 && at(-1) >= 0) {
      L = {true, true, {{at(1), 1.0}, {n, -2.0}, {at(-1), 1.0}}};
    } else if (at(1) >= 0 && at(2) >= 0 && at(3) >= 0) {
      L = {true, false, {{n, 2.0}, {at(1), -5.0}, {at(2), 4.0}, {at(3), -1.0}}};
    } else if (at(-1) >= 0 && at(-2) >= 0 && at(-3) >= 0) {
      L = {true, false, {{n, 2.0}, {at(-1), -5.0}, {at(-2), 4.0}, {at(-3), -1.0}}};
    }
    return L;
  }

  Vec2d step(Dir d) const { return {d.di * hx_, d.dj * hy_}; }

  static void append(StencilTable& t, int width, const std::vector<std::pair<int, std::array<double, 3>>>& taps) {
    // merge duplicate nodes, keep sorted by node for deterministic sums
    std::vector<std::pair<int, std::array<double, 3>>> v = taps;
    std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<int, std::array<double, 3>>> merged;
    for (const auto& e : v) {
      if (!merged.empty() && merged.back().first == e.first) {
        for (int k = 0; k < 3; ++k) merged.back().second[k] += e.second[k];
      } else {
        merged.push_back(e);
      }
    }
    for (const auto& e : merged) {
      t.node.push_back(e.first);
      for (int k = 0; k < width; ++k) t.w[k].push_back(e.second[k]);
    }
    t.start.push_back(int(t.node.size()));
  }

  void build_stencils() {
    grad_ = StencilTable{};
    hess_ = StencilTable{};
    for (int n = 0; n < int(size()); ++n) {
      build_gradient(n);
      build_hessian(n);
    }
    build_div2();
  }

  void build_div2() {
    std::vector<std::vector<std::pair<int, std::array<double, 3>>>> rows(size());
    for (int n = 0; n < int(size()); ++n) {
      const auto nodes = hess_.nodes(n);
      for (std::size_t j = 0; j < nodes.size(); ++j) {
        const int k = nodes[j];
        const double f = w_[n] / w_[k];
        rows[k].push_back({n, {f * hess_.w[0][hess_.start[n] + j], 2 * f * hess_.w[1][hess_.start[n] + j],
                               f * hess_.w[2][hess_.start[n] + j]}});
      }
    }
    div2_ = StencilTable{};
    for (const auto& r : rows) append(div2_, 3, r);
  }

  void build_gradient(int n) {
    std::vector<std::pair<int, std::array<double, 3>>> taps;
    const Line ax = first_along(n, kDirs[0]);
    const Line ay = first_along(n, kDirs[1]);
    std::array<Line, 2> use;
    std::array<Dir, 2> dirs;
    if (ax.ok && ay.ok) {
      use = {ax, ay};
      dirs = {kDirs[0], kDirs[1]};
    } else {
      int found = 0;
      for (bool want_central : {true, false})
        for (auto d : kDirs) {
          if (found == 2) break;
          const Line L = first_along(n, d);
          if (!L.ok || L.central != want_central) continue;
          if (found == 1 && dirs[0].di * d.dj - dirs[0].dj * d.di == 0) continue;
          use[found] = L;
          dirs[found] = d;
          ++found;
        }
      if (found < 2) throw Error(ErrorCode::UnsupportedGrid, "no gradient stencil at node", n);
    }
    // [v0^T; v1^T] grad = [f_s0; f_s1]
    const Vec2d v0 = step(dirs[0]), v1 = step(dirs[1]);
    const double D = v0.x * v1.y - v0.y * v1.x;
    // inverse rows
    const double i00 = v1.y / D, i01 = -v0.y / D, i10 = -v1.x / D, i11 = v0.x / D;
    for (auto [m, w] : use[0].taps) taps.push_back({m, {i00 * w, i10 * w, 0.0}});
    for (auto [m, w] : use[1].taps) taps.push_back({m, {i01 * w, i11 * w, 0.0}});
    append(grad_, 2, taps);
  }

  void build_hessian(int n) {
    std::vector<std::pair<int, std::array<double, 3>>> taps;
    const Line xx = second_along(n, kDirs[0]);
    const Line yy = second_along(n, kDirs[1]);
    const Line dp = second_along(n, kDirs[2]);
    const Line dm = second_along(n, kDirs[3]);
    const double hx2 = hx_ * hx_, hy2 = hy_ * hy_, hxy = hx_ * hy_;
    if (xx.ok && yy.ok && (dp.ok || dm.ok)) {
      for (auto [m, w] : xx.taps) taps.push_back({m, {w / hx2, 0.0, 0.0}});
      for (auto [m, w] : yy.taps) taps.push_back({m, {0.0, 0.0, w / hy2}});
      if (dp.ok && dm.ok) {
        // f_(1,1) - f_(1,-1) = 4 hx hy fxy
        for (auto [m, w] : dp.taps) taps.push_back({m, {0.0, w / (4 * hxy), 0.0}});
        for (auto [m, w] : dm.taps) taps.push_back({m, {0.0, -w / (4 * hxy), 0.0}});
      } else {
        const Line& d = dp.ok ? dp : dm;
        const double sgn = dp.ok ? 1.0 : -1.0;
        // f_dd = hx^2 fxx + 2 sgn hx hy fxy + hy^2 fyy
        for (auto [m, w] : d.taps) taps.push_back({m, {0.0, sgn * w / (2 * hxy), 0.0}});
        for (auto [m, w] : xx.taps) taps.push_back({m, {0.0, -sgn * w / (2 * hxy), 0.0}});
        for (auto [m, w] : yy.taps) taps.push_back({m, {0.0, -sgn * w / (2 * hxy), 0.0}});
      }
      append(hess_, 3, taps);
      return;
    }
    // generic: three pairwise independent directions, central ones first
    std::vector<Dir> dirs;
    std::vector<Line> lines;
    for (bool want_central : {true, false})
      for (auto d : kDirs) {
        if (dirs.size() == 3) break;
        const Line L = second_along(n, d);
        if (!L.ok || L.central != want_central) continue;
        bool indep = true;
        for (auto e : dirs)
          if (e.di * d.dj - e.dj * d.di == 0) indep = false;
        if (!indep) continue;
        dirs.push_back(d);
        lines.push_back(L);
      }
    if (dirs.size() < 3) throw Error(ErrorCode::UnsupportedGrid, "no Hessian stencil at node", n);
    // rows: [vx^2, 2 vx vy, vy^2] . (fxx, fxy, fyy) = f_ss
    double A[3][3];
    for (int r = 0; r < 3; ++r) {
      const Vec2d v = step(dirs[r]);
      A[r][0] = v.x * v.x;
      A[r][1] = 2 * v.x * v.y;
      A[r][2] = v.y * v.y;
    }
    double inv[3][3];
    invert3(A, inv);
    for (int r = 0; r < 3; ++r)
      for (auto [m, w] : lines[r].taps) taps.push_back({m, {inv[0][r] * w, inv[1][r] * w, inv[2][r] * w}});
    append(hess_, 3, taps);
  }

  static void invert3(const double a[3][3], double inv[3][3]) {
    const double c00 = a[1][1] * a[2][2] - a[1][2] * a[2][1];
    const double c01 = a[1][2] * a[2][0] - a[1][0] * a[2][2];
    const double c02 = a[1][0] * a[2][1] - a[1][1] * a[2][0];
    const double d = a[0][0] * c00 + a[0][1] * c01 + a[0][2] * c02;
    inv[0][0] = c00 / d;
    inv[1][0] = c01 / d;
    inv[2][0] = c02 / d;
    inv[0][1] = (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / d;
    inv[1][1] = (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / d;
    inv[2][1] = (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / d;
    inv[0][2] = (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / d;
    inv[1][2] = (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / d;
    inv[2][2] = (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / d;
  }

  double hx_ = 0, hy_ = 0;
  Vec2d origin_{};
  int nx_ = 0, ny_ = 0, nfacets_ = 0;
  std::vector<int> id_;
  std::vector<std::array<int, 2>> ij_;
  std::vector<Vec2d> x_;
  std::vector<std::uint32_t> facet_mask_;
  std::vector<double> l_;
  std::vector<double> w_;
  StencilTable grad_, hess_, div2_, weak_div_, cell_lump_;
  std::vector<Cell> cells_;
  std::vector<QuadPoint> qp_;
};

// Quadrature of a nodal field over the polygon.
inline double integrate(std::span<const double> field, const Grid& G) {
  if (field.size() != G.size()) throw Error(ErrorCode::ShapeMismatch, "field size does not match grid");
  CompensatedSum s;
  for (std::size_t n = 0; n < field.size(); ++n) s.add(G.weight(int(n)) * field[n]);
  return s.value();
}

inline double integrate(const std::vector<double>& field, const Grid& G) {
  return integrate(std::span<const double>(field), G);
}

// Outward flux from per-facet constant traces t_i = <sigma, nu_i>.  The
// outward unit normal is -nu_i/|nu_i|.
inline double boundary_flux(const Polytope& P, std::span<const std::optional<double>> traces) {
  if (traces.size() != P.num_facets()) throw Error(ErrorCode::ShapeMismatch, "one trace per facet expected");
  CompensatedSum s;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    if (!traces[i]) throw Error(ErrorCode::MissingTrace, "no trace for facet " + std::to_string(i));
    s.add(-*traces[i] * P.facet_length(i) / P.facets()[i].norm());
  }
  return s.value();
}

// Outward flux of a nodal vector field, trapezoid rule along each facet.
inline double boundary_flux(const Polytope& P, const Grid& G, const std::vector<Vec2d>& sigma) {
  if (sigma.size() != G.size()) throw Error(ErrorCode::ShapeMismatch, "field size does not match grid");
  CompensatedSum s;
  for (std::size_t f = 0; f < P.num_facets(); ++f) {
    const auto& F = P.facets()[f];
    const Vec2d a = P.facet_segment(f)[0];
    std::vector<std::pair<double, int>> pts;
    for (int n = 0; n < int(G.size()); ++n)
      if (G.on_facet(n, int(f))) {
        const auto& x = G.x(n);
        pts.push_back({std::hypot(x.x - a.x, x.y - a.y), n});
      }
    std::sort(pts.begin(), pts.end());
    if (pts.size() < 2) throw Error(ErrorCode::MissingTrace, "facet " + std::to_string(f) + " has no grid nodes");
    const double nn = F.norm();
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) {
      const double ds = pts[k + 1].first - pts[k].first;
      auto flux = [&](int n) { return -(sigma[n].x * F.normal[0] + sigma[n].y * F.normal[1]) / nn; };
      s.add(0.5 * ds * (flux(pts[k].second) + flux(pts[k + 1].second)));
    }
  }
  return s.value();
}

}  // namespace kym
