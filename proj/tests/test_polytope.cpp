#include <gtest/gtest.h>

#include "common.hpp"

using namespace kymtest;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorCode::InvalidConfig;
}

}  // namespace

TEST(Polytope, NamedModels) {
  EXPECT_EQ(Polytope::named("square(1)").vertices().size(), 4u);
  EXPECT_DOUBLE_EQ(Polytope::named("rectangle(2,3)").area(), 6.0);
  EXPECT_DOUBLE_EQ(Polytope::named("triangle(1)").area(), 0.5);
  EXPECT_DOUBLE_EQ(Polytope::named("trapezoid(1,2)").area(), 1.5);
  EXPECT_EQ(code_of([] { Polytope::named("hexagon(1)"); }), ErrorCode::InvalidConfig);
  EXPECT_EQ(code_of([] { Polytope::named("square(-1)"); }), ErrorCode::InvalidConfig);
}

TEST(Polytope, RejectsNonDelzant) {
  // the corner at (0, 1) has normals (1, 0) and (-1, -2)
  EXPECT_EQ(code_of([] { Polytope::from_facets({{{1, 0}, 0}, {{0, 1}, 0}, {{-1, -2}, 2}}); }), ErrorCode::NonDelzant);
  EXPECT_EQ(code_of([] { Polytope::from_facets({{{0, 0}, 0}, {{0, 1}, 0}, {{-1, -1}, 1}}); }), ErrorCode::NonDelzant);
  // redundant facet through a vertex
  EXPECT_EQ(code_of([] {
              Polytope::from_facets({{{1, 0}, 0}, {{0, 1}, 0}, {{-1, 0}, 1}, {{0, -1}, 1}, {{-1, -1}, 2}});
            }),
            ErrorCode::NonDelzant);
}

TEST(Polytope, RejectsUnbounded) {
  EXPECT_EQ(code_of([] { Polytope::from_facets({{{1, 0}, 0}, {{0, 1}, 0}}); }), ErrorCode::Unbounded);
  EXPECT_EQ(code_of([] { Polytope::from_facets({{{1, 0}, 0}, {{0, 1}, 0}, {{1, 1}, 1}}); }), ErrorCode::Unbounded);
}

TEST(Polytope, ScaledKeepsNormals) {
  const auto P = Polytope::named("square(1)").scaled(2, 3);
  EXPECT_DOUBLE_EQ(P.area(), 6.0);
  EXPECT_EQ(code_of([] { Polytope::named("triangle(1)").scaled(1, 2); }), ErrorCode::UnsupportedGrid);
}

TEST(Grid, UnsupportedLattices) {
  EXPECT_EQ(code_of([] { Grid::build(Polytope::named("trapezoid(1,2)"), 0.3); }), ErrorCode::UnsupportedGrid);
  EXPECT_EQ(code_of([] { Grid::build(Polytope::named("square(1)"), 0.5); }), ErrorCode::UnsupportedGrid);
  EXPECT_EQ(code_of([] { Grid::build(Polytope::named("square(1)"), -1); }), ErrorCode::UnsupportedGrid);
}

// Quadrature integrates affine functions exactly on every model.
TEST(Grid, AffineQuadratureIsExact) {
  for (const char* name : {"square(1)", "rectangle(2,1)", "triangle(1)", "trapezoid(1,2)"}) {
    const Polytope P = Polytope::named(name);
    const Grid G = Grid::build(P, 1.0 / 16);
    const auto m = polygon_moments(P);
    std::vector<double> one(G.size(), 1.0), x(G.size()), y(G.size());
    for (int k = 0; k < int(G.size()); ++k) {
      x[k] = G.x(k).x;
      y[k] = G.x(k).y;
    }
    EXPECT_NEAR(integrate(one, G), m.area, 1e-13) << name;
    EXPECT_NEAR(integrate(x, G), m.mx, 1e-13) << name;
    EXPECT_NEAR(integrate(y, G), m.my, 1e-13) << name;
  }
}

TEST(Grid, QuadraticQuadratureConverges) {
  // int_T x^2 over the unit triangle is 1/12
  const Polytope P = Polytope::named("triangle(1)");
  std::vector<double> err;
  for (double h : {1.0 / 16, 1.0 / 32}) {
    const Grid G = Grid::build(P, h);
    std::vector<double> f(G.size());
    for (int k = 0; k < int(G.size()); ++k) f[k] = G.x(k).x * G.x(k).x;
    err.push_back(std::abs(integrate(f, G) - 1.0 / 12));
  }
  EXPECT_GT(std::log2(err[0] / err[1]), 1.8);
}

TEST(Grid, StencilsExactOnQuadratics) {
  const Grid G = Grid::build(Polytope::named("trapezoid(1,2)"), 1.0 / 8);
  std::vector<double> f(G.size());
  for (int k = 0; k < int(G.size()); ++k) {
    const auto& x = G.x(k);
    f[k] = 3 * x.x * x.x - 2 * x.x * x.y + 0.5 * x.y * x.y + x.x - 4 * x.y + 7;
  }
  for (int k = 0; k < int(G.size()); ++k) {
    const auto& x = G.x(k);
    const auto g = G.gradient(f, k);
    const auto H = G.hessian(f, k);
    EXPECT_NEAR(g.x, 6 * x.x - 2 * x.y + 1, 1e-9);
    EXPECT_NEAR(g.y, -2 * x.x + x.y - 4, 1e-9);
    EXPECT_NEAR(H.xx, 6, 1e-8);
    EXPECT_NEAR(H.xy, -2, 1e-8);
    EXPECT_NEAR(H.yy, 1, 1e-8);
  }
}

// sum_k w_k psi_k div2(V)_k = sum_n w_n V_n : Hess(psi)_n for arbitrary V, psi
TEST(Grid, WeakDoubleDivergenceIsAdjoint) {
  const Grid G = Grid::build(Polytope::named("trapezoid(1,2)"), 1.0 / 8);
  const int n = int(G.size());
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> U(-1, 1);
  std::vector<Sym2d> V(n);
  std::vector<double> psi(n);
  for (int k = 0; k < n; ++k) {
    V[k] = {U(rng), U(rng), U(rng)};
    psi[k] = U(rng);
  }
  double lhs = 0, rhs = 0;
  const auto& D = G.div2();
  for (int k = 0; k < n; ++k) {
    const auto nodes = D.nodes(k);
    double d = 0;
    for (std::size_t j = 0; j < nodes.size(); ++j)
      d += D.weights(k, 0)[j] * V[nodes[j]].xx + D.weights(k, 1)[j] * V[nodes[j]].xy +
           D.weights(k, 2)[j] * V[nodes[j]].yy;
    lhs += G.weight(k) * psi[k] * d;
    const auto H = G.hessian(psi, k);
    rhs += G.weight(k) * (V[k].xx * H.xx + 2 * V[k].xy * H.xy + V[k].yy * H.yy);
  }
  EXPECT_NEAR(lhs, rhs, 1e-9 * std::max(1.0, std::abs(rhs)));
}

TEST(Grid, BoundaryFlux) {
  const Polytope P = Polytope::named("trapezoid(1,2)");
  const auto m = polygon_moments(P);
  std::vector<std::optional<double>> t(P.num_facets(), -1.0);
  EXPECT_NEAR(boundary_flux(P, t), m.perimeter, 1e-14);
  t[0].reset();
  EXPECT_THROW(boundary_flux(P, t), Error);
  // the position field x has flux 2 area through the boundary
  const Grid G = Grid::build(P, 1.0 / 16);
  std::vector<Vec2d> sigma(G.size());
  for (int k = 0; k < int(G.size()); ++k) sigma[k] = G.x(k);
  EXPECT_NEAR(boundary_flux(P, G, sigma), 2 * m.area, 1e-12);
}
