#include <gtest/gtest.h>

#include "common.hpp"

using namespace kymtest;

TEST(System, ProductConstants) {
  for (auto [p, q] : {std::pair{1, 0}, std::pair{1, 1}, std::pair{1, 2}, std::pair{2, 3}}) {
    const PairState s = product(p, q, 1.0 / 16);
    const Coupling a{1.5, 0.7};
    const auto tc = topo_constants(s, a);
    EXPECT_NEAR(tc.z, p + q, 1e-12);
    EXPECT_NEAR(tc.c_hat, 2 * p * q, 1e-12);
    EXPECT_NEAR(tc.S_hat, 4, 1e-12);
    EXPECT_NEAR(tc.c, a.alpha0 * 4 + 4 * a.alpha1 * p * q, 1e-12);
    EXPECT_NEAR(tc.vol, 1, 1e-15);
  }
}

TEST(System, ProductSolvesTheSystem) {
  for (auto [p, q] : {std::pair{1, 0}, std::pair{1, 2}})
    for (Coupling a : {Coupling{1.0, 0.0}, Coupling{1.0, 0.5}, Coupling{0.3, 4.0}}) {
      const PairState s = product(p, q, 1.0 / 32);
      const auto r = residual_norms(residual(s, a, topo_constants(s, a)), s.grid());
      EXPECT_LT(r.linf(), 1e-10);
      const auto ext = extremal_residual(s, a, topo_constants(s, a));
      for (const auto& v : ext.first) EXPECT_LT(std::hypot(v.x, v.y), 1e-9);
      for (double v : ext.second) EXPECT_LT(std::abs(v), 1e-9);
    }
}

// An off-product state leaves a residual that the norms pick up.
TEST(System, ResidualSeesPerturbations) {
  const PairState s = product(1, 1, 1.0 / 16);
  const Coupling a{1.0, 0.5};
  const auto tc = topo_constants(s, a);
  const auto r = residual_norms(residual(bump(s, 0.2, 0.2), a, tc), s.grid());
  EXPECT_GT(r.hym_linf, 1e-3);
  EXPECT_GT(r.scalar_linf, 1e-3);
  EXPECT_LE(r.hym_l2, r.hym_linf);
}

TEST(System, IdentityOnConstantAndPerturbedStates) {
  std::vector<double> err;
  for (double h : {1.0 / 16, 1.0 / 32, 1.0 / 64}) {
    const PairState s = product(1, 2, h);
    const auto tc = topo_constants(s, {1.0, 0.5});
    EXPECT_LE(identity_check(s, tc), 1e-8);
    const double v = identity_check(bump(s, 0.3, 0.3), tc);
    EXPECT_LE(v, 5 * h * h);
    err.push_back(v);
  }
  // the violation is a discretization effect
  EXPECT_GT(std::log2(err[1] / err[2]), 1.5);
}

TEST(System, AffineFitRecoversAffineFields) {
  const Grid G = Grid::build(Polytope::named("trapezoid(1,2)"), 1.0 / 8);
  std::vector<double> f(G.size());
  for (int k = 0; k < int(G.size()); ++k) f[k] = 2 - 3 * G.x(k).x + 0.5 * G.x(k).y;
  const auto c = affine_fit(G, f);
  EXPECT_NEAR(c[0], 2, 1e-12);
  EXPECT_NEAR(c[1], -3, 1e-12);
  EXPECT_NEAR(c[2], 0.5, 1e-12);
}
