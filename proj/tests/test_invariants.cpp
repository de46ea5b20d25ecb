#include <gtest/gtest.h>

#include "common.hpp"

using namespace kymtest;

TEST(Futaki, TrapezoidMatchesBoundaryFormula) {
  const Polytope P = Polytope::named("trapezoid(1,2)");
  EXPECT_NEAR(futaki_oracle(P, 1, 0), -2.0 / 9, 1e-14);
  EXPECT_NEAR(futaki_oracle(P, 0, 1), 1.0 / 9, 1e-14);
  const Coupling a{1.0, 0.0};
  for (double h : {1.0 / 32, 1.0 / 64}) {
    const PairState s = make_state("trapezoid(1,2)", {}, h);
    const auto tc = topo_constants(s, a);
    for (auto [ax, ay] : {std::pair{1.0, 0.0}, std::pair{0.0, 1.0}, std::pair{1.0, -2.0}}) {
      const auto z = ToricVectorField::normalized(*s.model, *s.bundle, {ax, ay});
      EXPECT_NEAR(futaki(s, a, tc, z), futaki_oracle(P, ax, ay), 20 * h * h);
    }
  }
}

TEST(Futaki, VanishesOnProductSolutions) {
  for (Coupling a : {Coupling{1.0, 0.0}, Coupling{1.0, 1.0}}) {
    const PairState s = product(1, 2, 1.0 / 16);
    for (const auto& f : futaki_suite(s, a, topo_constants(s, a))) EXPECT_LT(std::abs(f.value), 1e-12) << f.name;
  }
}

TEST(Futaki, BasePointIndependence) {
  const Coupling a{1.0, 0.5};
  std::vector<double> drift;
  for (double h : {1.0 / 16, 1.0 / 32}) {
    const PairState s = make_state("trapezoid(1,2)", {1, 1}, h);
    const auto z = ToricVectorField::normalized(*s.model, *s.bundle, {1, 0});
    drift.push_back(base_point_independence(bump(s, 0.3, 0.3), s, a, z));
  }
  EXPECT_LT(drift[1], 1e-3);
  EXPECT_GT(drift[0] / drift[1], 3);
  const PairState t = product(1, 2, 1.0 / 16);
  EXPECT_THROW(base_point_independence(product(1, 1, 1.0 / 16), t, a,
                                       ToricVectorField::normalized(*t.model, *t.bundle, {1, 0})),
               Error);
}

TEST(Functional, MinimalityCondition) {
  const PairState s = product(1, 1, 1.0 / 8);
  EXPECT_TRUE(minimality_condition({1.0, 2.0}, topo_constants(s, {1.0, 2.0})));
  EXPECT_FALSE(minimality_condition({1.0, 0.5}, topo_constants(s, {1.0, 0.5})));
}

// With the topological integrals fixed, CYM - CYM(solution) is a sum of
// squares whose weight on the HYM part is
//   K = alpha1 - 2 alpha S_hat - 2 alpha^2 (c_hat - z^2),
// which is at least the margin of the minimality inequality since
// c_hat <= z^2.
TEST(Functional, SumOfSquaresDecomposition) {
  const Coupling a{1.0, 2.0};
  const PairState s0 = product(1, 1, 1.0 / 16);
  const auto tc = topo_constants(s0, a);
  const double alpha = 2 * a.alpha1 / a.alpha0;
  const double K = a.alpha1 - 2 * alpha * tc.S_hat - 2 * alpha * alpha * (tc.c_hat - tc.z * tc.z);
  const double c2 = a.alpha0 * tc.S_hat + 2 * a.alpha1 * (tc.c_hat - tc.z * tc.z);
  const double E0 = cym_functional(s0, a);
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto s = random_perturbation(s0, 0.5, seed);
    const auto f = evaluate_fields(s);
    std::vector<double> q(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double t = f.gauge.tr[k];
      const double r1 = f.metric.S[k] - alpha * (t * t - 2 * f.gauge.det[k]) - c2 / a.alpha0;
      q[k] = r1 * r1 + K * (t - tc.z) * (t - tc.z);
    }
    EXPECT_NEAR(cym_functional(s, a) - E0, integrate(q, s.grid()) / tc.vol, 1e-10);
  }
}

TEST(Functional, KEnergyRateVanishesAtSolutions) {
  const Coupling a{1.0, 1.0};
  const PairState s = product(1, 1, 1.0 / 16);
  const auto tc = topo_constants(s, a);
  const auto d = random_perturbation(s, 1.0, 4);
  std::vector<double> ud(s.size()), md(s.size());
  for (std::size_t k = 0; k < s.size(); ++k) {
    ud[k] = d.phi[k];
    md[k] = d.m[k];
  }
  EXPECT_LT(std::abs(k_energy_rate(s, a, tc, ud, md)), 1e-12);
}
