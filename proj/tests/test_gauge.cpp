#include <gtest/gtest.h>

#include "common.hpp"

using namespace kymtest;

// On P1 x P1 the reference connection of O(p, q) has constant curvature
// B = diag(p, q).
TEST(Gauge, ProductCurvature) {
  for (auto [p, q] : {std::pair{1, 0}, std::pair{1, 2}, std::pair{3, 1}}) {
    const PairState s = product(p, q, 1.0 / 16);
    const auto f = evaluate_fields(s);
    for (int k = 0; k < int(s.size()); ++k) {
      ASSERT_NEAR(f.gauge.B[k](0, 0), p, 1e-10);
      ASSERT_NEAR(f.gauge.B[k](1, 1), q, 1e-10);
      ASSERT_NEAR(f.gauge.B[k](0, 1), 0, 1e-10);
      ASSERT_NEAR(f.gauge.tr[k], p + q, 1e-10);
      ASSERT_NEAR(f.gauge.det[k], p * q, 1e-10);
    }
  }
}

TEST(Gauge, FacetTracesAreTheLabels) {
  const PairState s = make_state("trapezoid(1,2)", {2, 1}, 1.0 / 8);
  const auto t = s.bundle->facet_traces();
  const auto& labels = s.bundle->labels();
  ASSERT_EQ(t.size(), labels.size());
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(*t[i], -double(labels[i]));
  // the reference section has these traces on the facet nodes
  const auto& G = s.grid();
  const auto& P = s.model->polytope();
  for (int k = 0; k < int(G.size()); ++k)
    for (std::size_t i = 0; i < P.num_facets(); ++i)
      if (G.on_facet(k, int(i))) {
        const auto& sg = s.bundle->sigma_ref(k);
        const auto& nu = P.facets()[i].normal;
        EXPECT_NEAR(sg.x * nu[0] + sg.y * nu[1], -labels[i], 1e-10);
      }
}

// int tr B and int det B do not move when (phi, m) change.
TEST(Gauge, TopologicalIntegralsAreInvariant) {
  for (const char* model : {"square(1)", "trapezoid(1,2)", "triangle(1)"}) {
    const std::vector<int> deg = std::string(model) == "triangle(1)" ? std::vector<int>{2} : std::vector<int>{1, 2};
    const PairState s0 = make_state(model, deg, 1.0 / 16);
    const auto f0 = evaluate_fields(s0);
    const double T0 = integrate(f0.gauge.tr, s0.grid()), D0 = integrate(f0.gauge.det, s0.grid());
    for (std::uint64_t seed : {1, 2, 3, 4}) {
      const auto s = random_perturbation(s0, 1.0, seed);
      const auto f = evaluate_fields(s);
      EXPECT_NEAR(integrate(f.gauge.tr, s.grid()), T0, 1e-11) << model;
      EXPECT_NEAR(integrate(f.gauge.det, s.grid()), D0, 1e-11) << model;
    }
  }
}

// int tr B = z vol with z from the facet labels (divergence theorem).
TEST(Gauge, DegreeFromBoundaryFlux) {
  const PairState s = make_state("trapezoid(1,2)", {1, 1}, 1.0 / 32);
  const auto tc = topo_constants(s, {1.0, 0.0});
  const auto f = evaluate_fields(s);
  EXPECT_NEAR(integrate(f.gauge.tr, s.grid()) / tc.vol, tc.z, 1e-3);
  EXPECT_NEAR(boundary_flux(s.model->polytope(), s.grid(), f.gauge.sigma) / tc.vol, tc.z, 1e-10);
}

TEST(Gauge, PointwiseNormIsNonNegative) {
  const PairState s0 = make_state("trapezoid(1,2)", {1, 1}, 1.0 / 16);
  for (std::uint64_t seed : {1, 2}) {
    const auto s = random_perturbation(s0, 1.0, seed);
    const auto F2 = pointwise_norm_F(evaluate_fields(s).gauge);
    for (double v : F2) EXPECT_GE(v, 0.0);
  }
  // a non-real spectrum is reported
  GaugeFields<double> g;
  Mat2d B;
  B(0, 0) = 0;
  B(0, 1) = 1;
  B(1, 0) = -1;
  B(1, 1) = 0;
  g.B = {B};
  EXPECT_THROW(pointwise_norm_F(g), Error);
}

TEST(Gauge, TrivialBundleIsFlat) {
  const PairState s = make_state("trapezoid(1,2)", {}, 1.0 / 16);
  EXPECT_TRUE(s.bundle->is_trivial());
  const auto f = evaluate_fields(s);
  for (int k = 0; k < int(s.size()); ++k) {
    EXPECT_EQ(f.gauge.tr[k], 0.0);
    EXPECT_EQ(f.gauge.det[k], 0.0);
  }
  EXPECT_THROW(BundleData::labels_from_degrees(s.model->polytope(), {1, 2, 3}), Error);
}
