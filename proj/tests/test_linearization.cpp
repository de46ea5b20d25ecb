#include <gtest/gtest.h>

#include <sstream>

#include "common.hpp"

using namespace kymtest;

namespace {

TangentVector direction(const PairState& s) {
  TangentVector v{std::vector<double>(s.size()), std::vector<double>(s.size())};
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto x = s.grid().x(int(k));
    v.phi[k] = std::sin(3 * x.x + x.y * x.y);
    v.m[k] = std::cos(2 * x.x * x.y);
  }
  return v;
}

}  // namespace

// Jacobian columns against central differences of the residual.
TEST(Jacobian, MatchesCentralDifferences) {
  const PairState s = bump(make_state("trapezoid(1,2)", {1, 1}, 1.0 / 8), 0.1, 0.1);
  const Coupling a{1.0, 0.5};
  const auto tc = topo_constants(s, a);
  const auto J = assemble_jacobian(s, a, tc).matrix;
  const int n = int(s.size());
  for (int col : {0, n / 3, n / 2, n + 5, 2 * n - 1}) {
    const double e = 1e-6;
    PairState p = s, m = s;
    (col < n ? p.phi[col] : p.m[col - n]) += e;
    (col < n ? m.phi[col] : m.m[col - n]) -= e;
    const Vec fd = (stack(residual(p, a, tc)) - stack(residual(m, a, tc))) / (2 * e);
    const Vec jc = J.col(col);
    EXPECT_LT((fd - jc).cwiseAbs().maxCoeff(), 1e-5 * std::max(1.0, jc.cwiseAbs().maxCoeff())) << "column " << col;
  }
}

TEST(Jacobian, FdConsistencyIsFirstOrder) {
  const PairState s = bump(product(1, 1, 1.0 / 16), 0.05, 0.05);
  const Coupling a{1.0, 0.5};
  const auto sw = fd_consistency(s, a, topo_constants(s, a), direction(s));
  ASSERT_EQ(sw.ratio.size(), 3u);
  for (std::size_t i = 1; i < 3; ++i) {
    const double q = sw.ratio[i] / sw.ratio[i - 1];
    EXPECT_GT(q, 0.05);
    EXPECT_LT(q, 0.2);
  }
}

TEST(SymmetricForm, SmallAtHYMSolutions) {
  std::vector<double> as;
  for (double h : {1.0 / 16, 1.0 / 32}) {
    const double v = adjoint_check(product(1, 1, h), {1.0, 1.0});
    EXPECT_LE(v, 10 * h);
    as.push_back(v);
  }
  EXPECT_LT(as[1], as[0]);
}

TEST(SymmetricForm, RefusesOffTheHYMLocus) {
  const PairState s = bump(product(1, 1, 1.0 / 16), 0.0, 0.5);
  try {
    (void)adjoint_check(s, {1.0, 1.0});
    FAIL() << "expected NotAtHYM";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NotAtHYM);
  }
  const Coupling a{1.0, 1.0};
  EXPECT_GT(adjoint_asymmetry_unchecked(s, a, topo_constants(s, a)), 0.1);
}

TEST(SymmetricForm, PositiveOnSmoothDirections) {
  const PairState s = product(1, 1, 1.0 / 16);
  const Coupling a{1.0, 0.5};
  const auto tc = topo_constants(s, a);
  const auto J = assemble_jacobian(s, a, tc);
  EXPECT_GT(min_rayleigh_quotient(symmetric_operator(s, a, tc, J.matrix), s.grid()), 0.0);
}

TEST(Jacobian, MatrixDump) {
  const PairState s = product(1, 1, 1.0 / 8);
  const Coupling a{1.0, 0.5};
  const auto J = assemble_jacobian(s, a, topo_constants(s, a)).matrix;
  std::ostringstream out;
  write_matrix(out, J);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line.rfind("# rows ", 0), 0u);
  long entries = 0;
  while (std::getline(in, line)) ++entries;
  EXPECT_EQ(entries, J.nonZeros());
}
