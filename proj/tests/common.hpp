#pragma once

// Shared fixtures and independent oracles for the tests.

#include <cmath>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <kym/kym.hpp>

namespace kymtest {

using namespace kym;

inline PairState make_state(const std::string& model, std::vector<int> degrees, double h) {
  const Polytope P = Polytope::named(model);
  auto M = ToricModel::make(P, h);
  auto B = degrees.empty() ? std::make_shared<const BundleData>(BundleData::trivial(*M))
                           : std::make_shared<const BundleData>(*M, BundleData::labels_from_degrees(P, degrees));
  return PairState::reference(M, B);
}

inline PairState product(int p, int q, double h) { return make_state("square(1)", {p, q}, h); }

inline PairState random_perturbation(const PairState& s, double amp, std::uint64_t seed, double amp_m = -1) {
  std::mt19937_64 rng(seed);
  return perturbed(s, {amp, amp_m < 0 ? amp : amp_m, 2}, rng);
}

// Fixed smooth perturbation, independent of the library generator.
inline PairState bump(const PairState& s, double aphi, double am) {
  PairState t = s;
  const auto lo = s.grid().origin();
  for (std::size_t k = 0; k < s.size(); ++k) {
    const double x = s.grid().x(int(k)).x - lo.x, y = s.grid().x(int(k)).y - lo.y;
    t.phi[k] += aphi * std::cos(M_PI * x) * std::cos(M_PI * y) / (M_PI * M_PI);
    t.m[k] += am * std::sin(M_PI * x) * std::cos(2 * M_PI * y);
  }
  return t;
}

// max-norm distance between two states after removing the kernel (affine
// phi, constant m) from the difference
inline double distance_mod_kernel(const PairState& a, const PairState& b) {
  const Grid& G = a.grid();
  const int n = int(a.size());
  std::vector<double> dp(n), dm(n);
  for (int k = 0; k < n; ++k) {
    dp[k] = a.phi[k] - b.phi[k];
    dm[k] = a.m[k] - b.m[k];
  }
  const auto fit = affine_fit(G, dp);
  double mean = integrate(dm, G) / integrate(std::vector<double>(n, 1.0), G);
  double d = 0;
  for (int k = 0; k < n; ++k) {
    d = std::max(d, std::abs(dp[k] - fit[0] - fit[1] * G.x(k).x - fit[2] * G.x(k).y));
    d = std::max(d, std::abs(dm[k] - mean));
  }
  return d;
}

// Exact polygon integrals of affine functions: area, first moments and the
// lattice boundary measure (facet length divided by |normal|).
struct PolygonMoments {
  double area = 0, mx = 0, my = 0;        // int 1, int x, int y
  double perimeter = 0, bx = 0, by = 0;   // int_dP 1, x, y with the lattice measure
};

inline PolygonMoments polygon_moments(const Polytope& P) {
  PolygonMoments m;
  const auto& V = P.vertices();
  const std::size_t k = V.size();
  for (std::size_t i = 0; i < k; ++i) {
    const auto& a = V[i];
    const auto& b = V[(i + 1) % k];
    const double cr = a.x * b.y - b.x * a.y;
    m.area += cr / 2;
    m.mx += (a.x + b.x) * cr / 6;
    m.my += (a.y + b.y) * cr / 6;
  }
  for (std::size_t i = 0; i < P.num_facets(); ++i) {
    const auto [a, b] = P.facet_segment(i);
    const auto& nu = P.facets()[i].normal;
    const double len = std::hypot(b.x - a.x, b.y - a.y) / std::hypot(double(nu[0]), double(nu[1]));
    m.perimeter += len;
    m.bx += len * (a.x + b.x) / 2;
    m.by += len * (a.y + b.y) / 2;
  }
  return m;
}

// Futaki character of the reference metric, trivial bundle, alpha1 = 0, on
// the generator with Hamiltonian <dir, x> (mean removed):
//   F = int_dP f dsigma - S_hat int_P f,  S_hat = perimeter / area.
inline double futaki_oracle(const Polytope& P, double ax, double ay) {
  const auto m = polygon_moments(P);
  const double mean = (ax * m.mx + ay * m.my) / m.area;
  const double boundary = ax * m.bx + ay * m.by - mean * m.perimeter;
  return boundary;  // int_P f = 0 after removing the mean
}

}  // namespace kymtest
