#pragma once

// Seeded smooth perturbations of a state: a few low cosine modes in the
// bounding-box coordinates, with coefficients damped so that the C^2 size of
// the perturbation is at most the requested amplitude.

#include <cmath>
#include <random>
#include <vector>

#include "system.hpp"

namespace kym {

struct PerturbationSpec {
  double amp_phi = 0;  // bound on |D^2 phi|
  double amp_m = 0;    // bound on |D^2 m|
  int modes = 2;
};

inline std::vector<double> smooth_field(const Grid& G, double amp, int modes, std::mt19937_64& rng) {
  std::vector<double> f(G.size(), 0.0);
  if (amp == 0.0) return f;
  const auto lo = G.origin();
  const double W = G.nx() * G.hx(), H = G.ny() * G.hy();
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  // with c = scale / (p^2 + q^2) a mode contributes at most
  // scale pi^2 max(1/W^2, 1/H^2) to any second derivative
  const int count = (modes + 1) * (modes + 1) - 1;
  const double scale = amp / (count * M_PI * M_PI * std::max(1.0, std::max(1 / (W * W), 1 / (H * H))));
  for (int p = 0; p <= modes; ++p)
    for (int q = 0; q <= modes; ++q) {
      if (p + q == 0) continue;
      const double c = U(rng) * scale / (p * p + q * q);
      for (int k = 0; k < int(G.size()); ++k) {
        const double X = (G.x(k).x - lo.x) / W, Y = (G.x(k).y - lo.y) / H;
        f[k] += c * std::cos(M_PI * p * X) * std::cos(M_PI * q * Y);
      }
    }
  return f;
}

inline PairState perturbed(const PairState& s, const PerturbationSpec& spec, std::mt19937_64& rng) {
  PairState t = s;
  const auto dphi = smooth_field(s.grid(), spec.amp_phi, spec.modes, rng);
  const auto dm = smooth_field(s.grid(), spec.amp_m, spec.modes, rng);
  for (std::size_t k = 0; k < s.size(); ++k) {
    t.phi[k] += dphi[k];
    t.m[k] += dm[k];
  }
  return t;
}

}  // namespace kym
