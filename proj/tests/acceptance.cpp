// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include "common.hpp"

using namespace kymtest;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = true;
  std::ostringstream msg;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      msg << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

void report(int id, const std::string& name, const std::function<void(Verdict&)>& body) {
  Verdict v;
  const auto t0 = Clock::now();
  try {
    body(v);
  } catch (const std::exception& e) {
    v.pass = false;
    v.msg << " [exception: " << e.what() << "]";
  }
  if (!v.pass) ++failures;
  std::printf("%s %d %s:%s (%.1f s)\n", v.pass ? "PASS" : "FAIL", id, name.c_str(), v.msg.str().c_str(),
              seconds_since(t0));
  std::fflush(stdout);
}

const std::vector<std::pair<int, int>> kBundles = {{1, 0}, {1, 1}, {1, 2}};

double max_abs_futaki(const PairState& s, const Coupling& a, const TopoConstants& tc) {
  double w = 0;
  for (const auto& f : futaki_suite(s, a, tc)) w = std::max(w, std::abs(f.value));
  return w;
}

void product_oracle(Verdict& v) {
  const Coupling a{1.0, 0.5};
  double worst_time = 0, worst_ratio = 0;
  for (auto [p, q] : kBundles) {
    std::vector<double> res;
    for (double h : {1.0 / 32, 1.0 / 64, 1.0 / 128}) {
      const auto t0 = Clock::now();
      const PairState s = product(p, q, h);
      const auto tc = topo_constants(s, a);
      const auto [rep, sol] = newton_solve(s, a, tc);
      const double r = rep.raw.linf();
      worst_time = std::max(worst_time, seconds_since(t0));
      worst_ratio = std::max(worst_ratio, r / (5 * h * h));
      v.require(rep.converged, "Newton at the product state");
      v.require(r <= 5 * h * h, "residual bound");
      res.push_back(r);
    }
    // observed order; residuals at round-off carry no rate and are reported
    // as exact
    const double floor = 1e-12;
    if (res[0] > floor && res[1] > floor && res[2] > floor) {
      const double order = std::log2(res[1] / res[2]);
      v.require(order >= 1.8, "order");
      v.msg << " O(" << p << "," << q << ") order " << order << ";";
    } else {
      v.msg << " O(" << p << "," << q << ") residuals " << res[0] << " " << res[1] << " " << res[2]
            << " (exact up to round-off);";
    }
  }
  v.require(worst_time <= 10, "runtime");
  v.msg << " max residual/5h^2 " << worst_ratio << ", slowest case " << worst_time << " s";
}

void constants(Verdict& v) {
  const double h = 1.0 / 64;
  double dev = 0, drift = 0;
  for (auto [p, q] : kBundles) {
    for (Coupling a : {Coupling{1.0, 0.5}, Coupling{2.0, 1.5}}) {
      const PairState s = product(p, q, h);
      const auto tc = topo_constants(s, a);
      dev = std::max({dev, std::abs(tc.z - (p + q)), std::abs(tc.c_hat - 2 * p * q), std::abs(tc.S_hat - 4),
                      std::abs(tc.c - (4 * a.alpha0 + 4 * a.alpha1 * p * q))});
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto t = random_perturbation(s, 0.5, seed);
        const auto tt = topo_constants(t, a);
        drift = std::max({drift, std::abs(tt.z - tc.z), std::abs(tt.S_hat - tc.S_hat), std::abs(tt.c_hat - tc.c_hat),
                          std::abs(tt.c - tc.c)});
      }
    }
  }
  v.require(dev <= 1e-3, "closed forms");
  v.require(drift <= 5 * h * h, "invariance");
  v.msg << " max deviation from closed forms " << dev << ", max drift under perturbation " << drift
        << " (tol " << 5 * h * h << ")";
}

void identity(Verdict& v) {
  const double h = 1.0 / 64;
  double flat = 0, pert = 0;
  for (auto [p, q] : kBundles) {
    const PairState s = product(p, q, h);
    const auto tc = topo_constants(s, {1.0, 0.5});
    flat = std::max(flat, identity_check(s, tc));
    for (std::uint64_t seed = 1; seed <= 5; ++seed) pert = std::max(pert, identity_check(random_perturbation(s, 0.5, seed), tc));
  }
  v.require(flat <= 1e-8, "constant states");
  v.require(pert <= 5 * h * h, "perturbed states");
  v.msg << " constant states " << flat << " (tol 1e-8), perturbed " << pert << " (tol " << 5 * h * h << ")";
}

void linearization(Verdict& v) {
  {
    const PairState s = bump(product(1, 1, 1.0 / 32), 0.05, 0.05);
    const Coupling a{1.0, 0.5};
    const auto tc = topo_constants(s, a);
    TangentVector dir{std::vector<double>(s.size()), std::vector<double>(s.size())};
    for (std::size_t k = 0; k < s.size(); ++k) {
      const auto x = s.grid().x(int(k));
      dir.phi[k] = std::sin(3 * x.x + x.y * x.y);
      dir.m[k] = std::cos(2 * x.x * x.y);
    }
    const auto sw = fd_consistency(s, a, tc, dir);
    v.msg << " fd ratios";
    for (double r : sw.ratio) v.msg << " " << r;
    for (std::size_t i = 1; i < sw.ratio.size(); ++i) {
      const double q = sw.ratio[i] / sw.ratio[i - 1];
      v.require(q > 0.05 && q < 0.2, "ratio not linear in eps");
    }
  }
  double worst = 0;
  for (double h : {1.0 / 16, 1.0 / 32, 1.0 / 64})
    for (auto [p, q] : {std::pair{1, 1}, std::pair{1, 2}}) {
      const PairState s = product(p, q, h);
      const double as = adjoint_check(s, {1.0, 1.0});
      worst = std::max(worst, as / (10 * h));
      v.require(as <= 10 * h, "asymmetry at HYM");
    }
  v.msg << "; asymmetry/(10h) at HYM solutions <= " << worst;
  // negative control: off the HYM locus the check refuses, and the
  // underlying asymmetry is of order one
  const PairState s = product(1, 1, 1.0 / 32);
  PairState t = s;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto x = s.grid().x(int(k));
    t.m[k] += 0.5 * std::cos(M_PI * x.x) * std::cos(M_PI * x.y);
    t.phi[k] += 0.01 * std::cos(2 * M_PI * x.x) * std::cos(M_PI * x.y);
  }
  const Coupling a{1.0, 1.0};
  bool refused = false;
  try {
    (void)adjoint_check(t, a);
  } catch (const Error& e) {
    refused = e.code() == ErrorCode::NotAtHYM;
  }
  const double bad = adjoint_asymmetry_unchecked(t, a, topo_constants(t, a));
  v.require(refused, "negative control accepted");
  v.require(bad >= 0.1, "negative control asymmetry small");
  v.msg << "; non-HYM control refused, asymmetry " << bad;
}

void continuation(Verdict& v) {
  const double h = 1.0 / 64;
  const PairState prod = product(1, 0, h);
  const auto t0 = Clock::now();
  ContinuationPath path;
  for (int i = 0; i <= 5; ++i) path.targets.push_back({Coupling{1.0, 0.1 * i}, 1, 1});
  const auto res = continuation_run(path, bump(prod, 0.05, 0.1));
  v.require(res.completed, "path incomplete: " + res.status);
  double worst = 0;
  for (const auto& r : res.reports) {
    v.require(r.converged, "leg not converged");
    worst = std::max(worst, r.raw.linf());
  }
  v.require(worst <= 1e-8, "final residual");
  v.msg << " " << res.reports.size() << " targets, worst final residual " << worst;

  double dist = 0;
  const Coupling a{1.0, 0.5};
  const auto tc = topo_constants(prod, a);
  for (std::uint64_t seed = 11; seed <= 13; ++seed) {
    const auto [rep, sol] = newton_solve(random_perturbation(prod, 0.5, seed), a, tc);
    v.require(rep.converged, "perturbed start did not converge");
    dist = std::max(dist, distance_mod_kernel(sol, prod));
  }
  v.require(dist <= 1e-6, "reconvergence");
  const double secs = seconds_since(t0);
  v.require(secs <= 120, "runtime");
  v.msg << "; perturbed starts end " << dist << " from the product";
}

void futaki_obstruction(Verdict& v) {
  const Coupling a{1.0, 0.0};
  std::vector<double> ext;
  for (double h : {1.0 / 64, 1.0 / 128}) {
    const PairState s = make_state("trapezoid(1,2)", {}, h);
    const auto tc = topo_constants(s, a);
    ext.push_back(futaki_suite(s, a, tc).back().value);
  }
  const double rel = std::abs(ext[1] - ext[0]) / std::abs(ext[1]);
  v.require(ext[0] > 0 && ext[1] > 0, "extremal character not positive");
  v.require(rel <= 0.05, "mesh dependence");
  v.msg << " trapezoid extremal character " << ext[0] << " -> " << ext[1] << " (change " << rel << ")";

  double worst = 0;
  for (auto [p, q] : kBundles)
    for (Coupling c : {Coupling{1.0, 0.0}, Coupling{1.0, 0.5}, Coupling{1.0, 2.0}}) {
      const PairState s = product(p, q, 1.0 / 32);
      const auto tc = topo_constants(s, c);
      const auto [rep, sol] = newton_solve(random_perturbation(s, 0.3, 5), c, tc);
      v.require(rep.converged, "square solve");
      const double scale = tc.vol * std::max(1.0, std::abs(tc.c));
      worst = std::max(worst, max_abs_futaki(sol, c, tc) / scale);
    }
  v.require(worst <= 1e-6, "square Futaki");
  v.msg << "; square solutions |F|/scale <= " << worst;
}

void base_point(Verdict& v) {
  const double h = 1.0 / 64;
  const Coupling a{1.0, 0.5};
  double worst = 0;
  for (auto [model, deg] : {std::pair<std::string, std::vector<int>>{"trapezoid(1,2)", {1, 1}},
                            {"trapezoid(1,2)", {}}, {"square(1)", {1, 2}}}) {
    const PairState s = make_state(model, deg, h);
    const auto s1 = random_perturbation(s, 0.5, 21);
    const auto s2 = random_perturbation(s, 0.5, 22);
    for (Vec2d d : {Vec2d{1, 0}, Vec2d{0, 1}}) {
      const auto z = ToricVectorField::normalized(*s.model, *s.bundle, d);
      worst = std::max(worst, base_point_independence(s1, s2, a, z));
    }
  }
  v.require(worst <= 1e-4, "drift");
  v.msg << " max drift " << worst << " (tol 1e-4)";
}

void variational(Verdict& v) {
  int cases = 0;
  double margin = INFINITY;
  for (auto [p, q] : kBundles)
    for (double a1 : {0.5, 2.0, 5.0}) {
      const Coupling a{1.0, a1};
      const PairState s = product(p, q, 1.0 / 32);
      const auto tc = topo_constants(s, a);
      if (!minimality_condition(a, tc)) continue;
      ++cases;
      const double E = cym_functional(s, a);
      for (std::uint64_t seed = 100; seed < 120; ++seed)
        margin = std::min(margin, cym_functional(random_perturbation(s, 0.05, seed), a) - E);
    }
  v.require(cases > 0, "no case satisfies the minimality condition");
  v.require(margin >= 0, "perturbation below the solution value");
  v.msg << " " << cases << " solutions x 20 perturbations, min CYM excess " << margin;

  const Coupling a{1.0, 2.0};
  const PairState s = product(1, 1, 1.0 / 16);
  const auto tc = topo_constants(s, a);
  const double E = cym_functional(s, a);
  FlowOptions fo;
  fo.max_steps = 300;
  const auto fr = gradient_flow(random_perturbation(s, 0.2, 7), a, tc, fo);
  bool mono = true;
  for (std::size_t i = 1; i < fr.values.size(); ++i) mono = mono && fr.values[i] <= fr.values[i - 1];
  const double gap = fr.values.back() - E;
  v.require(mono, "flow not monotone");
  v.require(fr.status == "stationary", "flow did not terminate");
  v.require(std::abs(gap) <= 1e-4, "flow end value");
  v.msg << "; flow " << fr.values.front() << " -> " << fr.values.back() << " in " << fr.values.size() - 1
        << " steps (solution " << E << ")";
}

void geodesic(Verdict& v) {
  const double h = 1.0 / 64;
  const Coupling a{1.0, 1.0};
  double worst_fv = 0;
  for (auto [p, q] : {std::pair{1, 1}, std::pair{1, 2}}) {
    const PairState s = product(p, q, h);
    const auto tc = topo_constants(s, a);
    const auto path = coupled_geodesic(random_perturbation(s, 0.5, 31), random_perturbation(s, 0.5, 32), 65);
    const auto rep = convexity_report(path, a, tc);
    const double fv = std::abs(rep.slope_fd - rep.slope_direct) / std::max(1.0, std::abs(rep.slope_direct));
    worst_fv = std::max(worst_fv, fv);
    v.require(rep.pass, "convexity");
    v.require(fv <= 1e-3, "first variation");
    v.msg << " O(" << p << "," << q << ") min second difference " << rep.min_second_difference << " (tol "
          << -1e-6 * (rep.range + 1) << ");";
  }
  v.msg << " first variation mismatch " << worst_fv;
}

}  // namespace

int main() {
  report(1, "product oracle", product_oracle);
  report(2, "topological constants", constants);
  report(3, "curvature identity", identity);
  report(4, "linearization", linearization);
  report(5, "Newton and continuation", continuation);
  report(6, "Futaki obstruction", futaki_obstruction);
  report(7, "base-point independence", base_point);
  report(8, "variational characterization", variational);
  report(9, "geodesic convexity", geodesic);
  std::printf("NOTE 10 no quantitative tables exist to reproduce; criteria 1-9 are the full surface\n");
  return failures == 0 ? 0 : 1;
}
