#pragma once

// Damped Newton on the discrete system, continuation in (alpha, class) and a
// preconditioned descent flow for the Calabi-Yang-Mills functional.

#include <Eigen/SparseCholesky>
#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "invariants.hpp"
#include "linearization.hpp"
#include "system.hpp"

namespace kym {

struct NewtonOptions {
  int max_iter = 30;
  double tol_linf = 1e-8;
  double tol_l2 = 1e-9;
  // affine part of the scalar residual tolerated at convergence (the
  // discrete Futaki defect of a solvable class is O(h^2))
  double obstruction_tol = 1e-4;
  double min_step = 1.0 / 1024;
};

struct FutakiValue {
  std::string name;
  double value = 0;
};

struct SolveReport {
  bool converged = false;
  std::string status = "not-run";
  int iterations = 0;
  ResidualNorms raw;         // residual with the constants held fixed
  double projected_linf = 0; // after removing the kernel co-directions
  double projected_l2 = 0;
  std::array<double, 4> multipliers{};  // (mean, x, y) of the scalar row, mean of the hym row
  std::vector<double> history_linf, history_l2, steps;
  std::vector<FutakiValue> futaki;
  TopoConstants tc;
  Coupling alpha;
  double scale_a = 1, scale_b = 1;
};

namespace detail {

// W-orthonormal basis of the co-directions: {1, x, y} on the scalar block,
// {1} on the hym block, as columns of a dense (2n x 4) matrix.
inline Eigen::MatrixXd codirections(const Grid& G) {
  const int n = int(G.size());
  Eigen::MatrixXd E = Eigen::MatrixXd::Zero(2 * n, 4);
  for (int k = 0; k < n; ++k) {
    E(k, 0) = 1.0;
    E(k, 1) = G.x(k).x;
    E(k, 2) = G.x(k).y;
    E(n + k, 3) = 1.0;
  }
  const Vec w = stacked_weights(G);
  for (int c = 0; c < 4; ++c) {
    for (int p = 0; p < c; ++p) E.col(c) -= (E.col(c).array() * E.col(p).array() * w.array()).sum() * E.col(p);
    E.col(c) /= std::sqrt((E.col(c).array().square() * w.array()).sum());
  }
  return E;
}

struct Projected {
  Vec r;                    // residual with co-direction components removed
  std::array<double, 4> c;  // removed coefficients (in the orthonormal basis)
};

inline Projected project(const Vec& r, const Eigen::MatrixXd& E, const Vec& w) {
  Projected p{r, {}};
  for (int c = 0; c < 4; ++c) {
    p.c[c] = (r.array() * E.col(c).array() * w.array()).sum();
    p.r -= p.c[c] * E.col(c);
  }
  return p;
}

inline double linf(const Vec& v) { return v.size() ? v.cwiseAbs().maxCoeff() : 0.0; }

inline double l2(const Vec& v, const Vec& w) { return std::sqrt((v.array().square() * w.array()).sum() / (w.sum() / 2)); }

inline std::optional<Residual<double>> try_residual(const PairState& s, const Coupling& a, const TopoConstants& tc) {
  try {
    return residual(s, a, tc);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::NotPositiveDefinite) return std::nullopt;
    throw;
  }
}

// Unknowns pinned to make the Jacobian invertible: phi at three
// non-collinear nodes and m at one.  The same indices pick the rows.
inline std::array<int, 4> pin_indices(const Grid& G) {
  const int n = int(G.size());
  int a = 0, b = 0, c = 0;
  for (int k = 0; k < n; ++k) {
    const auto x = G.x(k), xa = G.x(a), xb = G.x(b), xc = G.x(c);
    if (x.x + x.y < xa.x + xa.y) a = k;
    if (x.x - x.y > xb.x - xb.y) b = k;
    if (x.y - x.x > xc.y - xc.x) c = k;
  }
  return {a, b, c, n + a};
}

// Solves [J E; E^T W 0] [dv; lambda] = [-r; 0] without forming the dense
// border: J + P Q^T (P, Q unit columns at the pinned indices) is sparse and
// invertible, and the border plus the pin correction reduce to an 8x8 system.
inline Vec bordered_solve(const SpMat& J, const Eigen::MatrixXd& E, const Vec& w, const std::array<int, 4>& pins,
                          const Vec& r) {
  const int N = int(J.rows());
  double scale = 0;
  for (int c = 0; c < J.outerSize(); ++c)
    for (SpMat::InnerIterator it(J, c); it; ++it) scale = std::max(scale, std::abs(it.value()));
  SpMat Jt = J;
  for (int p : pins) Jt.coeffRef(p, p) += scale;
  Jt.makeCompressed();
  Eigen::SparseLU<SpMat, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(Jt);
  if (lu.info() != Eigen::Success)
    throw Error(ErrorCode::SingularJacobian, "Newton matrix could not be factored: " + lu.lastErrorMessage());
  Eigen::MatrixXd rhs(N, 9);
  rhs.col(0) = -r;
  for (int c = 0; c < 4; ++c) {
    rhs.col(1 + c) = Vec::Zero(N);
    rhs(pins[c], 1 + c) = scale;
    rhs.col(5 + c) = E.col(c);
  }
  const Eigen::MatrixXd Y = lu.solve(rhs);
  if (!Y.allFinite()) throw Error(ErrorCode::SingularJacobian, "non-finite Newton update");
  // dv = y + Y_P mu - Y_E lambda with mu = Q^T dv and E^T W dv = 0
  Eigen::MatrixXd A(8, 8);
  Eigen::VectorXd b(8);
  const Eigen::MatrixXd EW = E.transpose() * w.asDiagonal();
  for (int c = 0; c < 4; ++c) {
    for (int d = 0; d < 4; ++d) {
      A(c, d) = Y(pins[c], 1 + d) - (c == d ? 1.0 : 0.0);
      A(c, 4 + d) = -Y(pins[c], 5 + d);
    }
    b(c) = -Y(pins[c], 0);
  }
  A.bottomLeftCorner(4, 4) = EW * Y.middleCols(1, 4);
  A.bottomRightCorner(4, 4) = -EW * Y.middleCols(5, 4);
  b.tail(4) = -EW * Y.col(0);
  const Eigen::VectorXd ml = A.fullPivLu().solve(b);
  if (!ml.allFinite()) throw Error(ErrorCode::SingularJacobian, "singular border system");
  return Y.col(0) + Y.middleCols(1, 4) * ml.head(4) - Y.middleCols(5, 4) * ml.tail(4);
}

}  // namespace detail

inline std::vector<FutakiValue> futaki_suite(const PairState& s, const Coupling& a, const TopoConstants& tc) {
  const auto f = evaluate_fields(s);
  std::vector<FutakiValue> out;
  const std::pair<const char*, Vec2d> gens[] = {{"e1", {1, 0}}, {"e2", {0, 1}}};
  for (const auto& [name, dir] : gens)
    out.push_back({name, futaki(f, s.grid(), a, tc, ToricVectorField::normalized(*s.model, *s.bundle, dir))});
  const auto ext = extremal_field(s, a, tc);
  out.push_back({"extremal", futaki(f, s.grid(), a, tc, ext)});
  return out;
}

// Newton on [J E; E^T W 0] [dv; lambda] = [-r; 0].  E spans the co-directions,
// the constraint rows keep the update W-orthogonal to the kernel (affine phi,
// constant m).  At a fixed point r lies in span(E); its affine part is the
// obstruction diagnostic.
inline std::pair<SolveReport, PairState> newton_solve(const PairState& initial, const Coupling& a,
                                                      const TopoConstants& tc, const NewtonOptions& opts = {}) {
  SolveReport rep;
  rep.tc = tc;
  rep.alpha = a;
  rep.scale_a = initial.scale_a;
  rep.scale_b = initial.scale_b;
  PairState s = initial;
  const Grid& G = s.grid();
  const int n = int(s.size());
  const Vec w = stacked_weights(G);
  const Eigen::MatrixXd E = detail::codirections(G);

  const auto pins = detail::pin_indices(G);
  auto r0 = detail::try_residual(s, a, tc);
  if (!r0) throw Error(ErrorCode::LeftKaehlerCone, "initial state is not metric-positive");
  Vec r = stack(*r0);

  for (int it = 0;; ++it) {
    const auto pr = detail::project(r, E, w);
    rep.iterations = it;
    rep.projected_linf = detail::linf(pr.r);
    rep.projected_l2 = detail::l2(pr.r, w);
    rep.multipliers = pr.c;
    rep.history_linf.push_back(rep.projected_linf);
    rep.history_l2.push_back(rep.projected_l2);
    if (rep.projected_linf <= opts.tol_linf && rep.projected_l2 <= opts.tol_l2) {
      const double affine = std::hypot(pr.c[1], pr.c[2]);
      rep.converged = affine <= opts.obstruction_tol;
      rep.status = rep.converged ? "converged" : "obstructed";
      break;
    }
    if (it >= opts.max_iter) {
      rep.status = "max-iterations";
      break;
    }

    const auto J = assemble_jacobian(s, a, tc).matrix;
    const Vec dv = detail::bordered_solve(J, E, w, pins, r);

    // backtracking on the projected residual, positivity enforced by damping
    const double merit0 = detail::l2(pr.r, w);
    double step = 1.0;
    bool positivity_only = true;
    bool accepted = false;
    while (step >= opts.min_step) {
      PairState t = s;
      for (int k = 0; k < n; ++k) {
        t.phi[k] += step * dv[k];
        t.m[k] += step * dv[n + k];
      }
      auto rt = detail::try_residual(t, a, tc);
      if (rt) {
        positivity_only = false;
        const Vec vt = stack(*rt);
        const double merit = detail::l2(detail::project(vt, E, w).r, w);
        if (merit <= (1 - 1e-4 * step) * merit0 || merit <= opts.tol_l2) {
          s = std::move(t);
          r = vt;
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (positivity_only)
        throw Error(ErrorCode::LeftKaehlerCone, "every damped Newton step leaves the Kaehler cone");
      rep.status = "line-search-stalled";
      break;
    }
    rep.steps.push_back(step);
  }
  {
    const auto rr = residual(s, a, tc);
    rep.raw = residual_norms(rr, G);
  }
  rep.futaki = futaki_suite(s, a, tc);
  return {rep, s};
}

// Class deformation: the polygon and grid are stretched by (a, b) while the
// lattice stays the same, so fields transport node by node.
class ModelFamily {
 public:
  ModelFamily(Polytope base, double hx, double hy, std::vector<int> labels)
      : base_(std::move(base)), hx_(hx), hy_(hy), labels_(std::move(labels)) {}

  static ModelFamily of(const PairState& s) {
    const auto& P = s.model->polytope();
    // undo the class scale the state carries
    return ModelFamily(P.scaled(1.0 / s.scale_a, 1.0 / s.scale_b), s.grid().hx() / s.scale_a,
                       s.grid().hy() / s.scale_b, s.bundle->labels());
  }

  std::pair<std::shared_ptr<const ToricModel>, std::shared_ptr<const BundleData>> at(double a, double b) {
    const auto key = std::make_pair(a, b);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const Polytope P = base_.scaled(a, b);
    auto M = std::make_shared<const ToricModel>(P, Grid::build_lattice(P, hx_ * a, hy_ * b));
    auto B = std::make_shared<const BundleData>(*M, labels_);
    cache_[key] = {M, B};
    return {M, B};
  }

  PairState transport(const PairState& s, double a, double b) {
    auto [M, B] = at(a, b);
    if (M->size() != s.size()) throw Error(ErrorCode::ShapeMismatch, "class deformation changed the lattice");
    PairState t = s;
    t.model = M;
    t.bundle = B;
    // phi and m are carried along node by node; the reference parts follow
    // the polygon
    t.scale_a = a;
    t.scale_b = b;
    return t;
  }

 private:
  Polytope base_;
  double hx_, hy_;
  std::vector<int> labels_;
  std::map<std::pair<double, double>, std::pair<std::shared_ptr<const ToricModel>, std::shared_ptr<const BundleData>>>
      cache_;
};

struct ContinuationTarget {
  Coupling alpha;
  double scale_a = 1, scale_b = 1;
};

struct ContinuationPath {
  std::vector<ContinuationTarget> targets;
  double max_step = 1.0;   // fraction of a leg attempted at once
  double shrink = 0.5;
  double grow = 2.0;
  double min_step = 1.0 / 64;
  double futaki_threshold = 1e-2;
  NewtonOptions newton;
};

struct ContinuationResult {
  std::vector<SolveReport> reports;  // one per target
  PairState last_good;
  bool completed = false;
  std::string status;
};

inline ContinuationResult continuation_run(const ContinuationPath& path, const PairState& seed) {
  if (path.targets.empty()) throw Error(ErrorCode::InvalidConfig, "continuation path has no targets");
  ModelFamily fam = ModelFamily::of(seed);
  ContinuationResult out;

  auto solve_at = [&](const PairState& warm, const ContinuationTarget& t) {
    PairState s = fam.transport(warm, t.scale_a, t.scale_b);
    const auto [M, B] = fam.at(t.scale_a, t.scale_b);
    const auto tc = topo_constants(PairState::reference(M, B), t.alpha);
    return newton_solve(s, t.alpha, tc, path.newton);
  };

  // the seed has to solve the first target
  auto [rep0, s0] = solve_at(seed, path.targets[0]);
  out.reports.push_back(rep0);
  if (!rep0.converged) {
    out.last_good = seed;
    out.status = "seed does not solve the first target";
    return out;
  }
  PairState cur = s0;
  ContinuationTarget prev = path.targets[0];

  for (std::size_t leg = 1; leg < path.targets.size(); ++leg) {
    const ContinuationTarget goal = path.targets[leg];
    double done = 0.0, step = path.max_step;
    SolveReport last;
    while (done < 1.0) {
      const double f = std::min(1.0, done + step);
      ContinuationTarget mid;
      mid.alpha.alpha0 = prev.alpha.alpha0 + f * (goal.alpha.alpha0 - prev.alpha.alpha0);
      mid.alpha.alpha1 = prev.alpha.alpha1 + f * (goal.alpha.alpha1 - prev.alpha.alpha1);
      mid.scale_a = prev.scale_a + f * (goal.scale_a - prev.scale_a);
      mid.scale_b = prev.scale_b + f * (goal.scale_b - prev.scale_b);

      // obstruction check on the warm start (the character is independent of it)
      {
        PairState w = fam.transport(cur, mid.scale_a, mid.scale_b);
        const auto [M, B] = fam.at(mid.scale_a, mid.scale_b);
        const auto tc = topo_constants(PairState::reference(M, B), mid.alpha);
        const auto fu = futaki_suite(w, mid.alpha, tc);
        double worst = 0;
        for (const auto& v : fu) worst = std::max(worst, std::abs(v.value));
        if (worst > path.futaki_threshold) {
          last.status = "obstructed";
          last.futaki = fu;
          last.alpha = mid.alpha;
          last.scale_a = mid.scale_a;
          last.scale_b = mid.scale_b;
          out.reports.push_back(last);
          out.last_good = cur;
          out.status = "leg " + std::to_string(leg) + " aborted: Futaki character above threshold";
          return out;
        }
      }

      std::optional<std::pair<SolveReport, PairState>> res;
      try {
        res = solve_at(cur, mid);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::LeftKaehlerCone && e.code() != ErrorCode::SingularJacobian) throw;
      }
      if (res && res->first.converged) {
        cur = res->second;
        last = res->first;
        done = f;
        step = std::min(path.max_step, step * path.grow);
      } else {
        step *= path.shrink;
        if (step < path.min_step) {
          if (res) out.reports.push_back(res->first);
          out.last_good = cur;
          out.status = "StepUnderflow on leg " + std::to_string(leg);
          return out;
        }
      }
    }
    out.reports.push_back(last);
    prev = goal;
  }
  out.last_good = cur;
  out.completed = true;
  out.status = "completed";
  return out;
}

struct FlowOptions {
  int max_steps = 100;
  double dt = 1.0;
  double dt_max = 1.0;
  double dt_min = 1e-10;
  double grad_tol = 1e-12;  // predicted decrease below which the state is stationary
};

struct FlowResult {
  std::vector<PairState> trajectory;
  std::vector<double> values;
  std::vector<double> dts;
  int rejected = 0;
  std::string status;  // "stationary" or "step-budget-exhausted"
};

// Value and Euclidean gradient of the discrete functional.
inline std::pair<double, Vec> cym_value_gradient(const PairState& s, const Coupling& a) {
  const int n = int(s.size());
  const auto f = dual_fields(s);
  const SparseDual E = cym_from_fields(f, s.grid(), a);
  Vec g = Vec::Zero(2 * n);
  for (const auto& e : E.derivative()) g[e.index] = e.value;
  return {E.value(), g};
}

// Gauss-Newton metric of the functional.  With the topological integrals
// fixed, CYM = |R1|^2 + |R2|^2 + const in the normalized quadrature norm, where
//
//   R1 = S - alpha |F|^2 - c''/alpha0,   R2 = sqrt(K) (tr B - z),
//   c'' = alpha0 S_hat + 2 alpha1 (c_hat - z^2),
//   K = alpha1 - 2 alpha S_hat - 2 alpha^2 (c_hat - z^2).
//
// P = 2 J_R^T W J_R / vol is then the Hessian at a solution.  When K <= 0 the
// residual Jacobian of the equations is used instead.
inline SpMat flow_metric(const PairState& s, const Coupling& a, const TopoConstants& tc) {
  const int n = int(s.size());
  const auto f = dual_fields(s);
  const double alpha = 2 * a.alpha1 / a.alpha0;
  const double K = a.alpha1 - 2 * alpha * tc.S_hat - 2 * alpha * alpha * (tc.c_hat - tc.z * tc.z);
  SpMat JR;
  if (K > 0) {
    const double c2 = a.alpha0 * tc.S_hat + 2 * a.alpha1 * (tc.c_hat - tc.z * tc.z);
    Residual<SparseDual> R;
    R.scalar.resize(n);
    R.hym.resize(n);
    const double sk = std::sqrt(K);
    for (int k = 0; k < n; ++k) {
      const SparseDual& t = f.gauge.tr[k];
      R.scalar[k] = f.metric.S[k] - alpha * (t * t - 2.0 * f.gauge.det[k]) - c2 / a.alpha0;
      R.hym[k] = sk * (t - tc.z);
    }
    JR = jacobian_from(R, n);
  } else {
    JR = jacobian_from(residual_from_fields(f, a, tc), n);
  }
  const Vec w = stacked_weights(s.grid());
  SpMat P = SpMat(JR.transpose()) * w.asDiagonal() * JR;
  P *= 2.0 / tc.vol;
  return P;
}

// Explicit Euler on vdot = -P^{-1} grad CYM with P the Gauss-Newton metric
// above (plus a small multiple of W on the kernel).  dt adapts so that the
// functional never increases.
inline FlowResult gradient_flow(const PairState& initial, const Coupling& a, const TopoConstants& tc,
                                const FlowOptions& opts = {}) {
  FlowResult out;
  PairState s = initial;
  const int n = int(s.size());
  const Vec w = stacked_weights(s.grid());
  double E = cym_functional(s, a);
  out.trajectory.push_back(s);
  out.values.push_back(E);
  double dt = opts.dt;
  for (int step = 0; step < opts.max_steps; ++step) {
    auto [E0, g] = cym_value_gradient(s, a);
    SpMat P = flow_metric(s, a, tc);
    double pmax = 0;
    for (int k = 0; k < P.outerSize(); ++k) pmax = std::max(pmax, P.coeff(k, k));
    const double mu = 1e-10 * pmax / w.maxCoeff();
    for (int k = 0; k < 2 * n; ++k) P.coeffRef(k, k) += mu * w[k];
    Eigen::SimplicialLDLT<SpMat> chol(P);
    if (chol.info() != Eigen::Success) throw Error(ErrorCode::SingularJacobian, "flow metric is not positive");
    const Vec d = -chol.solve(g);
    const double decrement = -g.dot(d);
    if (decrement <= opts.grad_tol * std::max(1.0, std::abs(E0))) {
      out.status = "stationary";
      return out;
    }
    bool accepted = false;
    while (dt >= opts.dt_min) {
      PairState t = s;
      for (int k = 0; k < n; ++k) {
        t.phi[k] += dt * d[k];
        t.m[k] += dt * d[n + k];
      }
      std::optional<double> Et;
      try {
        Et = cym_functional(t, a);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NotPositiveDefinite) throw;
      }
      if (Et && *Et <= E0) {
        s = std::move(t);
        E = *Et;
        accepted = true;
        break;
      }
      ++out.rejected;
      dt *= 0.5;
    }
    if (!accepted) {
      // no decrease possible at any admissible step: round-off stationary
      out.status = "stationary";
      return out;
    }
    out.trajectory.push_back(s);
    out.values.push_back(E);
    out.dts.push_back(dt);
    dt = std::min(opts.dt_max, dt * 2);
  }
  out.status = "step-budget-exhausted";
  return out;
}

}  // namespace kym
