#include "commands.hpp"

#include <json.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>

#include "config.hpp"

namespace kym::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

fs::path out_dir(const Options& o) {
  fs::path p(o.out);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw Error(ErrorCode::InvalidConfig, "cannot create output directory " + o.out);
  return p;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::InvalidConfig, "cannot write " + path.string());
  f << j.dump(2) << "\n";
}

RunConfig config_for(const Options& o) {
  if (o.config.empty()) throw Error(ErrorCode::InvalidConfig, "--config is required");
  RunConfig c = load_config(o.config);
  if (o.grid) {
    if (*o.grid < 4) throw Error(ErrorCode::InvalidConfig, "--grid must be at least 4");
    c.grid = *o.grid;
  }
  if (o.seed) c.seed = *o.seed;
  if (o.tol) {
    if (!(*o.tol > 0)) throw Error(ErrorCode::InvalidConfig, "--tol must be positive");
    c.newton.tol_linf = *o.tol;
    c.newton.tol_l2 = std::min(c.newton.tol_l2, *o.tol);
  }
  return c;
}

struct Setup {
  std::shared_ptr<const ToricModel> model;
  std::shared_ptr<const BundleData> bundle;
  PairState reference;
  PairState start;
};

Setup setup_for(const RunConfig& c) {
  Setup s;
  const Polytope P = c.polytope();
  s.model = ToricModel::make(P, c.h());
  s.bundle = std::make_shared<const BundleData>(*s.model, c.bundle_labels(P));
  s.reference = PairState::reference(s.model, s.bundle);
  std::mt19937_64 rng(c.seed);
  s.start = perturbed(s.reference, c.perturbation, rng);
  return s;
}

double grid_h(const Grid& G) { return std::max(G.hx(), G.hy()); }

json constants_json(const TopoConstants& tc) {
  return {{"z", tc.z}, {"S_hat", tc.S_hat}, {"c_hat", tc.c_hat}, {"c", tc.c}, {"volume", tc.vol}};
}

json norms_json(const ResidualNorms& n) {
  return {{"hym_linf", n.hym_linf}, {"hym_l2", n.hym_l2}, {"scalar_linf", n.scalar_linf}, {"scalar_l2", n.scalar_l2}};
}

json futaki_json(const std::vector<FutakiValue>& fv) {
  json j = json::object();
  for (const auto& v : fv) j[v.name] = v.value;
  return j;
}

json model_json(const PairState& s) {
  const auto& G = s.grid();
  return {{"polytope", s.model->polytope().name()},
          {"labels", s.bundle->labels()},
          {"hx", G.hx()},
          {"hy", G.hy()},
          {"nodes", G.size()},
          {"scale", {s.scale_a, s.scale_b}}};
}

json report_json(const SolveReport& r) {
  return {{"converged", r.converged},
          {"status", r.status},
          {"iterations", r.iterations},
          {"coupling", {{"alpha0", r.alpha.alpha0}, {"alpha1", r.alpha.alpha1}}},
          {"scale", {r.scale_a, r.scale_b}},
          {"residual", norms_json(r.raw)},
          {"projected_linf", r.projected_linf},
          {"projected_l2", r.projected_l2},
          {"multipliers", r.multipliers},
          {"constants", constants_json(r.tc)},
          {"futaki", futaki_json(r.futaki)}};
}

json header(const std::string& command, const Options& o) {
  json j;
  j["command"] = command;
  j["timestamp"] = timestamp();
  if (!o.config.empty()) j["config"] = o.config;
  return j;
}

// the class scale a state file carries is undone by ModelFamily; coupling
// comes from the file unless the config overrides it
LoadedState state_from(const std::string& path) {
  if (path.empty()) throw Error(ErrorCode::InvalidConfig, "a state file is required");
  return load_state(path);
}

}  // namespace

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::NotPositiveDefinite:
    case ErrorCode::NegativeNorm:
    case ErrorCode::LeftKaehlerCone:
    case ErrorCode::SingularJacobian:
    case ErrorCode::StepUnderflow:
    case ErrorCode::LeavesCone:
      return kNotConverged;
    default:
      return kInvalidInput;
  }
}

int guarded(int (*cmd)(const Options&, std::ostream&), const Options& o, std::ostream& log) {
  json rec;
  int code = kInvalidInput;
  try {
    return cmd(o, log);
  } catch (const Error& e) {
    rec["error"] = {{"code", std::string(to_string(e.code()))}, {"message", e.what()}};
    if (e.node() >= 0) rec["error"]["node"] = e.node();
    code = exit_code_for(e.code());
  } catch (const std::exception& e) {
    rec["error"] = {{"code", "InvalidConfig"}, {"message", e.what()}};
  }
  rec["exit_code"] = code;
  log << rec.dump() << "\n";
  std::error_code ec;
  if (fs::is_directory(o.out, ec)) {
    std::ofstream f(fs::path(o.out) / "error.json");
    if (f) f << rec.dump(2) << "\n";
  }
  return code;
}

int cmd_solve(const Options& o, std::ostream& log) {
  const RunConfig c = config_for(o);
  const Coupling a = c.coupling();
  const Setup s = setup_for(c);
  const auto dir = out_dir(o);
  const auto tc = topo_constants(s.reference, a);

  const auto t0 = std::chrono::steady_clock::now();
  auto [rep, sol] = newton_solve(s.start, a, tc, c.newton);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  save_state((dir / "state.kym").string(), sol, a);
  json j = header("solve", o);
  j["seed"] = c.seed;
  j["model"] = model_json(sol);
  j.update(report_json(rep));
  write_json(dir / "report.json", j);
  {
    std::ofstream h(dir / "history.csv");
    h << "iteration,projected_linf,projected_l2,step\n";
    for (std::size_t i = 0; i < rep.history_linf.size(); ++i) {
      h << i << "," << format_double(rep.history_linf[i]) << "," << format_double(rep.history_l2[i]) << ",";
      if (i < rep.steps.size()) h << format_double(rep.steps[i]);
      h << "\n";
    }
  }
  log << "solve: " << rep.status << " after " << rep.iterations << " iterations, residual "
      << rep.raw.linf() << " (" << std::fixed << std::setprecision(2) << secs << " s)\n"
      << std::defaultfloat;
  return rep.converged ? kSuccess : kNotConverged;
}

int cmd_continue(const Options& o, std::ostream& log) {
  const RunConfig c = config_for(o);
  if (c.cont_alpha1.empty()) throw Error(ErrorCode::InvalidConfig, "missing key continuation.alpha1");
  const Setup s = setup_for(c);
  const auto dir = out_dir(o);

  ContinuationPath path;
  path.max_step = c.cont_max_step;
  path.min_step = c.cont_min_step;
  path.futaki_threshold = c.futaki_threshold;
  path.newton = c.newton;
  const double a0 = c.alpha ? c.alpha->alpha0 : 1.0;
  for (std::size_t i = 0; i < c.cont_alpha1.size(); ++i) {
    ContinuationTarget t;
    t.alpha = {c.cont_alpha0.empty() ? a0 : c.cont_alpha0[i], c.cont_alpha1[i]};
    if (!(t.alpha.alpha0 > 0)) throw Error(ErrorCode::InvalidConfig, "continuation.alpha0 must be positive");
    t.scale_a = c.cont_scale_a.empty() ? 1.0 : c.cont_scale_a[i];
    t.scale_b = c.cont_scale_b.empty() ? 1.0 : c.cont_scale_b[i];
    path.targets.push_back(t);
  }
  const auto res = continuation_run(path, s.start);

  Coupling last = path.targets.front().alpha;
  for (const auto& r : res.reports)
    if (r.converged) last = r.alpha;
  save_state((dir / "state.kym").string(), res.last_good, last);

  json j = header("continue", o);
  j["seed"] = c.seed;
  j["model"] = model_json(s.reference);
  j["completed"] = res.completed;
  j["status"] = res.status;
  j["legs"] = json::array();
  for (const auto& r : res.reports) j["legs"].push_back(report_json(r));
  write_json(dir / "report.json", j);
  {
    std::ofstream h(dir / "history.csv");
    h << "leg,alpha0,alpha1,scale_a,scale_b,status,iterations,residual_linf,projected_linf\n";
    for (std::size_t i = 0; i < res.reports.size(); ++i) {
      const auto& r = res.reports[i];
      h << i << "," << format_double(r.alpha.alpha0) << "," << format_double(r.alpha.alpha1) << ","
        << format_double(r.scale_a) << "," << format_double(r.scale_b) << "," << r.status << "," << r.iterations
        << "," << format_double(r.raw.linf()) << "," << format_double(r.projected_linf) << "\n";
    }
  }
  log << "continue: " << res.status << ", " << res.reports.size() << " reports\n";
  return res.completed ? kSuccess : kNotConverged;
}

int cmd_invariants(const Options& o, std::ostream& log) {
  PairState s;
  Coupling a;
  if (!o.state.empty()) {
    auto ls = state_from(o.state);
    s = std::move(ls.state);
    a = ls.alpha;
    if (!o.config.empty()) a = config_for(o).coupling();
  } else {
    const RunConfig c = config_for(o);
    a = c.coupling();
    s = setup_for(c).start;
  }
  const auto dir = out_dir(o);
  const auto tc = topo_constants(s, a);
  const auto ref = topo_constants(PairState::reference(s.model, s.bundle), a);

  json j = header("invariants", o);
  if (!o.state.empty()) j["state"] = o.state;
  j["model"] = model_json(s);
  j["coupling"] = {{"alpha0", a.alpha0}, {"alpha1", a.alpha1}};
  j["constants"] = constants_json(tc);
  j["reference_constants"] = constants_json(ref);
  j["futaki"] = futaki_json(futaki_suite(s, a, tc));
  j["cym"] = cym_functional(s, a);
  j["minimality_condition"] = minimality_condition(a, tc);
  j["identity_violation"] = identity_check(s, tc);
  j["residual"] = norms_json(residual_norms(residual(s, a, tc), s.grid()));
  write_json(dir / "invariants.json", j);
  if (o.state.empty()) save_state((dir / "state.kym").string(), s, a);
  log << j.dump(2) << "\n";
  return kSuccess;
}

int cmd_geodesic(const Options& o, std::ostream& log) {
  const auto A = state_from(o.from);
  const auto B = state_from(o.to);
  int N = 65;
  Coupling a = A.alpha;
  if (!o.config.empty()) {
    const RunConfig c = config_for(o);
    N = c.samples;
    if (c.alpha) a = *c.alpha;
  }
  if (o.samples) N = *o.samples;
  if (N < 3) throw Error(ErrorCode::PathTooCoarse, "need at least three samples");
  // the endpoints are read into separate models; put both on the first one
  if (!same_class(A.state, B.state)) throw Error(ErrorCode::ClassMismatch, "endpoints live in different classes");
  PairState s1 = B.state;
  s1.model = A.state.model;
  s1.bundle = A.state.bundle;

  const auto dir = out_dir(o);
  const auto tc = topo_constants(PairState::reference(A.state.model, A.state.bundle), a);
  const auto path = coupled_geodesic(A.state, s1, N);
  const auto rep = convexity_report(path, a, tc);
  {
    std::ofstream f(dir / "geodesic.csv");
    f << "t,M,dM,d2M\n";
    for (int k = 0; k < N; ++k)
      f << format_double(rep.energy.t[k]) << "," << format_double(rep.energy.M[k]) << ","
        << format_double(rep.energy.dM[k]) << ","
        << (std::isnan(rep.energy.d2M[k]) ? std::string("") : format_double(rep.energy.d2M[k])) << "\n";
  }
  const double fv = std::abs(rep.slope_fd - rep.slope_direct) / std::max(1.0, std::abs(rep.slope_direct));
  json j = header("geodesic", o);
  j["from"] = o.from;
  j["to"] = o.to;
  j["samples"] = N;
  j["coupling"] = {{"alpha0", a.alpha0}, {"alpha1", a.alpha1}};
  j["min_second_difference"] = rep.min_second_difference;
  j["range"] = rep.range;
  j["convex"] = rep.pass;
  j["slope_fd"] = rep.slope_fd;
  j["slope_direct"] = rep.slope_direct;
  j["first_variation_mismatch"] = fv;
  write_json(dir / "report.json", j);
  log << (rep.pass ? "PASS" : "FAIL") << " convexity: min second difference " << rep.min_second_difference
      << ", range " << rep.range << "\n";
  return rep.pass ? kSuccess : kNotConverged;
}

int cmd_flow(const Options& o, std::ostream& log) {
  PairState start;
  Coupling a;
  FlowOptions fo;
  std::optional<RunConfig> c;
  if (!o.config.empty()) c = config_for(o);
  if (!o.state.empty()) {
    auto ls = state_from(o.state);
    start = std::move(ls.state);
    a = (c && c->alpha) ? *c->alpha : ls.alpha;
  } else {
    if (!c) throw Error(ErrorCode::InvalidConfig, "flow needs --config or --state");
    a = c->coupling();
    start = setup_for(*c).start;
  }
  if (c) fo = c->flow;
  const auto dir = out_dir(o);
  const auto tc = topo_constants(PairState::reference(start.model, start.bundle), a);
  const auto res = gradient_flow(start, a, tc, fo);
  bool monotone = true;
  for (std::size_t i = 1; i < res.values.size(); ++i) monotone = monotone && res.values[i] <= res.values[i - 1];

  save_state((dir / "state.kym").string(), res.trajectory.back(), a);
  {
    std::ofstream f(dir / "flow.csv");
    f << "step,cym,dt\n";
    for (std::size_t i = 0; i < res.values.size(); ++i)
      f << i << "," << format_double(res.values[i]) << "," << (i ? format_double(res.dts[i - 1]) : std::string(""))
        << "\n";
  }
  json j = header("flow", o);
  j["coupling"] = {{"alpha0", a.alpha0}, {"alpha1", a.alpha1}};
  j["status"] = res.status;
  j["steps"] = res.values.size() - 1;
  j["rejected"] = res.rejected;
  j["initial"] = res.values.front();
  j["final"] = res.values.back();
  j["monotone"] = monotone;
  j["minimality_condition"] = minimality_condition(a, tc);
  write_json(dir / "report.json", j);
  log << "flow: " << res.status << ", CYM " << res.values.front() << " -> " << res.values.back() << "\n";
  return res.status == "stationary" ? kSuccess : kNotConverged;
}

int cmd_check(const Options& o, std::ostream& log) {
  const auto ls = state_from(o.state);
  const PairState& s = ls.state;
  const Coupling& a = ls.alpha;
  const double h = grid_h(s.grid());
  const double tol = o.tol.value_or(1e-6);
  const auto tc = topo_constants(s, a);
  const auto ref = topo_constants(PairState::reference(s.model, s.bundle), a);
  const bool flat = s.bundle->is_trivial() && std::all_of(s.m.begin(), s.m.end(), [](double v) { return v == 0; });

  struct Row {
    std::string name;
    bool pass;
    std::string detail;
  };
  std::vector<Row> rows;
  auto fmt = [](double v) {
    std::ostringstream os;
    os << std::setprecision(3) << v;
    return os.str();
  };

  if (flat) {
    rows.push_back({"identity", true, "vacuous (trivial bundle)"});
  } else {
    const double v = identity_check(s, tc);
    rows.push_back({"identity", v <= 5 * h * h, "violation " + fmt(v) + " (tol " + fmt(5 * h * h) + ")"});
  }
  {
    const double d = std::max(std::abs(tc.S_hat - ref.S_hat), std::abs(tc.c_hat - ref.c_hat));
    rows.push_back({"constants", d <= 5 * h * h, "drift " + fmt(d) + " (tol " + fmt(5 * h * h) + ")"});
  }
  const auto nr = residual_norms(residual(s, a, tc), s.grid());
  if (flat)
    rows.push_back({"hym", true, "vacuous (trivial bundle)"});
  else
    rows.push_back({"hym", nr.hym_linf <= tol, "residual " + fmt(nr.hym_linf) + " (tol " + fmt(tol) + ")"});
  rows.push_back({"scalar", nr.scalar_linf <= tol, "residual " + fmt(nr.scalar_linf) + " (tol " + fmt(tol) + ")"});
  {
    const double scale = tc.vol * std::max(1.0, std::abs(tc.c));
    double worst = 0;
    for (const auto& v : futaki_suite(s, a, tc)) worst = std::max(worst, std::abs(v.value));
    rows.push_back({"futaki", worst <= 1e-6 * scale, "max " + fmt(worst) + " (tol " + fmt(1e-6 * scale) + ")"});
  }
  if (flat) {
    rows.push_back({"norm", true, "vacuous (trivial bundle)"});
  } else {
    bool ok = true;
    std::string d = "|F|^2 >= 0";
    try {
      (void)pointwise_norm_F(evaluate_fields(s).gauge);
    } catch (const Error& e) {
      ok = false;
      d = e.what();
    }
    rows.push_back({"norm", ok, d});
  }

  bool all = true;
  json j = header("check", o);
  j["state"] = o.state;
  j["checks"] = json::array();
  for (const auto& r : rows) {
    all = all && r.pass;
    log << (r.pass ? "PASS " : "FAIL ") << std::left << std::setw(10) << r.name << " " << r.detail << "\n";
    j["checks"].push_back({{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
  }
  j["pass"] = all;
  write_json(out_dir(o) / "check.json", j);
  return all ? kSuccess : kNotConverged;
}

}  // namespace kym::cli
