#pragma once

// Run configuration read from TOML.  Every key is validated before any
// compute starts and unknown keys are rejected.

#include <CLI11.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <kym/kym.hpp>

namespace kym::cli {

struct RunConfig {
  // [polytope]
  std::string model;                // named model, or empty with facets
  std::vector<Facet> facets;
  int grid = 32;                    // cells per unit length, h = 1 / grid
  // [bundle]
  std::optional<std::vector<int>> degrees;
  std::optional<std::vector<int>> labels;
  // [coupling]
  std::optional<Coupling> alpha;
  // [solver]
  NewtonOptions newton;
  // [continuation]
  std::vector<double> cont_alpha0, cont_alpha1, cont_scale_a, cont_scale_b;
  double cont_max_step = 1.0, cont_min_step = 1.0 / 64, futaki_threshold = 1e-2;
  // [perturbation]
  PerturbationSpec perturbation;
  // [flow]
  FlowOptions flow;
  // [geodesic]
  int samples = 65;

  std::uint64_t seed = 1;
  std::set<std::string> present;  // "section.key" for every key read

  bool has(const std::string& key) const { return present.count(key) != 0; }

  Polytope polytope() const {
    if (!model.empty()) return Polytope::named(model);
    return Polytope::from_facets(facets, "custom");
  }

  std::vector<int> bundle_labels(const Polytope& P) const {
    if (labels) {
      if (labels->size() != P.num_facets())
        throw Error(ErrorCode::InvalidConfig, "bundle.labels needs one entry per facet");
      return *labels;
    }
    if (degrees) return BundleData::labels_from_degrees(P, *degrees);
    return std::vector<int>(P.num_facets(), 0);
  }

  double h() const { return 1.0 / grid; }

  Coupling coupling() const {
    if (!alpha) throw Error(ErrorCode::InvalidConfig, "missing key coupling.alpha0");
    return *alpha;
  }
};

namespace detail {

inline double to_double(const std::string& key, const std::string& s) {
  double v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size() || !std::isfinite(v))
    throw Error(ErrorCode::InvalidConfig, key + ": expected a number, got '" + s + "'");
  return v;
}

inline long to_int(const std::string& key, const std::string& s) {
  long v = 0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size())
    throw Error(ErrorCode::InvalidConfig, key + ": expected an integer, got '" + s + "'");
  return v;
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in) {
  std::vector<CLI::ConfigItem> items;
  try {
    items = CLI::ConfigTOML().from_config(in);
  } catch (const CLI::Error& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("unreadable config: ") + e.what());
  }
  std::map<std::string, std::vector<std::string>> kv;
  for (const auto& it : items) {
    if (it.name == "++" || it.name == "--") continue;
    std::string key;
    for (const auto& p : it.parents) key += p + ".";
    key += it.name;
    if (kv.count(key)) throw Error(ErrorCode::InvalidConfig, "duplicate key " + key);
    kv[key] = it.inputs;
  }

  RunConfig c;
  using detail::to_double;
  using detail::to_int;
  auto one = [&](const std::string& key) -> const std::string& {
    const auto& v = kv.at(key);
    if (v.size() != 1) throw Error(ErrorCode::InvalidConfig, key + ": expected a single value");
    return v[0];
  };
  auto num = [&](const std::string& key) { return to_double(key, one(key)); };
  auto positive = [&](const std::string& key) {
    const double v = num(key);
    if (!(v > 0)) throw Error(ErrorCode::InvalidConfig, key + " must be positive");
    return v;
  };
  auto count = [&](const std::string& key, long lo) {
    const long v = to_int(key, one(key));
    if (v < lo) throw Error(ErrorCode::InvalidConfig, key + " must be at least " + std::to_string(lo));
    return int(v);
  };
  auto nums = [&](const std::string& key) {
    std::vector<double> out;
    for (const auto& s : kv.at(key)) out.push_back(to_double(key, s));
    return out;
  };
  auto ints = [&](const std::string& key) {
    std::vector<int> out;
    for (const auto& s : kv.at(key)) out.push_back(int(to_int(key, s)));
    return out;
  };

  for (const auto& [key, val] : kv) {
    c.present.insert(key);
    if (key == "polytope.model") {
      c.model = one(key);
    } else if (key == "polytope.facets") {
      // flat list or nested triples; nested arrays arrive as "[a, b, c]"
      std::vector<double> v;
      for (const auto& s : val) {
        std::string t = s;
        const bool nested = t.size() >= 2 && t.front() == '[' && t.back() == ']';
        if (nested) t = t.substr(1, t.size() - 2);
        std::vector<std::string> parts;
        if (nested) {
          std::stringstream ss(t);
          for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
          if (parts.size() != 3) throw Error(ErrorCode::InvalidConfig, "polytope.facets: expected triples (n0, n1, offset)");
        } else {
          parts.push_back(t);
        }
        for (auto& p : parts) {
          p.erase(0, p.find_first_not_of(" \t"));
          p.erase(p.find_last_not_of(" \t") + 1);
          v.push_back(to_double(key, p));
        }
      }
      if (v.size() % 3 != 0 || v.empty())
        throw Error(ErrorCode::InvalidConfig, "polytope.facets: expected triples (n0, n1, offset)");
      for (std::size_t i = 0; i < v.size(); i += 3) {
        if (v[i] != std::round(v[i]) || v[i + 1] != std::round(v[i + 1]))
          throw Error(ErrorCode::InvalidConfig, "polytope.facets: normals must be integers");
        c.facets.push_back({{int(v[i]), int(v[i + 1])}, v[i + 2]});
      }
    } else if (key == "polytope.grid") {
      c.grid = count(key, 4);
    } else if (key == "bundle.degrees") {
      c.degrees = ints(key);
    } else if (key == "bundle.labels") {
      c.labels = ints(key);
    } else if (key == "coupling.alpha0" || key == "coupling.alpha1") {
      // checked together below
    } else if (key == "solver.max_iter") {
      c.newton.max_iter = count(key, 1);
    } else if (key == "solver.tol_linf") {
      c.newton.tol_linf = positive(key);
    } else if (key == "solver.tol_l2") {
      c.newton.tol_l2 = positive(key);
    } else if (key == "solver.obstruction_tol") {
      c.newton.obstruction_tol = positive(key);
    } else if (key == "solver.min_step") {
      c.newton.min_step = positive(key);
    } else if (key == "continuation.alpha0") {
      c.cont_alpha0 = nums(key);
    } else if (key == "continuation.alpha1") {
      c.cont_alpha1 = nums(key);
    } else if (key == "continuation.scale_a") {
      c.cont_scale_a = nums(key);
    } else if (key == "continuation.scale_b") {
      c.cont_scale_b = nums(key);
    } else if (key == "continuation.max_step") {
      c.cont_max_step = positive(key);
    } else if (key == "continuation.min_step") {
      c.cont_min_step = positive(key);
    } else if (key == "continuation.futaki_threshold") {
      c.futaki_threshold = positive(key);
    } else if (key == "perturbation.amplitude_phi") {
      c.perturbation.amp_phi = num(key);
    } else if (key == "perturbation.amplitude_m") {
      c.perturbation.amp_m = num(key);
    } else if (key == "perturbation.modes") {
      c.perturbation.modes = count(key, 1);
    } else if (key == "flow.max_steps") {
      c.flow.max_steps = count(key, 1);
    } else if (key == "flow.dt") {
      c.flow.dt = positive(key);
    } else if (key == "flow.dt_max") {
      c.flow.dt_max = positive(key);
    } else if (key == "geodesic.samples") {
      c.samples = count(key, 3);
    } else {
      throw Error(ErrorCode::InvalidConfig, "unknown key " + key);
    }
  }

  if (c.model.empty() == c.facets.empty())
    throw Error(ErrorCode::InvalidConfig, c.model.empty() ? "missing key polytope.model (or polytope.facets)"
                                                          : "polytope.model and polytope.facets are exclusive");
  if (c.degrees && c.labels) throw Error(ErrorCode::InvalidConfig, "bundle.degrees and bundle.labels are exclusive");
  if (kv.count("coupling.alpha0") || kv.count("coupling.alpha1")) {
    for (const char* k : {"coupling.alpha0", "coupling.alpha1"})
      if (!kv.count(k)) throw Error(ErrorCode::InvalidConfig, std::string("missing key ") + k);
    Coupling a{num("coupling.alpha0"), num("coupling.alpha1")};
    if (!(a.alpha0 > 0)) throw Error(ErrorCode::InvalidConfig, "coupling.alpha0 must be positive");
    c.alpha = a;
  }
  if (!c.cont_alpha1.empty()) {
    const std::size_t n = c.cont_alpha1.size();
    for (auto* v : {&c.cont_alpha0, &c.cont_scale_a, &c.cont_scale_b})
      if (!v->empty() && v->size() != n)
        throw Error(ErrorCode::InvalidConfig, "continuation lists must all have the length of continuation.alpha1");
  } else if (!c.cont_alpha0.empty() || !c.cont_scale_a.empty() || !c.cont_scale_b.empty()) {
    throw Error(ErrorCode::InvalidConfig, "missing key continuation.alpha1");
  }
  if (c.flow.dt > c.flow.dt_max) throw Error(ErrorCode::InvalidConfig, "flow.dt exceeds flow.dt_max");
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::InvalidConfig, "cannot open config " + path);
  return parse_config(in);
}

}  // namespace kym::cli
