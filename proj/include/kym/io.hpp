#pragma once

// Plain-text state files and grid field dumps.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "system.hpp"

namespace kym {

inline constexpr int kStateVersion = 1;

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  return std::string(buf, res.ptr);
}

inline void write_state(std::ostream& out, const PairState& s, const Coupling& a) {
  const auto& P = s.model->polytope();
  const auto& G = s.grid();
  out << "kym-state " << kStateVersion << "\n";
  out << "model " << P.name() << "\n";
  out << "facets " << P.num_facets() << "\n";
  for (const auto& f : P.facets()) out << f.normal[0] << " " << f.normal[1] << " " << format_double(f.offset) << "\n";
  out << "labels";
  for (int c : s.bundle->labels()) out << " " << c;
  out << "\n";
  out << "lattice " << format_double(G.hx()) << " " << format_double(G.hy()) << " " << G.nx() << " " << G.ny() << " "
      << G.size() << "\n";
  out << "scale " << format_double(s.scale_a) << " " << format_double(s.scale_b) << "\n";
  out << "coupling " << format_double(a.alpha0) << " " << format_double(a.alpha1) << "\n";
  for (auto [name, field] : {std::pair{"phi", &s.phi}, std::pair{"m", &s.m}}) {
    out << name << "\n";
    for (int k = 0; k < int(G.size()); ++k) {
      const auto ij = G.ij(k);
      out << ij[0] << " " << ij[1] << " " << format_double((*field)[k]) << "\n";
    }
  }
  out << "end\n";
}

struct LoadedState {
  PairState state;
  Coupling alpha;
};

inline LoadedState read_state(std::istream& in) {
  auto fail = [](const std::string& what) -> LoadedState { throw Error(ErrorCode::CorruptState, what); };
  auto expect = [&](const std::string& key) {
    std::string k;
    if (!(in >> k) || k != key) fail("expected '" + key + "'");
  };
  auto read_double = [&](double& v) {
    std::string tok;
    if (!(in >> tok)) fail("truncated state file");
    auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) fail("bad number '" + tok + "'");
  };
  expect("kym-state");
  int version = 0;
  if (!(in >> version) || version != kStateVersion) fail("unsupported state version");
  expect("model");
  std::string name;
  in >> name;
  expect("facets");
  std::size_t k = 0;
  if (!(in >> k) || k < 3 || k > 32) fail("bad facet count");
  std::vector<Facet> facets(k);
  for (auto& f : facets) {
    if (!(in >> f.normal[0] >> f.normal[1])) fail("bad facet normal");
    read_double(f.offset);
  }
  expect("labels");
  std::vector<int> labels(k);
  for (auto& c : labels)
    if (!(in >> c)) fail("bad bundle labels");
  expect("lattice");
  double hx, hy;
  read_double(hx);
  read_double(hy);
  int nx, ny;
  std::size_t N;
  if (!(in >> nx >> ny >> N)) fail("bad lattice line");
  expect("scale");
  double sa, sb;
  read_double(sa);
  read_double(sb);
  expect("coupling");
  Coupling a;
  read_double(a.alpha0);
  read_double(a.alpha1);

  std::shared_ptr<const ToricModel> M;
  try {
    const Polytope P = Polytope::from_facets(facets, name);
    M = std::make_shared<const ToricModel>(P, Grid::build_lattice(P, hx, hy));
  } catch (const Error& e) {
    fail(std::string("state describes an invalid model: ") + e.what());
  }
  if (M->grid().nx() != nx || M->grid().ny() != ny || M->size() != N) fail("lattice does not match the polygon");
  auto B = std::make_shared<const BundleData>(*M, labels);
  LoadedState out{PairState::reference(M, B), a};
  out.state.scale_a = sa;
  out.state.scale_b = sb;
  for (auto [key, field] : {std::pair{"phi", &out.state.phi}, std::pair{"m", &out.state.m}}) {
    expect(key);
    for (int n = 0; n < int(N); ++n) {
      int i, j;
      if (!(in >> i >> j)) fail(std::string("truncated field ") + key);
      const auto ij = M->grid().ij(n);
      if (i != ij[0] || j != ij[1]) fail(std::string("node order mismatch in ") + key);
      read_double((*field)[n]);
    }
  }
  expect("end");
  return out;
}

inline void save_state(const std::string& path, const PairState& s, const Coupling& a) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::InvalidConfig, "cannot write " + path);
  write_state(out, s, a);
}

inline LoadedState load_state(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::CorruptState, "cannot open " + path);
  return read_state(in);
}

// Full lattice as a matrix, rows of constant y from bottom to top, nan
// outside the polygon.
inline void write_field(std::ostream& out, const Grid& G, const std::vector<double>& f, const std::string& name) {
  const auto lo = G.origin();
  out << "# field " << name << "\n";
  out << "# nx " << G.nx() + 1 << " ny " << G.ny() + 1 << " hx " << format_double(G.hx()) << " hy "
      << format_double(G.hy()) << "\n";
  out << "# bbox " << format_double(lo.x) << " " << format_double(lo.y) << " "
      << format_double(lo.x + G.nx() * G.hx()) << " " << format_double(lo.y + G.ny() * G.hy()) << "\n";
  for (int j = 0; j <= G.ny(); ++j) {
    for (int i = 0; i <= G.nx(); ++i) {
      const int n = G.node_at(i, j);
      if (i) out << " ";
      out << (n >= 0 ? format_double(f[n]) : std::string("nan"));
    }
    out << "\n";
  }
}

}  // namespace kym
