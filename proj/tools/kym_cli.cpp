#include <CLI11.hpp>

#include <iostream>

#include "commands.hpp"

int main(int argc, char** argv) {
  using namespace kym::cli;
  CLI::App app{"Coupled Kaehler-Yang-Mills solver for toric surfaces"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* c) {
    c->add_option("--config", o.config, "TOML run configuration");
    c->add_option("--out", o.out, "output directory")->capture_default_str();
    c->add_option("--grid", o.grid, "cells per unit length (overrides polytope.grid)");
    c->add_option("--seed", o.seed, "seed for random perturbations");
    c->add_option("--tol", o.tol, "residual tolerance");
  };

  struct Sub {
    const char* name;
    const char* help;
    int (*fn)(const Options&, std::ostream&);
  };
  const Sub subs[] = {
      {"solve", "Newton solve from the reference state", cmd_solve},
      {"continue", "continuation along a list of couplings", cmd_continue},
      {"invariants", "topological constants, Futaki values and functionals", cmd_invariants},
      {"geodesic", "K-energy along the geodesic between two states", cmd_geodesic},
      {"flow", "descent flow of the Calabi-Yang-Mills functional", cmd_flow},
      {"check", "consistency checks on a state file", cmd_check},
  };
  int (*chosen)(const Options&, std::ostream&) = nullptr;
  for (const auto& s : subs) {
    auto* c = app.add_subcommand(s.name, s.help);
    common(c);
    const std::string name = s.name;
    if (name == "check" || name == "invariants" || name == "flow") c->add_option("--state", o.state, "state file");
    if (name == "geodesic") {
      c->add_option("--from", o.from, "start state")->required();
      c->add_option("--to", o.to, "end state")->required();
      c->add_option("--samples", o.samples, "time samples along the path");
    }
    if (name == "check") c->get_option("--state")->required();
    c->callback([&chosen, fn = s.fn] { chosen = fn; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kInvalidInput;
  }
  return guarded(chosen, o, std::cerr);
}
