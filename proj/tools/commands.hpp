#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include <kym/errors.hpp>

namespace kym::cli {

enum ExitCode : int { kSuccess = 0, kNotConverged = 1, kInvalidInput = 2 };

struct Options {
  std::string config;
  std::string out = ".";
  std::string state;  // check, invariants, flow
  std::string from, to;  // geodesic endpoints
  std::optional<int> grid;
  std::optional<std::uint64_t> seed;
  std::optional<double> tol;
  std::optional<int> samples;
};

int cmd_solve(const Options& o, std::ostream& log);
int cmd_continue(const Options& o, std::ostream& log);
int cmd_invariants(const Options& o, std::ostream& log);
int cmd_geodesic(const Options& o, std::ostream& log);
int cmd_flow(const Options& o, std::ostream& log);
int cmd_check(const Options& o, std::ostream& log);

// exit code for an error raised by the library
int exit_code_for(ErrorCode c);

// Runs a command and turns library errors into an error record plus exit
// code.  The record goes to `log` and, when possible, to <out>/error.json.
int guarded(int (*cmd)(const Options&, std::ostream&), const Options& o, std::ostream& log);

}  // namespace kym::cli
