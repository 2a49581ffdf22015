#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include "optima/config.hpp"

namespace optima::cli {

// Exit code contract, stable across platforms:
//   0  success (and, for verify, all diagnostics pass)
//   1  verify: at least one diagnostic failed
//   2  configuration problem (parse error, missing file, size guard)
//   3  solver or simulation error (and oracle disagreement)
inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitSolver = 3;

struct CmdOptions {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_paths;
};

int cmd_solve(const CmdOptions& opt, std::ostream& out, std::ostream& err);
int cmd_simulate(const CmdOptions& opt, std::ostream& out, std::ostream& err);
int cmd_verify(const CmdOptions& opt, std::ostream& out, std::ostream& err);
int cmd_oracle(const CmdOptions& opt, std::ostream& out, std::ostream& err);

}  // namespace optima::cli
