#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "optima/endowment.hpp"
#include "optima/market.hpp"
#include "optima/preferences.hpp"
#include "optima/problem.hpp"

namespace optima::cli {

// Line-oriented sectioned key = value text. Decimal numbers only.
// Scalar time expressions:
//   constant:v
//   poly:c0,c1,...            (polynomial in t)
//   table:t0:v0,t1:v1,...     (piecewise linear, clamped ends)
// Vector coefficients join scalar expressions with '|'; the volatility
// matrix joins rows with ';'. The endowment rate also accepts
// linear_in:P<k>,coef for a rate proportional to the k-th stock price.
// Unknown sections or keys are rejected with a line diagnostic.
struct RunConfig {
  market::MarketSpec market;
  preferences::StatePreference preference;
  endowment::EndowmentModel endow;
  endowment::VarpiMode varpi_mode = endowment::VarpiMode::auto_select;

  ProblemKind problem_kind = ProblemKind::consumption_only;
  double x = 1.0;
  std::size_t steps = 100;
  std::size_t n_paths = 10000;
  std::uint64_t seed = 1;

  double z_crit = 3.5;
  double oracle_tol = 1e-8;
  double homogeneity_tol = 1e-8;

  int oracle_periods = 2;
  double oracle_up = 1.1;
  double oracle_down = 0.9;
  double oracle_gross_rate = 1.01;

  std::size_t verify_paths = 20000;
  std::size_t verify_steps = 50;
  double self_test_bias = 0.0;
  std::string paths_csv;

  std::string out_dir = "out";
  std::string raw_text;  // verbatim input, echoed into the manifest
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);

}  // namespace optima::cli
