#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "optima/endowment.hpp"
#include "optima/market.hpp"
#include "optima/optimizer.hpp"
#include "optima/preferences.hpp"
#include "optima/problem.hpp"

namespace optima::verify {

inline constexpr double kDefaultZCrit = 3.5;

// Absolute slack added to every statistical band. Several tested
// processes are deterministic by construction (zero cross-path variance
// up to roundoff), where a pure z statistic would divide by zero.
inline constexpr double kStatAtol = 1e-12;

// Per-path time series, flat row-major (path, node).
struct SeriesSamples {
  std::vector<double> times;
  std::vector<double> values;
  std::size_t n_paths = 0;

  std::size_t n_nodes() const { return times.size(); }
  double at(std::size_t path, std::size_t node) const {
    return values[path * n_nodes() + node];
  }
  double& at(std::size_t path, std::size_t node) {
    return values[path * n_nodes() + node];
  }
  static SeriesSamples zeros(std::vector<double> times, std::size_t n_paths);
};

struct MartingaleReport {
  std::vector<double> times;
  std::vector<double> means;
  std::vector<double> std_errors;
  double reference = 0.0;
  double max_z = 0.0;  // max |mean - reference| / (SE + atol / z_crit)
  double z_crit = kDefaultZCrit;
  bool pass = false;
};

// Per-time mean and standard error against a constant reference level.
MartingaleReport martingale_test(const SeriesSamples& samples,
                                 double reference,
                                 double z_crit = kDefaultZCrit,
                                 double atol = kStatAtol);

enum class Direction { non_increasing, non_decreasing };

struct SupermartingaleReport {
  std::vector<double> step_times;        // left endpoints
  std::vector<double> mean_increments;   // paired per-path differences
  std::vector<double> increment_ses;
  double max_z = 0.0;  // signed, positive means drift against direction
  double z_crit = kDefaultZCrit;
  Direction direction = Direction::non_increasing;
  bool pass = false;
};

// One-sided paired test that per-step mean increments respect the
// direction beyond the statistical band.
SupermartingaleReport supermartingale_test(
    const SeriesSamples& samples,
    Direction direction = Direction::non_increasing,
    double z_crit = kDefaultZCrit, double atol = kStatAtol);

// Desk-scale complete market: a recombining-in-distribution binomial tree
// with per-period up/down factors and gross one-period rates. State
// prices per branch follow from no-arbitrage (d < R < u).
struct BinomialMarket {
  int n_periods = 2;
  double maturity = 1.0;
  std::vector<double> up;          // per period
  std::vector<double> down;        // per period
  std::vector<double> gross_rate;  // per period
  double p_up = 0.5;               // real-world branch probability

  static BinomialMarket uniform(int n_periods, double maturity, double u,
                                double d, double R, double p_up = 0.5);
  void validate() const;

  struct StepPrices {
    double psi_u = 0.0;
    double psi_d = 0.0;
  };
  StepPrices state_prices(int period) const;

  // Max absolute repricing error of stock and bond by the state prices;
  // zero up to roundoff for a valid tree.
  double pricing_error() const;
};

// Utility primitives the oracle consumes: values and derivatives only,
// written directly from the family definitions. The oracle inverts dU1
// and dU2 by bisection instead of using the library's marginal inverses,
// so the two value computations share no code path.
struct OracleUtilities {
  std::function<double(double, double)> U1, dU1;
  std::function<double(double)> U2, dU2;
  bool has_terminal = false;
};

OracleUtilities oracle_utilities(const preferences::StatePreference& pref);

struct OracleResult {
  double value = 0.0;
  double multiplier = 0.0;
  std::vector<double> consumption_dates;
  std::vector<double> deflated_consumption;  // per date, node-collapsed
  double collapse_spread = 0.0;  // cross-node spread of H*c per date
  double budget_residual = 0.0;  // relative
};

// Solves the discrete problem max sum_t dt U1(t, H_t c_t) + U2(H_T X_T)
// subject to E[sum_t dt H_t c_t + H_T X_T] = x on the tree, by per-node
// first-order conditions and a scalar multiplier search. The deflated
// arguments collapse the program to one dimension independent of the
// tree, which collapse_spread makes checkable.
OracleResult binomial_oracle(const BinomialMarket& bin,
                             const OracleUtilities& util, double x,
                             ProblemKind kind);

struct ExistenceResult {
  SeriesSamples wealth;
  double min_gap = 0.0;  // min over paths and nodes of X - L
};

// X = L + (x - L(path, 0)) / H pathwise; X >= L whenever x >= L(path, 0).
ExistenceResult existence_construction(const SeriesSamples& floor_samples,
                                       double x,
                                       const SeriesSamples& deflators);

struct FeasibilityReport {
  double x = 0.0;
  double mean_cost = 0.0;  // E[H(T) L(T) + int H (c - eps)]
  double se = 0.0;
  bool pass = false;
};

FeasibilityReport feasibility_bound(double x,
                                    std::span<const double> per_path_costs,
                                    double z_crit = kDefaultZCrit,
                                    double atol = kStatAtol);

// --- sample builders over a solved problem -------------------------------

// Y(t) = H xi + int_0^t H (c - eps) du per path (trapezoid in time).
SeriesSamples budget_process_samples(const optimizer::Solution& solution,
                                     const market::PathBundle& bundle);

// Z(s, .) samples straight from a bundle.
SeriesSamples expmart_samples(const market::PathBundle& bundle);

// H(s, .) samples straight from a bundle.
SeriesSamples deflator_samples(const market::PathBundle& bundle);

// L(s, t, p) = varpi(t, P(s,t,p)) along each path.
SeriesSamples minimal_wealth_samples(const endowment::VarPi& varpi,
                                     const market::PathBundle& bundle);

// H L - int H eps du per path, the deflated floor process.
SeriesSamples floor_process_samples(const endowment::VarPi& varpi,
                                    const market::PathBundle& bundle);

// Objective value of the suboptimal strategy that consumes
// scale * optimal consumption and banks the remainder; in deflated terms
// the strategy is deterministic, so the value is exact.
double scaled_consumption_value(const preferences::StatePreference& pref,
                                ProblemKind kind, double y, double s,
                                double scale, double x_effective);

}  // namespace optima::verify
