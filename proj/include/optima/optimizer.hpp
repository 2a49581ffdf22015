#pragma once

#include <memory>

#include "optima/endowment.hpp"
#include "optima/linalg.hpp"
#include "optima/market.hpp"
#include "optima/preferences.hpp"
#include "optima/problem.hpp"

namespace optima::optimizer {

enum class Branch { interior, floor };

const char* to_string(Branch branch);

struct SolveConfig {
  double start_time = 0.0;  // s; re-solving mid-horizon uses s > 0
  endowment::VarpiMode varpi_mode = endowment::VarpiMode::auto_select;
  double homogeneity_tol = 1e-8;
  double sigma_condition_limit = 1e12;
};

// y with X(t, y) = x - varpi_val, using the demand-map variant that
// matches the problem kind. Throws FloorRegion when x <= varpi_val.
double lagrange_multiplier(const preferences::StatePreference& pref,
                           double varpi_val, double x, ProblemKind kind,
                           double t);

// G(s, y): running part int_s^T U1(t, I1(t, y)) dt plus terminal part
// U2(I2(y)), masked by the problem kind. Closed form for the built-in
// families, quadrature for custom.
double value_function(const preferences::StatePreference& pref,
                      ProblemKind kind, double y, double s);

// State-feedback maps of the solved problem. Every map takes the current
// time t together with the path state (H(s, t, p), stock prices P); maps
// are pure and safe to evaluate concurrently.
class Solution {
 public:
  ProblemKind kind() const { return kind_; }
  Branch branch() const { return branch_; }
  double start_time() const { return start_time_; }
  double initial_wealth() const { return x0_; }
  const Vec& initial_prices() const { return p0_; }
  double multiplier() const { return y_; }  // interior branch only
  double varpi_at_start() const { return varpi0_; }
  double value() const { return value_; }  // extended-real; may be -inf

  // H^-1 I1(t, y) on the interior branch, zero on the floor branch and
  // for terminal-only problems. The deflated value H * c is
  // deterministic, a signature of valuing consumption at decision time.
  double consumption(double t, double H) const;

  // varpi(t, P) + H^-1 X(t, y) on the interior branch;
  // varpi(t, P) + H^-1 (x - varpi(s, p0)) on the floor branch.
  double wealth(double t, double H, const Vec& P) const;

  // Wealth in each stock. With a deterministic endowment value the map
  // reduces to (sigma sigma')^-1 (b + delta - r 1) * wealth; otherwise the
  // endowment value and its sensitivities enter as hedging terms.
  Vec portfolio(double t, double H, const Vec& P) const;

  // Bond position: wealth minus the stock positions.
  double bond_position(double t, double H, const Vec& P) const;

  const preferences::StatePreference& preference() const { return *pref_; }
  const market::MarketSpec& market_spec() const { return varpi_->spec(); }
  const endowment::VarPi& varpi_estimator() const { return *varpi_; }
  const std::shared_ptr<const endowment::VarPi>& varpi_ptr() const {
    return varpi_;
  }

 private:
  friend Solution solve_with_estimator(
      std::shared_ptr<const endowment::VarPi> varpi,
      const preferences::StatePreference& pref, ProblemKind kind, double x,
      const Vec& p, const SolveConfig& config);

  ProblemKind kind_ = ProblemKind::both;
  Branch branch_ = Branch::interior;
  double start_time_ = 0.0;
  double x0_ = 0.0;
  Vec p0_;
  double y_ = 0.0;
  double varpi0_ = 0.0;
  double value_ = 0.0;
  double sigma_condition_limit_ = 1e12;
  std::shared_ptr<const preferences::StatePreference> pref_;
  std::shared_ptr<const endowment::VarPi> varpi_;
};

// Gates the preference on homogeneity, estimates varpi(s, p), picks the
// branch and binds the feedback maps. Deterministic given the seeds
// inside the endowment model.
Solution solve(const market::MarketSpec& spec,
               const preferences::StatePreference& pref,
               const endowment::EndowmentModel& endow, ProblemKind kind,
               double x, const Vec& p, const SolveConfig& config = {});

// Same, but with a caller-built estimator (e.g. an exact closed form).
Solution solve_with_estimator(std::shared_ptr<const endowment::VarPi> varpi,
                              const preferences::StatePreference& pref,
                              ProblemKind kind, double x, const Vec& p,
                              const SolveConfig& config = {});

// Cross-path statistics of the feedback maps along a simulated bundle.
struct PathStats {
  std::vector<double> times;
  std::vector<double> mean_wealth, se_wealth;
  std::vector<double> mean_consumption, se_consumption;
  Mat mean_portfolio, se_portfolio;  // n_nodes x n_stocks
};

PathStats evaluate_on_bundle(const Solution& solution,
                             const market::PathBundle& bundle,
                             bool with_portfolio = true);

}  // namespace optima::optimizer
