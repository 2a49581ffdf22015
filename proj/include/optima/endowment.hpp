#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "optima/linalg.hpp"
#include "optima/market.hpp"

namespace optima::endowment {

enum class EndowmentKind { zero, deterministic, markov };

const char* to_string(EndowmentKind kind);

// Labor-income rate eps(t, p) >= 0, wealth per unit time. Integrability
// E[int H eps] < infinity is a user contract, smoke-checked by finite
// Monte Carlo means.
struct EndowmentModel {
  EndowmentKind kind = EndowmentKind::zero;
  std::function<double(double, const Vec&)> rate_fn;
  std::size_t mc_inner_paths = 20000;
  std::size_t mc_inner_steps = 64;
  std::uint64_t mc_seed = 20240101;

  static EndowmentModel zero();
  static EndowmentModel deterministic(std::function<double(double)> eps);
  static EndowmentModel markov(std::function<double(double, const Vec&)> eps);
};

enum class VarpiMode { auto_select, closed_form, monte_carlo, custom };

const char* to_string(VarpiMode mode);

// Estimator for the value of future endowments,
//   varpi(t, p) = -E[ int_t^T H(t, u) eps(u, P(t, u, p)) du ],
// which is nonpositive, zero at t = T, and identically zero for a zero
// endowment. Queries are pure given (model, market, t, p, mc_seed); the
// bumped queries used for sensitivities share the same seed, so finite
// differences run on common random numbers.
class VarPi {
 public:
  VarPi(EndowmentModel model, market::MarketSpec spec,
        VarpiMode mode = VarpiMode::auto_select);

  // Closed-form override, used where an exact expression is known.
  static VarPi exact(EndowmentModel model, market::MarketSpec spec,
                     std::function<double(double, const Vec&)> value_fn);

  double operator()(double t, const Vec& p) const;

  struct Estimate {
    double value = 0.0;
    double se = 0.0;
  };
  Estimate estimate(double t, const Vec& p) const;

  // phi_i = p_i * d(varpi)/d(p_i), central differences with relative bump
  // 1e-3. The returned vector has n+1 entries; index 0 belongs to the
  // deflating asset and is zero by construction, since the state price
  // density is built from (r, theta) rather than a simulated 0-th asset.
  Vec phi(double t, const Vec& p) const;

  struct PhiEstimate {
    Vec phi;
    Vec se;
  };
  PhiEstimate phi_with_se(double t, const Vec& p) const;

  VarpiMode mode() const { return mode_; }
  const EndowmentModel& model() const { return model_; }
  const market::MarketSpec& spec() const { return spec_; }

  // Optional tensor-product cache on (t, log p) with multilinear
  // interpolation and flat extrapolation at the edges. Off by default;
  // pathwise feedback-map evaluation turns it on for Monte Carlo modes.
  void build_cache(double t_lo, double t_hi, std::size_t nt, const Vec& p_lo,
                   const Vec& p_hi, std::size_t np_per_dim);
  bool has_cache() const { return cache_.has_value(); }
  void drop_cache() { cache_.reset(); }

 private:
  double eval_raw(double t, const Vec& p) const;
  Estimate mc_estimate(double t, const Vec& p) const;
  std::vector<double> mc_samples(double t, const Vec& p) const;

  EndowmentModel model_;
  market::MarketSpec spec_;
  VarpiMode mode_;
  std::function<double(double, const Vec&)> exact_fn_;

  struct Cache {
    std::vector<double> t_nodes;
    std::vector<std::vector<double>> logp_nodes;  // per stock
    std::vector<double> values;                   // row-major over (t, p...)
  };
  std::optional<Cache> cache_;
};

// Relative bump of the sensitivity estimator.
inline constexpr double kPhiBump = 1e-3;

double varpi(const EndowmentModel& model, const market::MarketSpec& spec,
             double t, const Vec& p, VarpiMode mode = VarpiMode::auto_select);

// The wealth floor along a simulated path: L(s, t, p) = varpi(t, P(s,t,p)).
// Together with the consistency identity Pi(s,t,p) = H(s,t,p) * L(s,t,p)
// this is the conditional present value of endowments after t.
double minimal_wealth(const EndowmentModel& model,
                      const market::MarketSpec& spec,
                      const market::PathBundle& paths, std::size_t path,
                      std::size_t node, VarpiMode mode = VarpiMode::auto_select);

Vec phi_sensitivities(const EndowmentModel& model,
                      const market::MarketSpec& spec, double t, const Vec& p,
                      VarpiMode mode = VarpiMode::auto_select);

}  // namespace optima::endowment
