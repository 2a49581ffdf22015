#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "optima/linalg.hpp"

namespace optima::market {

// Relative tolerance on the least-squares residual of sigma*theta = excess.
inline constexpr double kRiskPriceTol = 1e-10;

// Snapshot of time- and price-independent coefficients. When present the
// simulator skips per-step coefficient calls and risk-price solves.
struct ConstantCoefficients {
  double rate = 0.0;
  Vec drift;      // n
  Vec dividend;   // n
  Mat vol;        // n x d
};

// The market (P, b, sigma, delta, r, p0) with terminal time `horizon`.
// Coefficient functions take (t, p) where p is the n-vector of stock
// prices; they must be total and continuous on [0, T] x positive orthant
// (user contract, smoke-tested on a grid). `initial_prices` has n+1
// entries: index 0 belongs to the deflating asset, whose role is played
// by the state price density, so it never enters any computed quantity.
struct MarketSpec {
  int n_stocks = 1;
  int n_brownian = 1;
  std::function<double(double, const Vec&)> rate_fn;
  std::function<Vec(double, const Vec&)> drift_fn;
  std::function<Mat(double, const Vec&)> vol_fn;
  std::function<Vec(double, const Vec&)> dividend_fn;
  Vec initial_prices;
  double horizon = 1.0;
  std::optional<ConstantCoefficients> constants;

  // Constant-coefficient market; p0_full has n+1 entries.
  static MarketSpec constant(double r, const Vec& b, const Mat& sigma,
                             const Vec& delta, const Vec& p0_full, double T);

  void validate() const;
  Vec stock_initials() const;  // drops the deflating-asset entry
};

class TimeGrid {
 public:
  // Uniform grid with n_steps intervals on [start, end].
  TimeGrid(double start, double end, std::size_t n_steps);

  // Explicit, possibly non-uniform, strictly increasing nodes.
  static TimeGrid from_times(std::vector<double> times);

  double start() const { return times_.front(); }
  double end() const { return times_.back(); }
  std::size_t n_steps() const { return times_.size() - 1; }
  std::size_t n_nodes() const { return times_.size(); }
  double time(std::size_t i) const { return times_[i]; }
  double dt(std::size_t i) const { return times_[i + 1] - times_[i]; }
  const std::vector<double>& times() const { return times_; }

  // Node-slice [i0, i1]; shares the exact node values, which is what
  // makes restarted simulations reproduce the one-shot arithmetic.
  TimeGrid segment(std::size_t i0, std::size_t i1) const;

 private:
  explicit TimeGrid(std::vector<double> times) : times_(std::move(times)) {}
  std::vector<double> times_;
};

// Simulated sample paths of the stocks P, the bond B, the exponential
// martingale Z and the state price density H = Z / B on a shared grid.
// All series are flat row-major arrays indexed by (path, node[, column]).
struct PathBundle {
  TimeGrid grid{0.0, 1.0, 1};
  int n_stocks = 0;
  int n_brownian = 0;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  std::vector<double> prices;    // n_paths * n_nodes * n_stocks
  std::vector<double> bond;      // n_paths * n_nodes
  std::vector<double> expmart;   // n_paths * n_nodes
  std::vector<double> deflator;  // n_paths * n_nodes
  std::vector<double> theta;     // n_paths * n_nodes * n_brownian

  std::size_t n_nodes() const { return grid.n_nodes(); }
  double price(std::size_t path, std::size_t node, int stock) const {
    return prices[(path * n_nodes() + node) * n_stocks + stock];
  }
  double bond_at(std::size_t path, std::size_t node) const {
    return bond[path * n_nodes() + node];
  }
  double expmart_at(std::size_t path, std::size_t node) const {
    return expmart[path * n_nodes() + node];
  }
  double deflator_at(std::size_t path, std::size_t node) const {
    return deflator[path * n_nodes() + node];
  }
  double theta_at(std::size_t path, std::size_t node, int j) const {
    return theta[(path * n_nodes() + node) * n_brownian + j];
  }
  Vec price_vec(std::size_t path, std::size_t node) const;

  // Columns: time, path_id, P_1..P_n, B, Z, H. Values use shortest
  // round-trip decimal formatting, so a write/read cycle is lossless.
  void write_csv(std::ostream& os) const;
  static PathBundle read_csv(std::istream& is);
};

// Minimum-norm solution theta of sigma * theta = b + delta - r * 1, i.e.
// the unique solution orthogonal to ker(sigma). Throws NoRiskPriceError
// when the residual exceeds kRiskPriceTol * max(1, |excess|).
Vec market_price_of_risk(const MarketSpec& spec, double t, const Vec& p);

// Log-Euler scheme: each stock advances multiplicatively by
// exp((b_i - 0.5 (sigma sigma')_ii) dt + (sigma dW)_i), the bond by
// exp(r dt) and Z by exp(-theta'dW - 0.5 |theta|^2 dt), with all
// coefficients evaluated at the left endpoint. Deterministic function of
// its arguments, independent of thread count.
PathBundle simulate_paths(const MarketSpec& spec, const TimeGrid& grid,
                          const Vec& p0, std::size_t n_paths,
                          std::uint64_t seed);

// The exact standard-normal increments simulate_paths(seed) consumes for
// one path, row-major (step, brownian component).
std::vector<double> draw_path_normals(std::uint64_t seed, std::size_t path,
                                      std::size_t n_steps, int n_brownian);

// Same scheme driven by caller-supplied increments. `starts` holds either
// one shared initial price vector or one per path; `normals` holds one
// (n_steps x d) row-major block per path.
PathBundle simulate_with_increments(const MarketSpec& spec,
                                    const TimeGrid& grid,
                                    const std::vector<Vec>& starts,
                                    const std::vector<std::vector<double>>& normals);

// First n_keep paths of a bundle, for diagnostics at reduced scale.
PathBundle take_paths(const PathBundle& bundle, std::size_t n_keep);

// Simulates start->end in one run and as two runs split at an interior
// node, reusing the identical per-step increments, and returns the max
// absolute difference of terminal prices. Exactly zero when
// restart_seed == seed (the discrete scheme has the exact semigroup
// property for matched increments). split_index 0 means the middle node.
double restart_consistency_check(const MarketSpec& spec, const TimeGrid& grid,
                                 const Vec& p0, std::uint64_t seed,
                                 std::size_t split_index = 0,
                                 std::optional<std::uint64_t> restart_seed = {},
                                 std::size_t n_paths = 8);

}  // namespace optima::market
