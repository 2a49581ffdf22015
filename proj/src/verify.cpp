#include "optima/verify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "optima/errors.hpp"
#include "optima/numerics.hpp"

namespace optima::verify {

SeriesSamples SeriesSamples::zeros(std::vector<double> times,
                                   std::size_t n_paths) {
  SeriesSamples s;
  s.times = std::move(times);
  s.n_paths = n_paths;
  s.values.assign(n_paths * s.times.size(), 0.0);
  return s;
}

MartingaleReport martingale_test(const SeriesSamples& samples,
                                 double reference, double z_crit,
                                 double atol) {
  const std::size_t nodes = samples.n_nodes();
  MartingaleReport rep;
  rep.times = samples.times;
  rep.reference = reference;
  rep.z_crit = z_crit;
  rep.means.resize(nodes);
  rep.std_errors.resize(nodes);

  std::vector<double> col(samples.n_paths);
  double max_z = 0.0;
  for (std::size_t j = 0; j < nodes; ++j) {
    for (std::size_t k = 0; k < samples.n_paths; ++k) {
      col[k] = samples.at(k, j);
    }
    const auto ms = num::mean_se(col);
    rep.means[j] = ms.mean;
    rep.std_errors[j] = ms.se;
    const double z =
        std::abs(ms.mean - reference) / (ms.se + atol / z_crit);
    max_z = std::max(max_z, z);
  }
  rep.max_z = max_z;
  rep.pass = max_z <= z_crit;
  return rep;
}

SupermartingaleReport supermartingale_test(const SeriesSamples& samples,
                                           Direction direction, double z_crit,
                                           double atol) {
  const std::size_t nodes = samples.n_nodes();
  SupermartingaleReport rep;
  rep.direction = direction;
  rep.z_crit = z_crit;
  if (nodes < 2) {
    rep.pass = true;
    return rep;
  }
  rep.step_times.assign(samples.times.begin(), samples.times.end() - 1);
  rep.mean_increments.resize(nodes - 1);
  rep.increment_ses.resize(nodes - 1);

  std::vector<double> diff(samples.n_paths);
  double max_z = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j + 1 < nodes; ++j) {
    for (std::size_t k = 0; k < samples.n_paths; ++k) {
      diff[k] = samples.at(k, j + 1) - samples.at(k, j);
    }
    const auto ms = num::mean_se(diff);
    rep.mean_increments[j] = ms.mean;
    rep.increment_ses[j] = ms.se;
    const double signed_drift =
        direction == Direction::non_increasing ? ms.mean : -ms.mean;
    max_z = std::max(max_z, signed_drift / (ms.se + atol / z_crit));
  }
  rep.max_z = max_z;
  rep.pass = max_z <= z_crit;
  return rep;
}

BinomialMarket BinomialMarket::uniform(int n_periods, double maturity,
                                       double u, double d, double R,
                                       double p_up) {
  BinomialMarket bin;
  bin.n_periods = n_periods;
  bin.maturity = maturity;
  bin.up.assign(n_periods, u);
  bin.down.assign(n_periods, d);
  bin.gross_rate.assign(n_periods, R);
  bin.p_up = p_up;
  bin.validate();
  return bin;
}

void BinomialMarket::validate() const {
  if (n_periods < 1 || n_periods > 4) {
    throw DomainError("binomial oracle instances have 1..4 periods");
  }
  if (!(maturity > 0.0)) throw DomainError("maturity must be positive");
  if (up.size() != static_cast<std::size_t>(n_periods) ||
      down.size() != up.size() || gross_rate.size() != up.size()) {
    throw DomainError("per-period factor arrays must have n_periods entries");
  }
  if (!(p_up > 0.0 && p_up < 1.0)) {
    throw DomainError("branch probability must lie in (0, 1)");
  }
  for (int j = 0; j < n_periods; ++j) {
    if (!(down[j] < gross_rate[j] && gross_rate[j] < up[j])) {
      throw DomainError("no-arbitrage needs d < R < u in every period");
    }
  }
}

BinomialMarket::StepPrices BinomialMarket::state_prices(int period) const {
  const double u = up[period], d = down[period], R = gross_rate[period];
  StepPrices sp;
  sp.psi_u = (R - d) / (R * (u - d));
  sp.psi_d = (u - R) / (R * (u - d));
  return sp;
}

double BinomialMarket::pricing_error() const {
  double err = 0.0;
  for (int j = 0; j < n_periods; ++j) {
    const auto sp = state_prices(j);
    // one unit of stock and one unit of bond repriced by the state prices
    err = std::max(err, std::abs(sp.psi_u * up[j] + sp.psi_d * down[j] - 1.0));
    err = std::max(err,
                   std::abs((sp.psi_u + sp.psi_d) * gross_rate[j] - 1.0));
  }
  return err;
}

OracleUtilities oracle_utilities(const preferences::StatePreference& pref) {
  using preferences::Family;
  OracleUtilities util;
  util.has_terminal = pref.has_terminal();
  const double c = pref.bequest;
  switch (pref.family) {
    case Family::log_utility: {
      auto h = pref.h;
      util.U1 = [h](double t, double x) { return h(t) * std::log(x); };
      util.dU1 = [h](double t, double x) { return h(t) / x; };
      util.U2 = [c](double x) { return c * std::log(x); };
      util.dU2 = [c](double x) { return c / x; };
      return util;
    }
    case Family::power: {
      auto h = pref.h;
      const double a = pref.alpha;
      util.U1 = [h, a](double t, double x) { return h(t) * std::pow(x, a); };
      util.dU1 = [h, a](double t, double x) {
        return a * h(t) * std::pow(x, a - 1.0);
      };
      util.U2 = [c, a](double x) { return c * std::pow(x, a); };
      util.dU2 = [c, a](double x) { return a * c * std::pow(x, a - 1.0); };
      return util;
    }
    default:
      throw UnsupportedFamily(
          "the binomial oracle covers the log and power families");
  }
}

OracleResult binomial_oracle(const BinomialMarket& bin,
                             const OracleUtilities& util, double x,
                             ProblemKind kind) {
  bin.validate();
  if (!(x > 0.0)) throw DomainError("binomial_oracle: x must be positive");
  if (kind != ProblemKind::consumption_only && !util.has_terminal) {
    throw DomainError("oracle kind needs a terminal utility");
  }
  const int n = bin.n_periods;
  const double dt = bin.maturity / static_cast<double>(n);
  const bool with_running = kind != ProblemKind::terminal_only;
  const bool with_terminal = kind != ProblemKind::consumption_only;

  // Path-node deflators H and probabilities, by branch prefix. Prefixes of
  // length j index the consumption nodes at date t_j.
  std::vector<std::vector<double>> H(n + 1), prob(n + 1);
  H[0] = {1.0};
  prob[0] = {1.0};
  for (int j = 0; j < n; ++j) {
    const auto sp = bin.state_prices(j);
    const std::size_t m = H[j].size();
    H[j + 1].resize(2 * m);
    prob[j + 1].resize(2 * m);
    for (std::size_t a = 0; a < m; ++a) {
      H[j + 1][2 * a] = H[j][a] * (sp.psi_u / bin.p_up);
      prob[j + 1][2 * a] = prob[j][a] * bin.p_up;
      H[j + 1][2 * a + 1] = H[j][a] * (sp.psi_d / (1.0 - bin.p_up));
      prob[j + 1][2 * a + 1] = prob[j][a] * (1.0 - bin.p_up);
    }
  }

  // Per-node first-order condition: marginal utility of the deflated
  // argument equals the multiplier. Inverted by bisection on the marginal
  // itself, never through the library's closed-form inverses.
  auto deflated_from_marginal = [](const std::function<double(double)>& du,
                                   double lambda) {
    return num::invert_decreasing(du, lambda, 1e-13, 400);
  };

  auto budget = [&](double lambda) {
    double total = 0.0;
    if (with_running) {
      for (int j = 0; j < n; ++j) {
        const double t = dt * static_cast<double>(j);
        double date_sum = 0.0;
        for (std::size_t a = 0; a < H[j].size(); ++a) {
          const double z = deflated_from_marginal(
              [&](double v) { return util.dU1(t, v); }, lambda);
          date_sum += prob[j][a] * z;
        }
        total += dt * date_sum;
      }
    }
    if (with_terminal) {
      for (std::size_t a = 0; a < H[n].size(); ++a) {
        const double z = deflated_from_marginal(util.dU2, lambda);
        total += prob[n][a] * z;
      }
    }
    return total;
  };

  OracleResult out;
  out.multiplier = num::invert_decreasing(budget, x, 1e-12, 400);

  double value = 0.0;
  double spread = 0.0;
  double spent = 0.0;
  if (with_running) {
    out.consumption_dates.resize(n);
    out.deflated_consumption.resize(n);
    for (int j = 0; j < n; ++j) {
      const double t = dt * static_cast<double>(j);
      out.consumption_dates[j] = t;
      double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
      double date_sum = 0.0;
      for (std::size_t a = 0; a < H[j].size(); ++a) {
        const double z = deflated_from_marginal(
            [&](double v) { return util.dU1(t, v); }, out.multiplier);
        lo = std::min(lo, z);
        hi = std::max(hi, z);
        value += prob[j][a] * dt * util.U1(t, z);
        date_sum += prob[j][a] * z;
      }
      out.deflated_consumption[j] = date_sum;
      spent += dt * date_sum;
      if (hi > 0.0) spread = std::max(spread, (hi - lo) / hi);
    }
  }
  if (with_terminal) {
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (std::size_t a = 0; a < H[n].size(); ++a) {
      const double z = deflated_from_marginal(util.dU2, out.multiplier);
      lo = std::min(lo, z);
      hi = std::max(hi, z);
      value += prob[n][a] * util.U2(z);
      spent += prob[n][a] * z;
    }
    if (hi > 0.0) spread = std::max(spread, (hi - lo) / hi);
  }
  out.value = value;
  out.collapse_spread = spread;
  out.budget_residual = std::abs(spent - x) / x;
  return out;
}

ExistenceResult existence_construction(const SeriesSamples& floor_samples,
                                       double x,
                                       const SeriesSamples& deflators) {
  if (floor_samples.n_paths != deflators.n_paths ||
      floor_samples.n_nodes() != deflators.n_nodes()) {
    throw DomainError("existence_construction: sample shapes disagree");
  }
  ExistenceResult out;
  out.wealth = SeriesSamples::zeros(floor_samples.times,
                                    floor_samples.n_paths);
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < floor_samples.n_paths; ++k) {
    const double gap0 = x - floor_samples.at(k, 0);
    for (std::size_t j = 0; j < floor_samples.n_nodes(); ++j) {
      const double X =
          floor_samples.at(k, j) + gap0 / deflators.at(k, j);
      out.wealth.at(k, j) = X;
      min_gap = std::min(min_gap, X - floor_samples.at(k, j));
    }
  }
  out.min_gap = min_gap;
  return out;
}

FeasibilityReport feasibility_bound(double x,
                                    std::span<const double> per_path_costs,
                                    double z_crit, double atol) {
  const auto ms = num::mean_se(per_path_costs);
  FeasibilityReport rep;
  rep.x = x;
  rep.mean_cost = ms.mean;
  rep.se = ms.se;
  rep.pass = x >= ms.mean - z_crit * ms.se - atol;
  return rep;
}

SeriesSamples budget_process_samples(const optimizer::Solution& solution,
                                     const market::PathBundle& bundle) {
  const std::size_t nodes = bundle.n_nodes();
  SeriesSamples out = SeriesSamples::zeros(bundle.grid.times(),
                                           bundle.n_paths);
  const auto& model = solution.varpi_estimator().model();
  num::parallel_for_chunks(bundle.n_paths, [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      double integral = 0.0;
      double prev = 0.0;
      for (std::size_t j = 0; j < nodes; ++j) {
        const double t = bundle.grid.time(j);
        const double H = bundle.deflator_at(k, j);
        const Vec P = bundle.price_vec(k, j);
        const double net =
            H * (solution.consumption(t, H) - model.rate_fn(t, P));
        if (j > 0) integral += 0.5 * (prev + net) * bundle.grid.dt(j - 1);
        prev = net;
        out.at(k, j) = H * solution.wealth(t, H, P) + integral;
      }
    }
  });
  return out;
}

SeriesSamples expmart_samples(const market::PathBundle& bundle) {
  SeriesSamples out = SeriesSamples::zeros(bundle.grid.times(),
                                           bundle.n_paths);
  for (std::size_t k = 0; k < bundle.n_paths; ++k) {
    for (std::size_t j = 0; j < bundle.n_nodes(); ++j) {
      out.at(k, j) = bundle.expmart_at(k, j);
    }
  }
  return out;
}

SeriesSamples deflator_samples(const market::PathBundle& bundle) {
  SeriesSamples out = SeriesSamples::zeros(bundle.grid.times(),
                                           bundle.n_paths);
  for (std::size_t k = 0; k < bundle.n_paths; ++k) {
    for (std::size_t j = 0; j < bundle.n_nodes(); ++j) {
      out.at(k, j) = bundle.deflator_at(k, j);
    }
  }
  return out;
}

SeriesSamples minimal_wealth_samples(const endowment::VarPi& varpi,
                                     const market::PathBundle& bundle) {
  SeriesSamples out = SeriesSamples::zeros(bundle.grid.times(),
                                           bundle.n_paths);
  num::parallel_for_chunks(bundle.n_paths, [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      for (std::size_t j = 0; j < bundle.n_nodes(); ++j) {
        out.at(k, j) = varpi(bundle.grid.time(j), bundle.price_vec(k, j));
      }
    }
  });
  return out;
}

SeriesSamples floor_process_samples(const endowment::VarPi& varpi,
                                    const market::PathBundle& bundle) {
  const std::size_t nodes = bundle.n_nodes();
  SeriesSamples out = SeriesSamples::zeros(bundle.grid.times(),
                                           bundle.n_paths);
  const auto& model = varpi.model();
  num::parallel_for_chunks(bundle.n_paths, [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      double integral = 0.0;
      double prev = 0.0;
      for (std::size_t j = 0; j < nodes; ++j) {
        const double t = bundle.grid.time(j);
        const double H = bundle.deflator_at(k, j);
        const Vec P = bundle.price_vec(k, j);
        const double flow = H * model.rate_fn(t, P);
        if (j > 0) integral += 0.5 * (prev + flow) * bundle.grid.dt(j - 1);
        prev = flow;
        out.at(k, j) = H * varpi(t, P) - integral;
      }
    }
  });
  return out;
}

double scaled_consumption_value(const preferences::StatePreference& pref,
                                ProblemKind kind, double y, double s,
                                double scale, double x_effective) {
  if (!(scale > 0.0 && scale <= 1.0)) {
    throw DomainError("scaled_consumption_value: scale in (0, 1]");
  }
  double v = 0.0;
  double running_budget = 0.0;
  if (kind != ProblemKind::terminal_only) {
    running_budget =
        preferences::capital_X(pref, s, y, ProblemKind::consumption_only);
    v += num::integrate(
        [&](double t) { return pref.U1(t, scale * pref.I1(t, y)); }, s,
        pref.horizon, 1e-10);
  }
  if (kind != ProblemKind::consumption_only && pref.has_terminal()) {
    // whatever the scaled consumption leaves over ends up in final wealth
    const double terminal = x_effective - scale * running_budget;
    v += pref.U2(std::max(terminal, 0.0));
  }
  return v;
}

}  // namespace optima::verify
