#include "optima/optimizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "optima/errors.hpp"
#include "optima/numerics.hpp"

namespace optima::optimizer {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

using preferences::Family;
using preferences::StatePreference;

// int_s^T U1(t, 0) dt by the continuous extension; -inf when U1(., 0) is.
double floor_running_value(const StatePreference& pref, double s) {
  const double probe = pref.U1(s, 0.0);
  if (!std::isfinite(probe)) return -kInf;
  switch (pref.family) {
    case Family::power:
      return 0.0;
    case Family::separable:
      // U1(t, 0) = h(t) u(0)
      return pref.inner_u(0.0) * pref.weight_integral(s);
    default:
      return num::integrate([&](double t) { return pref.U1(t, 0.0); }, s,
                            pref.horizon, 1e-10);
  }
}

}  // namespace

const char* to_string(Branch branch) {
  return branch == Branch::interior ? "interior" : "floor";
}

double lagrange_multiplier(const StatePreference& pref, double varpi_val,
                           double x, ProblemKind kind, double t) {
  if (!(x > varpi_val)) {
    throw FloorRegion("initial wealth at or below the endowment floor");
  }
  return preferences::invert_X(pref, t, x - varpi_val, kind);
}

double value_function(const StatePreference& pref, ProblemKind kind, double y,
                      double s) {
  if (!(y > 0.0)) throw DomainError("value_function: y must be positive");
  const bool with_running = kind != ProblemKind::terminal_only;
  const bool with_terminal =
      kind != ProblemKind::consumption_only && pref.has_terminal();

  switch (pref.family) {
    case Family::power: {
      const double factor =
          std::pow(pref.alpha / y, pref.alpha / (1.0 - pref.alpha));
      double scale = 0.0;
      if (with_running) scale += pref.weight_integral(s);
      if (with_terminal) scale += pref.bequest_term();
      return factor * scale;
    }
    case Family::log_utility: {
      double g = 0.0;
      if (with_running) {
        if (pref.h_const) {
          const double v = *pref.h_const;
          g += (pref.horizon - s) * v * (std::log(v) - std::log(y));
        } else {
          g += num::integrate(
                   [&](double t) {
                     const double ht = pref.h(t);
                     return ht * std::log(ht);
                   },
                   s, pref.horizon, 1e-12) -
               std::log(y) * pref.weight_integral(s);
        }
      }
      if (with_terminal) {
        g += pref.bequest * std::log(pref.bequest / y);
      }
      return g;
    }
    case Family::separable: {
      const double u_val = pref.inner_u(pref.inner_inv(y));
      double scale = 0.0;
      if (with_running) scale += pref.weight_integral(s);
      if (with_terminal) scale += pref.bequest;
      return u_val * scale;
    }
    case Family::custom: {
      double g = 0.0;
      if (with_running) {
        g += num::integrate(
            [&](double t) { return pref.U1(t, pref.I1(t, y)); }, s,
            pref.horizon, 1e-10);
      }
      if (with_terminal) g += pref.U2(pref.I2(y));
      return g;
    }
  }
  throw UnsupportedFamily("value_function: unknown family");
}

double Solution::consumption(double t, double H) const {
  if (branch_ == Branch::floor || kind_ == ProblemKind::terminal_only) {
    return 0.0;
  }
  return pref_->I1(t, y_) / H;
}

double Solution::wealth(double t, double H, const Vec& P) const {
  const double vp = (*varpi_)(t, P);
  if (branch_ == Branch::floor) {
    return vp + (x0_ - varpi0_) / H;
  }
  return vp + preferences::capital_X(*pref_, t, y_, kind_) / H;
}

Vec Solution::portfolio(double t, double H, const Vec& P) const {
  const market::MarketSpec& spec = varpi_->spec();
  const int n = spec.n_stocks;

  double r;
  Vec b, delta;
  Mat sigma;
  if (spec.constants) {
    r = spec.constants->rate;
    b = spec.constants->drift;
    delta = spec.constants->dividend;
    sigma = spec.constants->vol;
  } else {
    r = spec.rate_fn(t, P);
    b = spec.drift_fn(t, P);
    delta = spec.dividend_fn(t, P);
    sigma = spec.vol_fn(t, P);
  }
  const Vec excess = b + delta - Vec::Constant(n, r);

  Vec merton(n);
  if (n == 1) {
    const double ss = sigma.row(0).squaredNorm();
    if (!(ss > 0.0)) throw SingularCovariance("sigma sigma' is singular");
    merton[0] = excess[0] / ss;
  } else {
    const Mat cov = sigma * sigma.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = es.eigenvalues().maxCoeff();
    if (!(lo > 0.0) || hi / lo > sigma_condition_limit_) {
      throw SingularCovariance("sigma sigma' condition number too large");
    }
    merton = cov.ldlt().solve(excess);
  }

  const double xi = wealth(t, H, P);
  const auto& model = varpi_->model();
  bool deterministic_pi = model.kind == endowment::EndowmentKind::zero;
  if (!deterministic_pi &&
      model.kind == endowment::EndowmentKind::deterministic) {
    // With eps(t) and a vanishing market price of risk the conditional
    // endowment value is deterministic and the hedging terms drop out.
    const Vec theta = market::market_price_of_risk(spec, t, P);
    deterministic_pi = theta.lpNorm<Eigen::Infinity>() <= 1e-14;
  }
  if (deterministic_pi) {
    return merton * xi;
  }

  const double vp = (*varpi_)(t, P);
  const Vec phi = varpi_->phi(t, P);  // n+1, phi[0] = 0 by construction
  return (xi + vp + phi[0]) * merton - phi.tail(n);
}

double Solution::bond_position(double t, double H, const Vec& P) const {
  return wealth(t, H, P) - portfolio(t, H, P).sum();
}

Solution solve_with_estimator(std::shared_ptr<const endowment::VarPi> varpi,
                              const StatePreference& pref, ProblemKind kind,
                              double x, const Vec& p,
                              const SolveConfig& config) {
  const market::MarketSpec& spec = varpi->spec();
  spec.validate();
  if (p.size() != spec.n_stocks || (p.array() <= 0.0).any()) {
    throw DomainError("solve: p must be a positive n-vector");
  }
  if (!std::isfinite(x)) throw DomainError("solve: x must be finite");
  const double s = config.start_time;
  if (s < 0.0 || s >= pref.horizon) {
    throw DomainError("solve: start time outside [0, T)");
  }
  if (kind == ProblemKind::terminal_only && !pref.has_terminal()) {
    throw DomainError("terminal-only problem needs a terminal utility");
  }

  // Homogeneity gate: the feedback maps below are optimal only under the
  // scaling property, so refuse preferences that fail it numerically.
  {
    const double T = pref.horizon;
    const std::array<double, 4> knots{s, s + 0.25 * (T - s), s + 0.5 * (T - s),
                                      s + 0.75 * (T - s)};
    const std::array<double, 4> x_grid{0.1, 1.0, 10.0, 100.0};
    double dev = 0.0;
    for (double a : knots) {
      for (double b : knots) {
        if (b < a) continue;
        dev = std::max(dev, preferences::verify_homogeneity(
                                pref, a, b, x_grid, kind));
      }
    }
    if (dev > config.homogeneity_tol) {
      throw NotHomogeneous(
          "preference fails the homogeneity gate (deviation " +
          std::to_string(dev) + ")");
    }
  }

  Solution sol;
  sol.kind_ = kind;
  sol.start_time_ = s;
  sol.x0_ = x;
  sol.p0_ = p;
  sol.sigma_condition_limit_ = config.sigma_condition_limit;
  sol.pref_ = std::make_shared<const StatePreference>(pref);
  sol.varpi_ = std::move(varpi);
  sol.varpi0_ = (*sol.varpi_)(s, p);

  try {
    sol.y_ = lagrange_multiplier(pref, sol.varpi0_, x, kind, s);
    sol.branch_ = Branch::interior;
    sol.value_ = value_function(pref, kind, sol.y_, s);
  } catch (const FloorRegion&) {
    sol.branch_ = Branch::floor;
    sol.y_ = 0.0;
    double v = 0.0;
    if (kind != ProblemKind::terminal_only) {
      v += floor_running_value(pref, s);
    }
    if (kind != ProblemKind::consumption_only && pref.has_terminal()) {
      v += pref.U2(std::max(x - sol.varpi0_, 0.0));
    }
    sol.value_ = v;
  }
  return sol;
}

Solution solve(const market::MarketSpec& spec, const StatePreference& pref,
               const endowment::EndowmentModel& endow, ProblemKind kind,
               double x, const Vec& p, const SolveConfig& config) {
  auto estimator = std::make_shared<const endowment::VarPi>(
      endow, spec, config.varpi_mode);
  return solve_with_estimator(std::move(estimator), pref, kind, x, p, config);
}

PathStats evaluate_on_bundle(const Solution& solution,
                             const market::PathBundle& bundle,
                             bool with_portfolio) {
  const std::size_t nodes = bundle.n_nodes();
  const std::size_t paths = bundle.n_paths;
  const int n = bundle.n_stocks;

  PathStats out;
  out.times = bundle.grid.times();
  out.mean_wealth.resize(nodes);
  out.se_wealth.resize(nodes);
  out.mean_consumption.resize(nodes);
  out.se_consumption.resize(nodes);
  if (with_portfolio) {
    out.mean_portfolio.resize(nodes, n);
    out.se_portfolio.resize(nodes, n);
  }

  std::vector<double> xi(paths), cons(paths);
  Mat pis;
  if (with_portfolio) pis.resize(paths, n);
  for (std::size_t j = 0; j < nodes; ++j) {
    const double t = bundle.grid.time(j);
    num::parallel_for_chunks(paths, [&](std::size_t b, std::size_t e) {
      for (std::size_t k = b; k < e; ++k) {
        const double H = bundle.deflator_at(k, j);
        const Vec P = bundle.price_vec(k, j);
        xi[k] = solution.wealth(t, H, P);
        cons[k] = solution.consumption(t, H);
        if (with_portfolio) {
          pis.row(k) = solution.portfolio(t, H, P).transpose();
        }
      }
    });
    const auto mw = num::mean_se(xi);
    out.mean_wealth[j] = mw.mean;
    out.se_wealth[j] = mw.se;
    const auto mc = num::mean_se(cons);
    out.mean_consumption[j] = mc.mean;
    out.se_consumption[j] = mc.se;
    if (with_portfolio) {
      std::vector<double> col(paths);
      for (int i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < paths; ++k) col[k] = pis(k, i);
        const auto mp = num::mean_se(col);
        out.mean_portfolio(j, i) = mp.mean;
        out.se_portfolio(j, i) = mp.se;
      }
    }
  }
  return out;
}

}  // namespace optima::optimizer
