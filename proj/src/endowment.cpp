#include "optima/endowment.hpp"

#include <algorithm>
#include <cmath>

#include "optima/errors.hpp"
#include "optima/numerics.hpp"

namespace optima::endowment {

const char* to_string(EndowmentKind kind) {
  switch (kind) {
    case EndowmentKind::zero:
      return "zero";
    case EndowmentKind::deterministic:
      return "deterministic";
    case EndowmentKind::markov:
      return "markov";
  }
  return "?";
}

const char* to_string(VarpiMode mode) {
  switch (mode) {
    case VarpiMode::auto_select:
      return "auto";
    case VarpiMode::closed_form:
      return "closed_form";
    case VarpiMode::monte_carlo:
      return "monte_carlo";
    case VarpiMode::custom:
      return "custom";
  }
  return "?";
}

EndowmentModel EndowmentModel::zero() {
  EndowmentModel m;
  m.kind = EndowmentKind::zero;
  m.rate_fn = [](double, const Vec&) { return 0.0; };
  return m;
}

EndowmentModel EndowmentModel::deterministic(
    std::function<double(double)> eps) {
  EndowmentModel m;
  m.kind = EndowmentKind::deterministic;
  m.rate_fn = [eps = std::move(eps)](double t, const Vec&) { return eps(t); };
  return m;
}

EndowmentModel EndowmentModel::markov(
    std::function<double(double, const Vec&)> eps) {
  EndowmentModel m;
  m.kind = EndowmentKind::markov;
  m.rate_fn = std::move(eps);
  return m;
}

namespace {

VarpiMode resolve_mode(const EndowmentModel& model, VarpiMode requested) {
  if (requested != VarpiMode::auto_select) return requested;
  switch (model.kind) {
    case EndowmentKind::zero:
    case EndowmentKind::deterministic:
      return VarpiMode::closed_form;
    case EndowmentKind::markov:
      return VarpiMode::monte_carlo;
  }
  return VarpiMode::monte_carlo;
}

}  // namespace

VarPi::VarPi(EndowmentModel model, market::MarketSpec spec, VarpiMode mode)
    : model_(std::move(model)),
      spec_(std::move(spec)),
      mode_(resolve_mode(model_, mode)) {
  if (mode_ == VarpiMode::custom) {
    throw DomainError("custom mode needs VarPi::exact");
  }
  if (mode_ == VarpiMode::closed_form &&
      model_.kind == EndowmentKind::markov) {
    throw DomainError(
        "closed-form varpi needs a deterministic or zero endowment");
  }
}

VarPi VarPi::exact(EndowmentModel model, market::MarketSpec spec,
                   std::function<double(double, const Vec&)> value_fn) {
  VarPi v(std::move(model), std::move(spec), VarpiMode::monte_carlo);
  v.mode_ = VarpiMode::custom;
  v.exact_fn_ = std::move(value_fn);
  return v;
}

std::vector<double> VarPi::mc_samples(double t, const Vec& p) const {
  const double T = spec_.horizon;
  const market::TimeGrid grid(t, T, model_.mc_inner_steps);
  const market::PathBundle paths =
      market::simulate_paths(spec_, grid, p, model_.mc_inner_paths,
                             model_.mc_seed);
  const std::size_t nodes = grid.n_nodes();
  std::vector<double> integrals(paths.n_paths);
  std::vector<double> eps_buf;
  num::parallel_for_chunks(paths.n_paths, [&](std::size_t b, std::size_t e) {
    for (std::size_t k = b; k < e; ++k) {
      double acc = 0.0;
      double prev = paths.deflator_at(k, 0) *
                    model_.rate_fn(grid.time(0), paths.price_vec(k, 0));
      for (std::size_t j = 1; j < nodes; ++j) {
        const double cur = paths.deflator_at(k, j) *
                           model_.rate_fn(grid.time(j), paths.price_vec(k, j));
        acc += 0.5 * (prev + cur) * grid.dt(j - 1);
        prev = cur;
      }
      integrals[k] = acc;
    }
  });
  (void)eps_buf;
  return integrals;
}

VarPi::Estimate VarPi::mc_estimate(double t, const Vec& p) const {
  if (t >= spec_.horizon) return {0.0, 0.0};
  const auto integrals = mc_samples(t, p);
  const auto ms = num::mean_se(integrals);
  if (!std::isfinite(ms.mean)) {
    throw NonFiniteError("varpi Monte Carlo estimate is non-finite");
  }
  return {-ms.mean, ms.se};
}

double VarPi::eval_raw(double t, const Vec& p) const {
  if (model_.kind == EndowmentKind::zero) return 0.0;
  if (t >= spec_.horizon) return 0.0;
  switch (mode_) {
    case VarpiMode::closed_form: {
      // deterministic eps and r: varpi(t) = -int_t^T exp(-int_t^u r) eps(u) du
      auto rate_integral = [&](double u) {
        return num::integrate(
            [&](double v) { return spec_.rate_fn(v, p); }, t, u, 1e-12);
      };
      const double val = num::integrate(
          [&](double u) {
            return std::exp(-rate_integral(u)) * model_.rate_fn(u, p);
          },
          t, spec_.horizon, 1e-12);
      if (!std::isfinite(val)) {
        throw NonFiniteError("closed-form varpi is non-finite");
      }
      return -val;
    }
    case VarpiMode::monte_carlo:
      return mc_estimate(t, p).value;
    case VarpiMode::custom:
      return exact_fn_(t, p);
    case VarpiMode::auto_select:
      break;
  }
  throw DomainError("unresolved varpi mode");
}

double VarPi::operator()(double t, const Vec& p) const {
  if (cache_) {
    // multilinear interpolation on (t, log p), clamped to the grid box
    const Cache& c = *cache_;
    const auto locate = [](const std::vector<double>& nodes, double v) {
      const auto it = std::upper_bound(nodes.begin(), nodes.end(), v);
      std::size_t hi = static_cast<std::size_t>(it - nodes.begin());
      hi = std::clamp<std::size_t>(hi, 1, nodes.size() - 1);
      const std::size_t lo = hi - 1;
      double w = (v - nodes[lo]) / (nodes[hi] - nodes[lo]);
      w = std::clamp(w, 0.0, 1.0);
      return std::pair<std::size_t, double>(lo, w);
    };
    const int n = spec_.n_stocks;
    std::vector<std::pair<std::size_t, double>> axes;
    axes.reserve(1 + n);
    axes.push_back(locate(c.t_nodes, t));
    for (int i = 0; i < n; ++i) {
      axes.push_back(locate(c.logp_nodes[i], std::log(p[i])));
    }
    std::vector<std::size_t> strides(axes.size(), 1);
    for (int a = static_cast<int>(axes.size()) - 2; a >= 0; --a) {
      const std::size_t extent = a == 0 ? c.logp_nodes[0].size()
                                        : c.logp_nodes[a].size();
      strides[a] = strides[a + 1] * extent;
    }
    double acc = 0.0;
    const std::size_t corners = std::size_t{1} << axes.size();
    for (std::size_t mask = 0; mask < corners; ++mask) {
      double w = 1.0;
      std::size_t idx = 0;
      for (std::size_t a = 0; a < axes.size(); ++a) {
        const bool upper = (mask >> a) & 1u;
        w *= upper ? axes[a].second : 1.0 - axes[a].second;
        idx += (axes[a].first + (upper ? 1 : 0)) * strides[a];
      }
      acc += w * c.values[idx];
    }
    return acc;
  }
  return eval_raw(t, p);
}

VarPi::Estimate VarPi::estimate(double t, const Vec& p) const {
  if (model_.kind == EndowmentKind::zero || t >= spec_.horizon) {
    return {0.0, 0.0};
  }
  if (mode_ == VarpiMode::monte_carlo) return mc_estimate(t, p);
  return {eval_raw(t, p), 0.0};
}

Vec VarPi::phi(double t, const Vec& p) const {
  return phi_with_se(t, p).phi;
}

VarPi::PhiEstimate VarPi::phi_with_se(double t, const Vec& p) const {
  const int n = spec_.n_stocks;
  PhiEstimate out;
  out.phi = Vec::Zero(n + 1);
  out.se = Vec::Zero(n + 1);
  if (model_.kind != EndowmentKind::markov) return out;  // flat in p

  for (int i = 0; i < n; ++i) {
    Vec up = p, dn = p;
    up[i] = p[i] * (1.0 + kPhiBump);
    dn[i] = p[i] * (1.0 - kPhiBump);
    if (mode_ == VarpiMode::monte_carlo) {
      // common random numbers: both bumps reuse mc_seed
      const auto su = mc_samples(t, up);
      const auto sd = mc_samples(t, dn);
      std::vector<double> diff(su.size());
      for (std::size_t k = 0; k < su.size(); ++k) {
        // varpi = -mean(integral), so the difference flips sign
        diff[k] = (sd[k] - su[k]) / (2.0 * kPhiBump);
      }
      const auto ms = num::mean_se(diff);
      out.phi[i + 1] = ms.mean;
      out.se[i + 1] = ms.se;
    } else {
      const double vu = eval_raw(t, up);
      const double vd = eval_raw(t, dn);
      out.phi[i + 1] = (vu - vd) / (2.0 * kPhiBump);
    }
  }
  return out;
}

void VarPi::build_cache(double t_lo, double t_hi, std::size_t nt,
                        const Vec& p_lo, const Vec& p_hi,
                        std::size_t np_per_dim) {
  if (nt < 2 || np_per_dim < 2) {
    throw DomainError("cache needs at least two nodes per axis");
  }
  const int n = spec_.n_stocks;
  Cache c;
  c.t_nodes.resize(nt);
  for (std::size_t i = 0; i < nt; ++i) {
    c.t_nodes[i] = t_lo + (t_hi - t_lo) * static_cast<double>(i) /
                              static_cast<double>(nt - 1);
  }
  c.logp_nodes.resize(n);
  std::size_t total = nt;
  for (int i = 0; i < n; ++i) {
    c.logp_nodes[i].resize(np_per_dim);
    const double lo = std::log(p_lo[i]);
    const double hi = std::log(p_hi[i]);
    for (std::size_t j = 0; j < np_per_dim; ++j) {
      c.logp_nodes[i][j] = lo + (hi - lo) * static_cast<double>(j) /
                                    static_cast<double>(np_per_dim - 1);
    }
    total *= np_per_dim;
  }
  c.values.resize(total);

  // row-major over (t, p_1, ..., p_n)
  std::vector<std::size_t> extents{nt};
  for (int i = 0; i < n; ++i) extents.push_back(np_per_dim);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    std::vector<std::size_t> ix(extents.size());
    for (int a = static_cast<int>(extents.size()) - 1; a >= 0; --a) {
      ix[a] = rem % extents[a];
      rem /= extents[a];
    }
    Vec p(n);
    for (int i = 0; i < n; ++i) p[i] = std::exp(c.logp_nodes[i][ix[i + 1]]);
    c.values[flat] = eval_raw(c.t_nodes[ix[0]], p);
  }
  cache_ = std::move(c);
}

double varpi(const EndowmentModel& model, const market::MarketSpec& spec,
             double t, const Vec& p, VarpiMode mode) {
  return VarPi(model, spec, mode)(t, p);
}

double minimal_wealth(const EndowmentModel& model,
                      const market::MarketSpec& spec,
                      const market::PathBundle& paths, std::size_t path,
                      std::size_t node, VarpiMode mode) {
  if (path >= paths.n_paths || node >= paths.n_nodes()) {
    throw DomainError("minimal_wealth: path or node index out of range");
  }
  return varpi(model, spec, paths.grid.time(node), paths.price_vec(path, node),
               mode);
}

Vec phi_sensitivities(const EndowmentModel& model,
                      const market::MarketSpec& spec, double t, const Vec& p,
                      VarpiMode mode) {
  return VarPi(model, spec, mode).phi(t, p);
}

}  // namespace optima::endowment
