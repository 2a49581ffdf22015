#include "optima/preferences.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "optima/errors.hpp"
#include "optima/numerics.hpp"

namespace optima {

const char* to_string(ProblemKind kind) {
  switch (kind) {
    case ProblemKind::consumption_only:
      return "consumption_only";
    case ProblemKind::terminal_only:
      return "terminal_only";
    case ProblemKind::both:
      return "both";
  }
  return "?";
}

}  // namespace optima

namespace optima::preferences {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kWeightIntegralTol = 1e-13;
constexpr double kCustomQuadTol = 1e-10;
constexpr double kInvertTol = 1e-10;

void require_time(const StatePreference& pref, double t) {
  if (t < 0.0 || t > pref.horizon) {
    throw DomainError("time outside [0, horizon]");
  }
}

}  // namespace

const char* to_string(Family family) {
  switch (family) {
    case Family::power:
      return "power";
    case Family::log_utility:
      return "log";
    case Family::separable:
      return "separable";
    case Family::custom:
      return "custom";
  }
  return "?";
}

StatePreference StatePreference::power(double alpha, double h_value, double c,
                                       double T) {
  StatePreference p = power(alpha, [h_value](double) { return h_value; }, c, T);
  p.h_const = h_value;
  return p;
}

StatePreference StatePreference::power(double alpha,
                                       std::function<double(double)> h,
                                       double c, double T) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw DomainError("power family needs alpha in (0, 1)");
  }
  if (c < 0.0) throw DomainError("bequest weight must be nonnegative");
  if (!(T > 0.0)) throw DomainError("horizon must be positive");
  StatePreference p;
  p.family = Family::power;
  p.alpha = alpha;
  p.h = std::move(h);
  p.bequest = c;
  p.horizon = T;
  return p;
}

StatePreference StatePreference::log_family(double h_value, double c,
                                            double T) {
  StatePreference p = log_family([h_value](double) { return h_value; }, c, T);
  p.h_const = h_value;
  return p;
}

StatePreference StatePreference::log_family(std::function<double(double)> h,
                                            double c, double T) {
  if (c < 0.0) throw DomainError("bequest weight must be nonnegative");
  if (!(T > 0.0)) throw DomainError("horizon must be positive");
  StatePreference p;
  p.family = Family::log_utility;
  p.h = std::move(h);
  p.bequest = c;
  p.horizon = T;
  return p;
}

StatePreference StatePreference::separable(std::function<double(double)> u,
                                           std::function<double(double)> du,
                                           std::function<double(double)> du_inv,
                                           double h_value, double c, double T) {
  if (c < 0.0) throw DomainError("bequest weight must be nonnegative");
  if (!(T > 0.0)) throw DomainError("horizon must be positive");
  if (!u || !du || !du_inv) {
    throw DomainError("separable family needs u, u' and (u')^-1");
  }
  StatePreference p;
  p.family = Family::separable;
  p.h = [h_value](double) { return h_value; };
  p.h_const = h_value;
  p.bequest = c;
  p.horizon = T;
  p.inner_u = std::move(u);
  p.inner_du = std::move(du);
  p.inner_inv = std::move(du_inv);
  return p;
}

StatePreference StatePreference::custom(
    std::function<double(double, double)> U1,
    std::function<double(double, double)> I1, std::function<double(double)> U2,
    std::function<double(double)> I2, double T) {
  if (!U1 || !I1) throw DomainError("custom family needs U1 and I1");
  if (static_cast<bool>(U2) != static_cast<bool>(I2)) {
    throw DomainError("custom family needs U2 and I2 together or neither");
  }
  if (!(T > 0.0)) throw DomainError("horizon must be positive");
  StatePreference p;
  p.family = Family::custom;
  p.horizon = T;
  p.custom_U1 = std::move(U1);
  p.custom_I1 = std::move(I1);
  p.custom_U2 = std::move(U2);
  p.custom_I2 = std::move(I2);
  return p;
}

bool StatePreference::has_terminal() const {
  if (family == Family::custom) return static_cast<bool>(custom_I2);
  return bequest > 0.0;
}

double StatePreference::U1(double t, double x) const {
  if (x < 0.0) throw DomainError("U1: negative consumption");
  switch (family) {
    case Family::power:
      return h(t) * std::pow(x, alpha);
    case Family::log_utility:
      return x == 0.0 ? -kInf : h(t) * std::log(x);
    case Family::separable: {
      const double ht = h(t);
      return ht * inner_u(x / ht);
    }
    case Family::custom:
      return custom_U1(t, x);
  }
  return 0.0;
}

double StatePreference::I1(double t, double y) const {
  if (!(y > 0.0)) throw DomainError("I1: marginal value must be positive");
  switch (family) {
    case Family::power:
      return std::pow(alpha * h(t) / y, 1.0 / (1.0 - alpha));
    case Family::log_utility:
      return h(t) / y;
    case Family::separable:
      return h(t) * inner_inv(y);
    case Family::custom:
      return custom_I1(t, y);
  }
  return 0.0;
}

double StatePreference::U2(double x) const {
  if (x < 0.0) throw DomainError("U2: negative wealth");
  switch (family) {
    case Family::power:
      return bequest == 0.0 ? 0.0 : bequest * std::pow(x, alpha);
    case Family::log_utility:
      if (bequest == 0.0) return 0.0;
      return x == 0.0 ? -kInf : bequest * std::log(x);
    case Family::separable:
      return bequest == 0.0 ? 0.0 : bequest * inner_u(x / bequest);
    case Family::custom:
      return custom_U2 ? custom_U2(x) : 0.0;
  }
  return 0.0;
}

double StatePreference::I2(double y) const {
  if (!(y > 0.0)) throw DomainError("I2: marginal value must be positive");
  switch (family) {
    case Family::power:
      return bequest == 0.0
                 ? 0.0
                 : std::pow(alpha * bequest / y, 1.0 / (1.0 - alpha));
    case Family::log_utility:
      return bequest / y;
    case Family::separable:
      return bequest == 0.0 ? 0.0 : bequest * inner_inv(y);
    case Family::custom:
      return custom_I2 ? custom_I2(y) : 0.0;
  }
  return 0.0;
}

double StatePreference::weight(double t) const {
  if (family == Family::power) {
    return std::pow(h(t), 1.0 / (1.0 - alpha));
  }
  return h(t);
}

double StatePreference::weight_integral(double t) const {
  require_time(*this, t);
  if (h_const) {
    const double w = family == Family::power
                         ? std::pow(*h_const, 1.0 / (1.0 - alpha))
                         : *h_const;
    return (horizon - t) * w;
  }
  return num::integrate([this](double u) { return weight(u); }, t, horizon,
                        kWeightIntegralTol);
}

double StatePreference::bequest_term() const {
  if (family == Family::power) {
    return bequest == 0.0 ? 0.0 : std::pow(bequest, 1.0 / (1.0 - alpha));
  }
  return bequest;
}

namespace {

// Effective scale K used by the closed-form families: bequest part plus
// running part, masked by the problem kind.
double effective_K(const StatePreference& pref, double t, ProblemKind kind) {
  double k = 0.0;
  if (kind != ProblemKind::consumption_only) k += pref.bequest_term();
  if (kind != ProblemKind::terminal_only) k += pref.weight_integral(t);
  return k;
}

}  // namespace

double capital_X(const StatePreference& pref, double t, double y,
                 ProblemKind kind) {
  if (!(y > 0.0)) throw DomainError("capital_X: y must be positive");
  require_time(pref, t);
  if (pref.family == Family::custom) {
    double x = 0.0;
    if (kind != ProblemKind::terminal_only) {
      x += num::integrate([&](double u) { return pref.I1(u, y); }, t,
                          pref.horizon, kCustomQuadTol);
    }
    if (kind != ProblemKind::consumption_only) x += pref.I2(y);
    return x;
  }
  const double k = effective_K(pref, t, kind);
  switch (pref.family) {
    case Family::power:
      return std::pow(pref.alpha / y, 1.0 / (1.0 - pref.alpha)) * k;
    case Family::log_utility:
      return k / y;
    case Family::separable:
      return pref.inner_inv(y) * k;
    default:
      break;
  }
  return 0.0;
}

double invert_X(const StatePreference& pref, double t, double x,
                ProblemKind kind) {
  if (!(x > 0.0)) throw DomainError("invert_X: x must be positive");
  require_time(pref, t);
  if (pref.family == Family::custom) {
    return num::invert_decreasing(
        [&](double y) { return capital_X(pref, t, y, kind); }, x, kInvertTol,
        200);
  }
  const double k = effective_K(pref, t, kind);
  if (!(k > 0.0)) {
    throw DomainError("invert_X: demand map is identically zero here");
  }
  switch (pref.family) {
    case Family::power:
      return pref.alpha * std::pow(k / x, 1.0 - pref.alpha);
    case Family::log_utility:
      return k / x;
    case Family::separable:
      return pref.inner_du(x / k);
    default:
      break;
  }
  throw UnsupportedFamily("invert_X: unknown family");
}

HomogeneityCoefficients homogeneity_coefficients(const StatePreference& pref,
                                                 double s, double t) {
  if (pref.family == Family::custom) {
    throw UnsupportedFamily(
        "homogeneity coefficients exist in closed form only for the "
        "built-in families");
  }
  if (!(0.0 <= s && s <= t && t <= pref.horizon)) {
    throw DomainError("homogeneity_coefficients: need 0 <= s <= t <= T");
  }
  const double b = pref.bequest_term();
  const double denom = b + pref.weight_integral(t);
  HomogeneityCoefficients out;
  out.alpha_st = (b + pref.weight_integral(s)) / denom;
  out.alpha_I_t = pref.weight(t) / denom;
  return out;
}

double verify_homogeneity(const StatePreference& pref, double s, double t,
                          std::span<const double> x_grid, ProblemKind kind) {
  if (x_grid.empty()) return 0.0;
  for (double x : x_grid) {
    if (!(x > 0.0)) throw DomainError("verify_homogeneity: grid must be > 0");
  }
  auto spread = [](const std::vector<double>& ratios) {
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    const double mid = 0.5 * (*lo + *hi);
    if (mid == 0.0) return *hi - *lo;
    return (*hi - *lo) / std::abs(mid);
  };

  std::vector<double> consumption_ratio, marginal_ratio;
  consumption_ratio.reserve(x_grid.size());
  marginal_ratio.reserve(x_grid.size());
  for (double x : x_grid) {
    consumption_ratio.push_back(capital_X(pref, s, invert_X(pref, t, x, kind),
                                          kind) / x);
    marginal_ratio.push_back(pref.I1(s, invert_X(pref, s, x, kind)) / x);
  }
  return std::max(spread(consumption_ratio), spread(marginal_ratio));
}

UtilitySlice running_slice(const StatePreference& pref, double t) {
  return UtilitySlice{
      [pref, t](double x) { return pref.U1(t, x); },
      [pref, t](double y) { return pref.I1(t, y); },
  };
}

UtilitySlice terminal_slice(const StatePreference& pref) {
  if (!pref.has_terminal()) {
    throw DomainError("terminal_slice: preference has no terminal utility");
  }
  return UtilitySlice{
      [pref](double x) { return pref.U2(x); },
      [pref](double y) { return pref.I2(y); },
  };
}

double duality_gap(const UtilitySlice& slice, double y,
                   std::span<const double> x_grid) {
  if (!(y > 0.0)) throw DomainError("duality_gap: y must be positive");
  const double i = slice.marginal_inverse(y);
  const double best = slice.value(i) - y * i;
  double gap = -kInf;
  for (double x : x_grid) {
    gap = std::max(gap, slice.value(x) - x * y - best);
  }
  return gap;
}

SanityReport preference_sanity_check(const StatePreference& pref, int nt,
                                     int nx) {
  SanityReport rep;
  for (int it = 0; it < nt; ++it) {
    const double t = pref.horizon * static_cast<double>(it) /
                     static_cast<double>(nt);
    double prev = 0.0;
    for (int ix = 0; ix < nx; ++ix) {
      const double x =
          std::pow(10.0, -2.0 + 4.0 * static_cast<double>(ix) /
                                    static_cast<double>(nx - 1));
      const double u = pref.U1(t, x);
      if (ix > 0 && !(u > prev)) rep.increasing = false;
      prev = u;

      // marginal-inverse round trip with a central-difference marginal
      const double step = 1e-6 * x;
      const double du = (pref.U1(t, x + step) - pref.U1(t, x - step)) /
                        (2.0 * step);
      if (du > 0.0) {
        const double back = pref.I1(t, du);
        rep.max_inverse_dev =
            std::max(rep.max_inverse_dev, std::abs(back - x) / x);
      }
    }
    // concavity: second differences on a uniform grid
    const double lo = 0.5, hi = 4.0;
    const int m = 9;
    std::vector<double> us(m);
    for (int i = 0; i < m; ++i) {
      us[i] = pref.U1(t, lo + (hi - lo) * i / (m - 1));
    }
    for (int i = 1; i + 1 < m; ++i) {
      if (!(us[i + 1] - 2.0 * us[i] + us[i - 1] < 0.0)) rep.concave = false;
    }
  }
  return rep;
}

}  // namespace optima::preferences
