#pragma once

#include <functional>
#include <optional>
#include <span>

#include "optima/problem.hpp"

namespace optima::preferences {

enum class Family { power, log_utility, separable, custom };

const char* to_string(Family family);

// A state preference structure: running utility U1(t, .) over deflated
// consumption and terminal utility U2 over deflated final wealth, with
// marginal inverses I1, I2. The built-in families are
//   power:     U1(t,x) = h(t) x^alpha,        U2(x) = c x^alpha
//   log:       U1(t,x) = h(t) log(x),         U2(x) = c log(x)
//   separable: U1(t,x) = h(t) u(x / h(t)),    U2(x) = c u(x / c)
// with alpha in (0,1), c >= 0 and h positive continuous on [0, T].
// Utilities are extended to x = 0 by continuity (log gives -inf there).
struct StatePreference {
  Family family = Family::log_utility;
  double alpha = 0.5;
  std::function<double(double)> h;
  std::optional<double> h_const;  // set when h is a known constant
  double bequest = 0.0;           // c
  double horizon = 1.0;           // T

  // separable family: inner utility, its derivative, and the inverse of
  // the derivative; inner_u must accept 0 via its continuous extension
  std::function<double(double)> inner_u, inner_du, inner_inv;

  // custom family
  std::function<double(double, double)> custom_U1, custom_I1;
  std::function<double(double)> custom_U2, custom_I2;

  static StatePreference power(double alpha, double h_value, double c,
                               double T);
  static StatePreference power(double alpha, std::function<double(double)> h,
                               double c, double T);
  static StatePreference log_family(double h_value, double c, double T);
  static StatePreference log_family(std::function<double(double)> h, double c,
                                    double T);
  static StatePreference separable(std::function<double(double)> u,
                                   std::function<double(double)> du,
                                   std::function<double(double)> du_inv,
                                   double h_value, double c, double T);
  static StatePreference custom(std::function<double(double, double)> U1,
                                std::function<double(double, double)> I1,
                                std::function<double(double)> U2,
                                std::function<double(double)> I2, double T);

  bool has_terminal() const;

  double U1(double t, double x) const;
  double I1(double t, double y) const;
  double U2(double x) const;
  double I2(double y) const;

  // Family-specific effective weight: h^(1/(1-alpha)) for power, h
  // otherwise. The demand function factorizes through its integral.
  double weight(double t) const;
  double weight_integral(double t) const;  // int_t^T weight
  double bequest_term() const;             // c^(1/(1-alpha)) or c
};

struct HomogeneityCoefficients {
  double alpha_st = 1.0;   // scale of x -> X(s, X^-1(t, x))
  double alpha_I_t = 1.0;  // scale of x -> I1(t, X^-1(t, x))
};

// Aggregate demand X(t, y) = I2(y) + int_t^T I1(t', y) dt', or the
// consumption-only / terminal-only specializations. Strictly decreasing
// in y, mapping (0, inf) onto itself (when nonzero).
double capital_X(const StatePreference& pref, double t, double y,
                 ProblemKind kind = ProblemKind::both);

// y with |X(t, y) - x| <= 1e-10 * x. Closed form for the built-in
// families, bracketed bisection/secant for custom.
double invert_X(const StatePreference& pref, double t, double x,
                ProblemKind kind = ProblemKind::both);

// Closed-form scaling coefficients of the built-in families.
HomogeneityCoefficients homogeneity_coefficients(const StatePreference& pref,
                                                 double s, double t);

// Max relative spread of X(s, X^-1(t, x)) / x and of
// I1(s, X^-1(s, x)) / x over the grid. Near zero iff the preference is
// homogeneous in the tested range.
double verify_homogeneity(const StatePreference& pref, double s, double t,
                          std::span<const double> x_grid,
                          ProblemKind kind = ProblemKind::both);

// One-dimensional utility together with the inverse of its derivative.
struct UtilitySlice {
  std::function<double(double)> value;
  std::function<double(double)> marginal_inverse;
};

UtilitySlice running_slice(const StatePreference& pref, double t);
UtilitySlice terminal_slice(const StatePreference& pref);

// max over the grid of (U(x) - x y) minus (U(I(y)) - y I(y)); never
// positive beyond roundoff, with the max approached near x = I(y).
double duality_gap(const UtilitySlice& slice, double y,
                   std::span<const double> x_grid);

struct SanityReport {
  bool increasing = true;
  bool concave = true;
  double max_inverse_dev = 0.0;  // relative, I1 against numeric dU1/dx
};

// Grid smoke test of the utility contract.
SanityReport preference_sanity_check(const StatePreference& pref,
                                     int nt = 5, int nx = 17);

}  // namespace optima::preferences
