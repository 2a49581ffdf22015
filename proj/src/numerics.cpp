#include "optima/numerics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numbers>
#include <string>
#include <thread>

#include "optima/errors.hpp"

namespace optima::num {

double SplitMix64::next_gaussian() {
  const double u1 = next_uniform();
  const double u2 = next_uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

double pairwise_sum(std::span<const double> xs) {
  const std::size_t n = xs.size();
  if (n <= 16) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

MeanStdErr mean_se(std::span<const double> xs) {
  MeanStdErr out;
  out.n = xs.size();
  if (out.n == 0) return out;
  out.mean = pairwise_sum(xs) / static_cast<double>(out.n);
  if (out.n < 2) return out;
  std::vector<double> sq(out.n);
  for (std::size_t i = 0; i < out.n; ++i) {
    const double d = xs[i] - out.mean;
    sq[i] = d * d;
  }
  const double var =
      pairwise_sum(sq) / static_cast<double>(out.n - 1);
  out.se = std::sqrt(var / static_cast<double>(out.n));
  return out;
}

namespace {

double simpson(double a, double fa, double b, double fb, double fm) {
  return (b - a) * ((fa + 4.0 * fm + fb) / 6.0);
}

double adapt(const std::function<double(double)>& f, double a, double fa,
             double b, double fb, double m, double fm, double whole,
             double eps, int depth) {
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = simpson(a, fa, m, fm, flm);
  const double right = simpson(m, fm, b, fb, frm);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * eps) {
    return left + right + delta / 15.0;
  }
  return adapt(f, a, fa, m, fm, lm, flm, left, 0.5 * eps, depth - 1) +
         adapt(f, m, fm, b, fb, rm, frm, right, 0.5 * eps, depth - 1);
}

}  // namespace

double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol, int max_depth) {
  if (a == b) return 0.0;
  const double fa = f(a);
  const double fb = f(b);
  const double m = 0.5 * (a + b);
  const double fm = f(m);
  const double whole = simpson(a, fa, b, fb, fm);
  if (whole == 0.0 && fa == 0.0 && fb == 0.0 && fm == 0.0) {
    // Cheap zero fast path; also keeps "integral of zero" exact.
    return 0.0;
  }
  const double eps = tol * std::max(std::abs(whole), 1.0);
  return adapt(f, a, fa, b, fb, m, fm, whole, eps, max_depth);
}

double invert_decreasing(const std::function<double(double)>& f, double target,
                         double rel_tol, int max_iter) {
  if (!(target > 0.0)) {
    throw DomainError("invert_decreasing: target must be positive");
  }
  const double atol = rel_tol * std::abs(target);
  int evals = 0;
  auto g = [&](double y) {
    ++evals;
    return f(y) - target;
  };

  double lo = 1.0, hi = 1.0;
  double glo = g(1.0);
  double ghi = glo;
  if (std::abs(glo) <= atol) return 1.0;
  if (glo > 0.0) {
    // f(1) above target: move right (f decreasing).
    while (ghi > 0.0) {
      lo = hi;
      glo = ghi;
      hi *= 10.0;
      if (hi > 1e8 || evals > max_iter) {
        throw ConvergenceError("invert_decreasing: no bracket above y=1");
      }
      ghi = g(hi);
      if (std::abs(ghi) <= atol) return hi;
    }
  } else {
    while (glo < 0.0) {
      hi = lo;
      ghi = glo;
      lo /= 10.0;
      if (lo < 1e-8 || evals > max_iter) {
        throw ConvergenceError("invert_decreasing: no bracket below y=1");
      }
      glo = g(lo);
      if (std::abs(glo) <= atol) return lo;
    }
  }

  // Bisection/secant hybrid in log(y); g(lo) > 0 > g(hi).
  double ulo = std::log(lo), uhi = std::log(hi);
  for (int it = 0; it < max_iter; ++it) {
    double u;
    if (glo != ghi) {
      // secant proposal, clamped away from the bracket edges
      u = ulo + (uhi - ulo) * glo / (glo - ghi);
      const double margin = 0.01 * (uhi - ulo);
      if (!(u > ulo + margin && u < uhi - margin)) u = 0.5 * (ulo + uhi);
    } else {
      u = 0.5 * (ulo + uhi);
    }
    const double y = std::exp(u);
    const double gy = g(y);
    if (std::abs(gy) <= atol || uhi - ulo < 1e-15) return y;
    if (gy > 0.0) {
      ulo = u;
      glo = gy;
    } else {
      uhi = u;
      ghi = gy;
    }
  }
  throw ConvergenceError("invert_decreasing: exceeded max iterations");
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

unsigned thread_budget() {
  unsigned hw = std::thread::hardware_concurrency();
  if (hw == 0) hw = 1;
  if (const char* env = std::getenv("OPTIMA_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap >= 1 && static_cast<unsigned>(cap) < hw) {
      hw = static_cast<unsigned>(cap);
    }
  }
  return hw;
}

void parallel_for_chunks(
    std::size_t n, const std::function<void(std::size_t, std::size_t)>& fn) {
  const unsigned budget = thread_budget();
  if (budget <= 1 || n < 2) {
    fn(0, n);
    return;
  }
  const unsigned workers =
      static_cast<unsigned>(std::min<std::size_t>(budget, n));
  std::vector<std::thread> pool;
  pool.reserve(workers);
  const std::size_t chunk = (n + workers - 1) / workers;
  for (unsigned w = 0; w < workers; ++w) {
    const std::size_t begin = static_cast<std::size_t>(w) * chunk;
    const std::size_t end = std::min(n, begin + chunk);
    if (begin >= end) break;
    pool.emplace_back([&fn, begin, end] { fn(begin, end); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace optima::num
