#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace optima::num {

// splitmix64: the output function is a strong 64-bit mixer, so streams
// seeded at nearby values (seed ^ path_index) are statistically
// independent. State advances by the golden-gamma increment.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on (0, 1].
  double next_uniform() {
    return 1.0 - static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Standard normal via Box-Muller, cosine branch only. Consumes exactly
  // two uniforms per draw, which keeps increment streams reproducible.
  double next_gaussian();

 private:
  std::uint64_t state_;
};

// Derives the per-path stream seed. Paths are stable under changes to
// the total path count and under any partition across threads.
inline std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path_index) {
  return seed ^ path_index;
}

// Summation with O(log n) error growth; reduction order is fixed by the
// element order, independent of threading.
double pairwise_sum(std::span<const double> xs);

struct MeanStdErr {
  double mean = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

// Two-pass mean and standard error, both via pairwise summation.
MeanStdErr mean_se(std::span<const double> xs);

// Adaptive Simpson quadrature. `tol` is relative to the magnitude of the
// whole integral (with a floor of 1 for near-zero integrals). Exact on
// constants, which some callers rely on.
double integrate(const std::function<double(double)>& f, double a, double b,
                 double tol = 1e-10, int max_depth = 20);

// Solves f(y) = target for y > 0 where f is continuous and strictly
// decreasing onto (0, inf). Brackets by geometric expansion from y = 1,
// then runs a bisection/secant hybrid in log space until
// |f(y) - target| <= rel_tol * |target|. Throws ConvergenceError when the
// iteration budget runs out and DomainError when target <= 0.
double invert_decreasing(const std::function<double(double)>& f, double target,
                         double rel_tol = 1e-10, int max_iter = 200);

// Shortest round-trip decimal representation.
std::string format_double(double v);

// Thread count cap: min(hardware, OPTIMA_THREADS if set). Never below 1.
unsigned thread_budget();

// Runs fn(begin, end) over a partition of [0, n) on up to thread_budget()
// threads. Results must not depend on the partition; callers write to
// disjoint slices.
void parallel_for_chunks(std::size_t n,
                         const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace optima::num
