#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace qlbe {

using complex = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846;

// Gauss-Legendre rule on [-1, 1].
struct GaussLegendre {
  std::vector<double> nodes;
  std::vector<double> weights;
};

// Nodes/weights for n points. Results are cached; the returned reference
// stays valid for the program lifetime.
const GaussLegendre& gauss_legendre(int n);

// Neumaier compensated accumulator. Summation order is the caller's, so a
// fixed order gives bit-identical results independent of threading.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v)) {
      c_ += (sum_ - t) + v;
    } else {
      c_ += (v - t) + sum_;
    }
    sum_ = t;
  }
  double value() const { return sum_ + c_; }

 private:
  double sum_ = 0.0;
  double c_ = 0.0;
};

class CompensatedComplexSum {
 public:
  void add(const complex& v) {
    re_.add(v.real());
    im_.add(v.imag());
  }
  complex value() const { return {re_.value(), im_.value()}; }

 private:
  CompensatedSum re_;
  CompensatedSum im_;
};

// Runs fn(begin, end) over contiguous chunks of [0, n) on up to `threads`
// workers. Chunk boundaries depend on n and threads only.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t, std::size_t)>& fn);

// Default worker count: logical cores (at least 1).
int default_threads();

}  // namespace qlbe
