#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace cltlab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Neumaier compensated accumulator.
class KahanSum {
 public:
  void add(double v) {
    double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double sup_norm_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Maximize a 1-d unimodal-near-peak function on [lo,hi] by golden section.
// Returns (argmax, max). tol is the final bracket width.
template <typename F>
std::pair<double, double> golden_max(F&& f, double lo, double hi, double tol = 1e-12) {
  const double phi = 0.6180339887498949;
  double a = lo, b = hi;
  double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
  double f1 = f(x1), f2 = f(x2);
  while (b - a > tol) {
    if (f1 < f2) {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + phi * (b - a);
      f2 = f(x2);
    } else {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - phi * (b - a);
      f1 = f(x1);
    }
  }
  double xm = 0.5 * (a + b), fm = f(xm);
  if (f1 > fm) {
    fm = f1;
    xm = x1;
  }
  if (f2 > fm) {
    fm = f2;
    xm = x2;
  }
  return {xm, fm};
}

// Uniform spatial grid on [-L,L]^d with step delta; L is rounded up to a
// multiple of delta so that 0 is always a grid point.
struct Grid {
  int d = 1;
  double delta = 0.05;
  int half = 0;  // points per axis = 2*half+1

  Grid() = default;
  Grid(int dim, double L, double step);

  int points_per_axis() const { return 2 * half + 1; }
  std::size_t size() const {
    std::size_t s = 1;
    for (int i = 0; i < d; ++i) s *= static_cast<std::size_t>(points_per_axis());
    return s;
  }
  double extent() const { return half * delta; }

  // Coordinates of flat index g (row-major over axes), written into x[0..d).
  void coords(std::size_t g, double* x) const {
    std::size_t n1 = points_per_axis();
    for (int i = d - 1; i >= 0; --i) {
      x[i] = (static_cast<double>(g % n1) - half) * delta;
      g /= n1;
    }
  }
  // Flat index of the origin.
  std::size_t origin_index() const {
    std::size_t n1 = points_per_axis(), g = 0;
    for (int i = 0; i < d; ++i) g = g * n1 + half;
    return g;
  }
  // True if the flat index lies on the boundary shell of the box.
  bool on_boundary(std::size_t g) const {
    std::size_t n1 = points_per_axis();
    for (int i = 0; i < d; ++i) {
      std::size_t c = g % n1;
      if (c == 0 || c + 1 == n1) return true;
      g /= n1;
    }
    return false;
  }
  bool is_interior(std::size_t g) const { return !on_boundary(g); }
};

inline Grid::Grid(int dim, double L, double step) : d(dim), delta(step) {
  half = static_cast<int>(std::ceil(L / step - 1e-12));
  if (half < 1) half = 1;
}

}  // namespace cltlab
