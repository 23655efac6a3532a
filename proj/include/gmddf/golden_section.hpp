#pragma once

#include <cmath>
#include <stdexcept>

namespace gmddf {

inline int golden_section_iterations(double tol) {
  return static_cast<int>(std::ceil(std::log(tol) / std::log(0.618)));
}

/// Minimizes a unimodal f on [a, b]; the bracket shrinks by the golden ratio a fixed number of times.
/// Returns the midpoint of the final bracket.
template <typename F>
double golden_section_minimize(F&& f, double a, double b, double tol) {
  if (!(tol > 0.0 && tol < 1.0)) throw std::invalid_argument("golden section tolerance must lie in (0, 1)");
  const double g = (std::sqrt(5.0) - 1.0) / 2.0;
  double c = b - g * (b - a);
  double d = a + g * (b - a);
  double fc = f(c);
  double fd = f(d);
  const int iters = golden_section_iterations(tol);
  for (int i = 0; i < iters; ++i) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - g * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + g * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace gmddf
