#include "kfbf/autodiff/bspline.hpp"

#include <algorithm>
#include <string>

#include "kfbf/error.hpp"

namespace kfbf::ad {
namespace {

void check_knots(std::span<const double> knots, int degree) {
  if (degree < 0) throw ContractError("B-spline degree must be >= 0");
  if (knots.size() < static_cast<std::size_t>(degree) + 2) {
    throw ContractError("B-spline of degree " + std::to_string(degree) + " needs at least " +
                        std::to_string(degree + 2) + " knots, got " +
                        std::to_string(knots.size()));
  }
  if (!std::is_sorted(knots.begin(), knots.end())) {
    throw ContractError("B-spline knots must be nondecreasing");
  }
}

// Fills scratch[0 .. m-d-1) with the degree-d basis and, if requested, the
// derivative of each basis function.
void cox_de_boor(double x, std::span<const double> t, int degree, std::span<double> n,
                 std::span<double> derivatives) {
  const std::size_t m = t.size();
  x = std::clamp(x, t.front(), t.back());

  for (std::size_t j = 0; j + 1 < m; ++j) n[j] = (t[j] <= x && x < t[j + 1]) ? 1.0 : 0.0;
  if (x >= t.back()) {
    for (std::size_t j = m - 1; j-- > 0;) {
      if (t[j] < t[j + 1]) {
        n[j] = 1.0;
        break;
      }
    }
  }

  const auto d = static_cast<std::size_t>(degree);
  for (std::size_t q = 1; q <= d; ++q) {
    if (q == d && !derivatives.empty()) {
      for (std::size_t j = 0; j + d + 1 < m; ++j) {
        const double dl = t[j + d] - t[j];
        const double dr = t[j + d + 1] - t[j + 1];
        double v = 0.0;
        if (dl > 0.0) v += static_cast<double>(d) / dl * n[j];
        if (dr > 0.0) v -= static_cast<double>(d) / dr * n[j + 1];
        derivatives[j] = v;
      }
    }
    for (std::size_t j = 0; j + q + 1 < m; ++j) {
      const double dl = t[j + q] - t[j];
      const double dr = t[j + q + 1] - t[j + 1];
      double v = 0.0;
      if (dl > 0.0) v += (x - t[j]) / dl * n[j];
      if (dr > 0.0) v += (t[j + q + 1] - x) / dr * n[j + 1];
      n[j] = v;
    }
  }
  if (d == 0 && !derivatives.empty()) {
    std::fill(derivatives.begin(), derivatives.begin() + static_cast<std::ptrdiff_t>(m - 1), 0.0);
  }
}

}  // namespace

std::vector<double> bspline_basis(double x, std::span<const double> knots, int degree) {
  check_knots(knots, degree);
  std::vector<double> scratch(knots.size());
  cox_de_boor(x, knots, degree, scratch, {});
  scratch.resize(knots.size() - static_cast<std::size_t>(degree) - 1);
  return scratch;
}

void bspline_basis_with_derivative(double x, std::span<const double> knots, int degree,
                                   std::span<double> values, std::span<double> derivatives,
                                   std::span<double> scratch) {
  const std::size_t count = knots.size() - static_cast<std::size_t>(degree) - 1;
  cox_de_boor(x, knots, degree, scratch, derivatives);
  std::copy_n(scratch.begin(), count, values.begin());
}

std::size_t bspline_local_basis(double x, std::span<const double> knots, int degree,
                                std::span<double> values, std::span<double> derivatives) {
  const auto d = static_cast<std::size_t>(degree);
  const std::size_t m = knots.size();
  if (degree < 0 || m < 2 * d + 2 || !(x >= knots[d] && x <= knots[m - 1 - d])) {
    throw ContractError("bspline_local_basis: x outside the fully supported knot range");
  }
  // span s with knots[s] <= x < knots[s + 1], pulled left at the closed right end
  const auto first = knots.begin() + static_cast<std::ptrdiff_t>(d);
  const auto last = knots.begin() + static_cast<std::ptrdiff_t>(m - d);
  std::size_t s = static_cast<std::size_t>(std::upper_bound(first, last, x) - knots.begin()) - 1;
  s = std::min(s, m - 2 - d);
  while (s > d && knots[s] == knots[s + 1]) --s;

  // Triangular table of the NURBS book, one degree at a time.
  double left[16], right[16];
  if (d >= 16) throw ContractError("bspline_local_basis: degree above 15");
  values[0] = 1.0;
  for (std::size_t j = 1; j <= d; ++j) {
    if (j == d && !derivatives.empty()) {
      // values[0..d) hold the degree d-1 functions starting at s-d+1
      for (std::size_t r = 0; r <= d; ++r) {
        double v = 0.0;
        if (r > 0) {
          const double den = knots[s + r] - knots[s + r - d];
          if (den > 0.0) v += values[r - 1] / den;
        }
        if (r < d) {
          const double den = knots[s + r + 1] - knots[s + r + 1 - d];
          if (den > 0.0) v -= values[r] / den;
        }
        derivatives[r] = static_cast<double>(d) * v;
      }
    }
    left[j] = x - knots[s + 1 - j];
    right[j] = knots[s + j] - x;
    double saved = 0.0;
    for (std::size_t r = 0; r < j; ++r) {
      const double tmp = values[r] / (right[r + 1] + left[j - r]);
      values[r] = saved + right[r + 1] * tmp;
      saved = left[j - r] * tmp;
    }
    values[j] = saved;
  }
  if (d == 0 && !derivatives.empty()) derivatives[0] = 0.0;
  return s - d;
}

}  // namespace kfbf::ad
