#include <doctest.h>

#include <cmath>
#include <random>

#include "kfbf/autodiff/bspline.hpp"
#include "kfbf/autodiff/ops.hpp"
#include "kfbf/error.hpp"
#include "support/oracles.hpp"

using namespace kfbf;

namespace {

// Textbook recursive definition, half-open intervals, no clamping.
double reference_basis(double x, const std::vector<double>& t, std::size_t i, int p) {
  if (p == 0) return (t[i] <= x && x < t[i + 1]) ? 1.0 : 0.0;
  double out = 0.0;
  const double left = t[i + p] - t[i];
  const double right = t[i + p + 1] - t[i + 1];
  if (left > 0) out += (x - t[i]) / left * reference_basis(x, t, i, p - 1);
  if (right > 0) out += (t[i + p + 1] - x) / right * reference_basis(x, t, i + 1, p - 1);
  return out;
}

std::vector<double> uniform_knots(int first, int last) {
  std::vector<double> k;
  for (int i = first; i <= last; ++i) k.push_back(i);
  return k;
}

}  // namespace

TEST_SUITE("bspline") {
  TEST_CASE("cubic values at knots") {
    const auto knots = uniform_knots(0, 4);  // a single cubic B-spline on [0, 4]
    CHECK(ad::bspline_basis(2.0, knots, 3)[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(ad::bspline_basis(1.0, knots, 3)[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
    CHECK(ad::bspline_basis(3.0, knots, 3)[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  }

  TEST_CASE("matches the recursive definition") {
    const auto knots = uniform_knots(-5, 5);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-5.0, 4.999);
    for (int degree = 0; degree <= 3; ++degree) {
      for (int trial = 0; trial < 200; ++trial) {
        const double x = u(rng);
        const auto got = ad::bspline_basis(x, knots, degree);
        REQUIRE(got.size() == knots.size() - degree - 1);
        for (std::size_t i = 0; i < got.size(); ++i)
          CHECK(std::abs(got[i] - reference_basis(x, knots, i, degree)) < 1e-13);
      }
    }
  }

  TEST_CASE("degree 0 is the interval indicator") {
    const auto knots = uniform_knots(0, 4);
    const auto b = ad::bspline_basis(2.5, knots, 0);
    CHECK(b == std::vector<double>{0, 0, 1, 0});
  }

  TEST_CASE("partition of unity on the interior span") {
    const auto grid = ad::SplineGrid::uniform(-2.0, 2.0, 8, 3);
    REQUIRE(grid.basis_count() == 8);
    for (int i = 0; i <= 400; ++i) {
      const double x = -2.0 + 4.0 * i / 400.0;
      const auto b = ad::bspline_basis(x, grid.knots, grid.degree);
      double s = 0.0;
      for (double v : b) s += v;
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }

  TEST_CASE("derivative matches central differences") {
    const auto grid = ad::SplineGrid::uniform(-2.0, 2.0, 8, 3);
    const std::size_t n = grid.basis_count();
    std::vector<double> v(n), d(n), scratch(grid.knots.size());
    for (double x : {-1.7, -0.31, 0.0 + 0.123, 1.05, 1.9}) {
      ad::bspline_basis_with_derivative(x, grid.knots, grid.degree, v, d, scratch);
      const auto plain = ad::bspline_basis(x, grid.knots, grid.degree);
      for (std::size_t p = 0; p < n; ++p) {
        CHECK(v[p] == plain[p]);
        const double h = 1e-6;
        const double fd = (ad::bspline_basis(x + h, grid.knots, grid.degree)[p] -
                           ad::bspline_basis(x - h, grid.knots, grid.degree)[p]) / (2 * h);
        CHECK(testing::relative_error(d[p], fd) < 1e-6);
      }
    }
  }

  TEST_CASE("inputs beyond the knot vector are clamped") {
    const auto knots = uniform_knots(0, 4);
    CHECK(ad::bspline_basis(-3.0, knots, 3) == ad::bspline_basis(0.0, knots, 3));
    CHECK(ad::bspline_basis(9.0, knots, 3) == ad::bspline_basis(4.0, knots, 3));
  }

  TEST_CASE("local evaluation agrees with the full basis") {
    std::mt19937_64 rng(21);
    const std::vector<std::vector<double>> knot_sets = {
        ad::SplineGrid::uniform(-2.0, 2.0, 8, 3).knots,
        {-3, -2, -1, 0, 0.5, 0.5, 1.5, 2, 4, 5, 6},  // uneven, one repeated knot
    };
    for (const auto& knots : knot_sets) {
      for (int degree = 0; degree <= 3; ++degree) {
        const std::size_t d = static_cast<std::size_t>(degree), m = knots.size();
        const double lo = knots[d], hi = knots[m - 1 - d];
        std::vector<double> xs = {lo, hi};
        std::uniform_real_distribution<double> u(lo, hi);
        for (int i = 0; i < 200; ++i) xs.push_back(u(rng));
        const std::size_t n = m - d - 1;
        std::vector<double> full(n), dfull(n), scratch(m), v(d + 1), dv(d + 1);
        for (double x : xs) {
          ad::bspline_basis_with_derivative(x, knots, degree, full, dfull, scratch);
          const auto first = ad::bspline_local_basis(x, knots, degree, v, dv);
          REQUIRE(first + d < n);
          for (std::size_t p = 0; p < n; ++p) {
            const bool inside = p >= first && p <= first + d;
            CHECK(std::abs((inside ? v[p - first] : 0.0) - full[p]) < 1e-14);
            // derivatives of low degrees jump at the knots, where the two
            // evaluators may legitimately pick different sides
            if (degree >= 2 || (x != lo && x != hi)) {
              CHECK(std::abs((inside ? dv[p - first] : 0.0) - dfull[p]) < 1e-12);
            }
          }
        }
      }
    }
    std::vector<double> v(4);
    const auto grid = ad::SplineGrid::uniform(-2.0, 2.0, 8, 3);
    CHECK_THROWS_AS(ad::bspline_local_basis(-2.5, grid.knots, 3, v, {}), kfbf::ContractError);
  }
}
