#include "support/oracles.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>

namespace kfbf::testing {

std::vector<double> central_difference(const std::function<double()>& f, std::span<double> x,
                                       double step) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + step;
    const double up = f();
    x[i] = keep - step;
    const double down = f();
    x[i] = keep;
    out[i] = (up - down) / (2.0 * step);
  }
  return out;
}

double relative_error(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

std::vector<double> dense_matmul(std::span<const double> a, std::span<const double> b,
                                 std::size_t m, std::size_t k, std::size_t n) {
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t q = 0; q < k; ++q) s += a[i * k + q] * b[q * n + j];
      c[i * n + j] = s;
    }
  return c;
}

namespace {

using C = std::complex<double>;
using Point = std::array<double, 6>;  // t1, f1, p1, t2, f2, p2

struct Problem {
  std::array<std::array<C, 2>, 2> h;
  double noise, p_c, p_max;
  std::array<double, 2> alpha;

  // |h_k^H d|^2 for the unit direction d(t, f)
  double gain(std::size_t k, double t, double f) const {
    const C d0 = std::cos(t);
    const C d1 = std::polar(std::sin(t), f);
    return std::norm(std::conj(h[k][0]) * d0 + std::conj(h[k][1]) * d1);
  }

  double ee(const Point& x) const {
    const double g11 = gain(0, x[0], x[1]), g21 = gain(1, x[0], x[1]);
    const double g12 = gain(0, x[3], x[4]), g22 = gain(1, x[3], x[4]);
    return ee_from_gains(g11, g21, g12, g22, x[2], x[5]);
  }

  // g_ki = |h_k^H d_i|^2
  double ee_from_gains(double g11, double g21, double g12, double g22, double p1, double p2) const {
    const double r1 = std::log2(1.0 + p1 * g11 / (p2 * g12 + noise));
    const double r2 = std::log2(1.0 + p2 * g22 / (p1 * g21 + noise));
    return (alpha[0] * r1 + alpha[1] * r2) / (p1 + p2 + p_c);
  }

  bool feasible(const Point& x) const { return x[2] >= 0.0 && x[5] >= 0.0 && x[2] + x[5] <= p_max; }
};

double compass(const Problem& pr, Point x, double value) {
  Point step{std::numbers::pi / 16, std::numbers::pi / 8, 0.05 * pr.p_max,
             std::numbers::pi / 16, std::numbers::pi / 8, 0.05 * pr.p_max};
  while (*std::max_element(step.begin(), step.end()) > 1e-10) {
    bool moved = false;
    for (std::size_t i = 0; i < x.size(); ++i) {
      for (double dir : {1.0, -1.0}) {
        Point y = x;
        y[i] += dir * step[i];
        if (!pr.feasible(y)) continue;
        const double v = pr.ee(y);
        if (v > value) {
          x = y;
          value = v;
          moved = true;
        }
      }
    }
    if (!moved)
      for (auto& s : step) s *= 0.5;
  }
  return value;
}

}  // namespace

BruteForceResult brute_force_k2_nt2(const sys::SystemConfig& config, const sys::ChannelSample& sample) {
  Problem pr;
  for (std::size_t k = 0; k < 2; ++k)
    for (std::size_t n = 0; n < 2; ++n) pr.h[k][n] = sample.at(k, n);
  pr.noise = config.noise_power;
  pr.p_c = config.p_c;
  pr.p_max = config.p_max;
  pr.alpha = {config.weight(0), config.weight(1)};

  constexpr std::size_t kTheta = 17, kPhi = 32, kPowers = 25;
  struct Dir {
    double t, f, g0, g1;
  };
  std::vector<Dir> dirs;
  for (std::size_t a = 0; a < kTheta; ++a)
    for (std::size_t b = 0; b < kPhi; ++b) {
      const double t = (std::numbers::pi / 2) * static_cast<double>(a) / (kTheta - 1);
      const double f = 2 * std::numbers::pi * static_cast<double>(b) / kPhi;
      dirs.push_back({t, f, pr.gain(0, t, f), pr.gain(1, t, f)});
    }
  std::vector<double> powers{0.0};
  for (std::size_t i = 0; i + 1 < kPowers; ++i)
    powers.push_back(config.p_max * std::pow(0.01, static_cast<double>(kPowers - 2 - i) / (kPowers - 2)));

  struct Candidate {
    double ee;
    Point x;
  };
  constexpr std::size_t kKeep = 16;
  std::vector<Candidate> best;
  BruteForceResult result;
  for (const auto& d1 : dirs)
    for (const auto& d2 : dirs)
      for (double p1 : powers)
        for (double p2 : powers) {
          if (p1 + p2 > config.p_max * (1 + 1e-12)) continue;
          ++result.points;
          const double v = pr.ee_from_gains(d1.g0, d1.g1, d2.g0, d2.g1, p1, p2);
          if (best.size() == kKeep && v <= best.back().ee) continue;
          const Candidate c{v, {d1.t, d1.f, p1, d2.t, d2.f, p2}};
          best.insert(std::upper_bound(best.begin(), best.end(), c,
                                       [](const Candidate& a, const Candidate& b) { return a.ee > b.ee; }),
                      c);
          if (best.size() > kKeep) best.pop_back();
        }
  result.grid_ee = best.front().ee;
  result.ee = result.grid_ee;
  for (const auto& c : best) result.ee = std::max(result.ee, compass(pr, c.x, c.ee));
  return result;
}

}  // namespace kfbf::testing
