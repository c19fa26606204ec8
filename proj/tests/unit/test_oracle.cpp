#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numeric>

#include "kfbf/error.hpp"
#include "kfbf/oracle/oracle.hpp"
#include "support/oracles.hpp"
#include "support/temp_dir.hpp"

using namespace kfbf;

namespace {

sys::SystemConfig system_for(std::size_t n_t, std::size_t k) {
  sys::SystemConfig c;
  c.n_t = n_t;
  c.k = k;
  return c;
}

// A single-user channel with |h|^2 = gain.
sys::ChannelSample single_user(double gain) {
  return {1, 2, {sys::Complex(std::sqrt(gain / 2), 0), sys::Complex(0, std::sqrt(gain / 2))}};
}

}  // namespace

TEST_SUITE("oracle") {
  TEST_CASE("single user closed form") {
    auto c = system_for(2, 1);
    c.noise_power = 1.0;
    c.p_c = 0.1;
    c.p_max = 1.0;
    const auto s = single_user(1.0);
    const auto sol = oracle::solve_k1(c, s);
    const double p = sol.w.total_power();
    CHECK(p == doctest::Approx(0.48).epsilon(0.01));
    CHECK(sol.ee == doctest::Approx(0.976).epsilon(0.001));
    // interior optimum of ln(1+p)/(p+P_C)
    CHECK(std::abs((p + 0.1) / (1 + p) - std::log1p(p)) < 1e-8);
    CHECK(std::abs(sol.ee - sys::energy_efficiency(c, s, sol.w)) < 1e-12);
    // the beam points along h
    CHECK(std::abs(std::abs(sol.w.at(0, 0)) - std::abs(sol.w.at(0, 1))) < 1e-12);

    c.p_c = 1e3;
    CHECK(oracle::solve_k1(c, s).w.total_power() == doctest::Approx(1.0).epsilon(1e-8));

    c.p_c = 0.1;
    const sys::ChannelSample zero{1, 2, {0.0, 0.0}};
    const auto z = oracle::solve_k1(c, zero);
    CHECK(z.ee == 0.0);
    CHECK(z.w.total_power() == 0.0);

    CHECK_THROWS_AS(oracle::solve_k1(system_for(2, 2), sys::generate_rayleigh(system_for(2, 2), 1, 1)[0]),
                    ContractError);
  }

  TEST_CASE("single-user EE is unimodal in the power") {
    auto c = system_for(1, 1);
    for (double pc : {0.0, 0.01, 0.1, 1.0, 10.0})
      for (double g : {0.01, 0.3, 1.0, 10.0, 1e3}) {
        c.p_c = pc;
        int turns = 0;
        double prev = -1.0, slope = 1.0;
        for (int i = 1; i <= 2000; ++i) {
          const double v = oracle::k1_energy_efficiency(c, g, c.p_max * i / 2000.0);
          if (prev >= 0.0) {
            const double s = v - prev;
            if (s < 0 && slope >= 0) ++turns;
            if (s > 0 && slope < 0) ++turns;
            slope = s;
          }
          prev = v;
        }
        CHECK(turns <= 1);
      }
  }

  TEST_CASE("PGA reproduces the single-user optimum") {
    const auto c = system_for(4, 1);
    const auto samples = sys::generate_rayleigh(c, 20, 31);
    oracle::OracleConfig o;
    o.restarts = 4;
    for (const auto& s : samples) {
      const double exact = oracle::solve_k1(c, s).ee;
      CHECK(oracle::solve_pga(c, s, o).ee >= exact * (1 - 1e-3));
      CHECK(oracle::solve_dinkelbach(c, s, o).ee >= exact * (1 - 1e-3));
    }
  }

  TEST_CASE("PGA against the brute-force grid") {
    const auto c = system_for(2, 2);
    const auto samples = sys::generate_rayleigh(c, 2, 41);
    oracle::OracleConfig o;
    for (const auto& s : samples) {
      const auto grid = testing::brute_force_k2_nt2(c, s);
      const double pga = oracle::solve_pga(c, s, o).ee;
      CHECK(pga >= grid.ee * 0.99);
      CHECK(grid.ee >= grid.grid_ee);
      CHECK(grid.points > 100'000'000);
      CHECK(grid.grid_ee >= grid.ee * 0.995);
    }
  }

  TEST_CASE("solver invariants") {
    const auto c = system_for(4, 3);
    const auto samples = sys::generate_rayleigh(c, 4, 51);
    for (const auto& s : samples) {
      oracle::OracleConfig o;
      o.restarts = 6;
      const auto starts = oracle::initial_points(c, s, o);
      REQUIRE(starts.size() == 6);
      double best_start = 0.0;
      for (const auto& w : starts) {
        CHECK(w.feasible(c.p_max));
        best_start = std::max(best_start, sys::energy_efficiency(c, s, w));
      }
      const auto sol = oracle::solve_pga(c, s, o);
      CHECK(sol.w.feasible(c.p_max));
      CHECK(sol.ee >= best_start);
      CHECK(sol.ee == sys::energy_efficiency(c, s, sol.w));

      double prev = 0.0;
      for (std::size_t r : {1, 2, 4, 8}) {
        o.restarts = r;
        const double ee = oracle::solve_pga(c, s, o).ee;
        CHECK(ee >= prev);
        prev = ee;
      }

      o.restarts = 4;
      std::vector<double> lambdas;
      const auto dk = oracle::solve_dinkelbach(c, s, o, &lambdas);
      CHECK(dk.w.feasible(c.p_max));
      REQUIRE(lambdas.size() >= 2);
      for (std::size_t i = 1; i < lambdas.size(); ++i) CHECK(lambdas[i] >= lambdas[i - 1]);
    }
  }

  TEST_CASE("Dinkelbach agrees with PGA") {
    const auto c = system_for(4, 2);
    const auto samples = sys::generate_rayleigh(c, 10, 61);
    oracle::OracleConfig o;
    o.restarts = 8;
    double a = 0.0, b = 0.0;
    for (const auto& s : samples) {
      a += oracle::solve_pga(c, s, o).ee;
      b += oracle::solve_dinkelbach(c, s, o).ee;
    }
    CHECK(std::abs(a - b) / a < 5e-3);
  }

  TEST_CASE("method names and config checks") {
    for (auto m : {oracle::Method::kClosedFormK1, oracle::Method::kPgaMultistart, oracle::Method::kDinkelbach})
      CHECK(oracle::parse_method(oracle::to_string(m)) == m);
    CHECK(oracle::parse_method("pga") == oracle::Method::kPgaMultistart);
    CHECK_THROWS_AS(oracle::parse_method("cvx"), ContractError);
    oracle::OracleConfig o;
    o.restarts = 0;
    CHECK_THROWS_AS(o.validate(), ContractError);
    o = {};
    o.tolerance = 0.0;
    CHECK_THROWS_AS(o.validate(), ContractError);
  }

  TEST_CASE("oracle cache") {
    testing::TempDir dir;
    const auto path = dir.path() / "d.oracle.csv";
    const auto c = system_for(4, 2);
    const auto samples = sys::generate_rayleigh(c, 5, 71);
    oracle::OracleConfig o;
    o.restarts = 3;
    const auto first = oracle::oracle_energy_efficiencies(c, samples, o, path);
    const auto entries = oracle::read_cache(path);
    REQUIRE(entries.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      CHECK(entries[i].sample_index == i);
      CHECK(entries[i].ee == first[i]);
      CHECK(entries[i].method == "pga_multistart");
    }
    // reuse: doctored cached values come back untouched
    auto doctored = entries;
    for (auto& e : doctored) e.ee = 42.0;
    oracle::write_cache(doctored, path);
    CHECK(oracle::oracle_energy_efficiencies(c, samples, o, path) == std::vector<double>(5, 42.0));
    // a different method forces a recompute
    o.method = oracle::Method::kDinkelbach;
    const auto dk = oracle::oracle_energy_efficiencies(c, samples, o, path);
    CHECK(dk[0] != 42.0);
    CHECK(oracle::read_cache(path)[0].method == "dinkelbach_sca");

    std::ofstream(path) << "sample_index,ee_oracle,method,iters\n0,abc,pga_multistart,1\n";
    CHECK_THROWS_AS(oracle::read_cache(path), FormatError);
    std::ofstream(path) << "index,ee\n";
    CHECK_THROWS_AS(oracle::read_cache(path), FormatError);
  }
}
