#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "kfbf/autodiff/ops.hpp"
#include "kfbf/error.hpp"
#include "kfbf/sysmodel/system.hpp"
#include "support/temp_dir.hpp"

using namespace kfbf;
using sys::BeamformingMatrix;
using sys::ChannelSample;
using sys::Complex;

namespace {

ChannelSample sample(std::size_t k, std::size_t n_t, std::vector<Complex> h) { return {k, n_t, std::move(h)}; }
BeamformingMatrix beams(std::size_t k, std::size_t n_t, std::vector<Complex> w) { return {k, n_t, std::move(w)}; }

BeamformingMatrix random_beams(std::size_t k, std::size_t n_t, std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  auto w = BeamformingMatrix::zeros(k, n_t);
  for (auto& v : w.w) {
    const double re = n(rng);
    v = {re, n(rng)};
  }
  return w;
}

}  // namespace

TEST_SUITE("sysmodel") {
  TEST_CASE("rate examples") {
    sys::SystemConfig c;
    c.n_t = 2;
    c.k = 1;
    CHECK(sys::rate(c, sample(1, 2, {1, 0}), beams(1, 2, {1, 0}), 0) == doctest::Approx(1.0));

    c.k = 2;
    const auto s2 = sample(2, 2, {1, 0, 0, 1});
    CHECK(sys::rate(c, s2, beams(2, 2, {1, 0, 0, 1}), 0) == doctest::Approx(1.0));

    const double a = std::sqrt(0.5);
    const auto same = sample(2, 2, {1, 0, 1, 0});
    CHECK(sys::rate(c, same, beams(2, 2, {a, 0, a, 0}), 0) ==
          doctest::Approx(std::log2(1.0 + 0.5 / 1.5)).epsilon(1e-12));
    CHECK(std::log2(1.0 + 0.5 / 1.5) == doctest::Approx(0.41504).epsilon(1e-4));
  }

  TEST_CASE("energy efficiency examples") {
    sys::SystemConfig c;
    c.n_t = 2;
    c.k = 1;
    const auto s = sample(1, 2, {1, 0});
    CHECK(sys::energy_efficiency(c, s, beams(1, 2, {1, 0})) == doctest::Approx(1.0 / 1.1).epsilon(1e-14));
    CHECK(sys::energy_efficiency(c, s, BeamformingMatrix::zeros(1, 2)) == 0.0);

    // interference-free, high SNR: halving power costs less than half the rate
    c.k = 2;
    const auto s2 = sample(2, 2, {10, 0, 0, 10});
    const auto full = beams(2, 2, {1, 0, 0, 1});
    auto half = full;
    for (auto& v : half.w) v *= std::sqrt(0.5);
    const double r_full = sys::rate(c, s2, full, 0) + sys::rate(c, s2, full, 1);
    const double r_half = sys::rate(c, s2, half, 0) + sys::rate(c, s2, half, 1);
    CHECK(r_half == doctest::Approx(2 * std::log2(1 + 50.0)));
    CHECK(r_full == doctest::Approx(2 * std::log2(1 + 100.0)));
    CHECK(r_half > 0.5 * r_full);
    CHECK(sys::energy_efficiency(c, s2, half) == doctest::Approx(r_half / 1.1));
  }

  TEST_CASE("scale_to_budget examples") {
    const auto w = beams(2, 2, {1, 1, 1, Complex(0, 1)});  // power 4
    const auto half = sys::scale_to_budget(w, 1.0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(half.w[i] == w.w[i] * 0.5);

    const auto small = beams(1, 2, {0.5, 0.5});  // power 0.5
    CHECK(sys::scale_to_budget(small, 1.0).w == small.w);
    CHECK(sys::scale_to_budget(BeamformingMatrix::zeros(2, 3), 1.0).w == BeamformingMatrix::zeros(2, 3).w);
  }

  TEST_CASE("rayleigh generation") {
    sys::SystemConfig c;
    c.n_t = 4;
    c.k = 5;
    const auto a = sys::generate_rayleigh(c, 7, 42);
    const auto b = sys::generate_rayleigh(c, 7, 42);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].h == b[i].h);
    CHECK_THROWS_AS(sys::generate_rayleigh(c, 0, 1), ContractError);

    c.k = 1;
    c.n_t = 1;
    const auto many = sys::generate_rayleigh(c, 100000, 7);
    double power = 0.0;
    for (const auto& s : many) power += std::norm(s.h[0]);
    CHECK(std::abs(power / 100000 - 1.0) < 0.02);
  }

  TEST_CASE("differentiable EE agrees with complex evaluation") {
    sys::SystemConfig c;
    c.n_t = 3;
    c.k = 3;
    c.weights = {1.0, 0.5, 2.0};
    std::mt19937_64 rng(8);
    const auto samples = sys::generate_rayleigh(c, 4, 3);
    std::vector<const ChannelSample*> ptrs;
    std::vector<double> rows;
    std::vector<BeamformingMatrix> ws;
    for (const auto& s : samples) {
      ptrs.push_back(&s);
      ws.push_back(sys::scale_to_budget(random_beams(3, 3, rng, 0.5), c.p_max));
      const auto r = sys::to_real_rows(ws.back());
      rows.insert(rows.end(), r.begin(), r.end());
    }
    ad::Tape tape(ad::Tape::Mode::kInference);
    const auto ee = sys::energy_efficiency_graph(tape, c, ptrs, ad::Tensor::from({12, 6}, rows));
    for (std::size_t b = 0; b < samples.size(); ++b)
      CHECK(std::abs(ee.at(b, 0) - sys::energy_efficiency(c, samples[b], ws[b])) < 1e-12);
  }

  TEST_CASE("real-row layout round-trips") {
    std::mt19937_64 rng(1);
    const auto w = random_beams(3, 4, rng, 1.0);
    const auto rows = sys::to_real_rows(w);
    CHECK(rows[0] == w.w[0].real());
    CHECK(rows[4] == w.w[0].imag());
    CHECK(sys::from_real_rows(rows, 3, 4).w == w.w);
  }

  TEST_CASE("properties: feasibility, idempotence, phase invariance, non-negativity") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 2 * M_PI);
    std::uniform_int_distribution<std::size_t> dim(1, 6);
    std::lognormal_distribution<double> mag(0.0, 2.0);
    sys::SystemConfig c;
    for (int trial = 0; trial < 2000; ++trial) {
      c.k = dim(rng);
      c.n_t = dim(rng);
      const double p_max = 0.1 + mag(rng);
      const auto w = random_beams(c.k, c.n_t, rng, mag(rng));
      const auto s1 = sys::scale_to_budget(w, p_max);
      CHECK(s1.total_power() <= p_max + 1e-12);
      const auto s2 = sys::scale_to_budget(s1, p_max);
      for (std::size_t i = 0; i < s1.w.size(); ++i) CHECK(std::abs(s2.w[i] - s1.w[i]) <= 1e-12);

      const auto h = sys::generate_rayleigh(c, 1, trial).front();
      const double ee = sys::energy_efficiency(c, h, s1);
      CHECK(ee >= 0.0);
      auto turned = s1;
      const auto phase = std::polar(1.0, u(rng));
      for (auto& v : turned.w) v *= phase;
      CHECK(std::abs(sys::energy_efficiency(c, h, turned) - ee) <= 1e-12 * std::max(1.0, ee));
      for (std::size_t k = 0; k < c.k; ++k) CHECK(sys::rate(c, h, s1, k) >= 0.0);
    }
  }

  TEST_CASE("rate is zero iff the desired gain is zero") {
    sys::SystemConfig c;
    c.n_t = 2;
    c.k = 2;
    const auto s = sample(2, 2, {1, 0, 0, 1});
    const auto w = beams(2, 2, {0, 1, 0, 1});  // user 0 beam orthogonal to h_0
    CHECK(sys::rate(c, s, w, 0) == 0.0);
    CHECK(sys::rate(c, s, w, 1) > 0.0);
  }

  TEST_CASE("dataset files") {
    testing::TempDir dir;
    sys::SystemConfig c;
    c.n_t = 3;
    c.k = 2;
    c.p_c = 0.25;
    const sys::Dataset d{c, sys::generate_rayleigh(c, 5, 9)};
    const auto p1 = dir.path() / "a.kfds";
    const auto p2 = dir.path() / "b.kfds";
    sys::write_dataset(d, p1);
    const auto back = sys::read_dataset(p1);
    CHECK(back.config.n_t == 3);
    CHECK(back.config.k == 2);
    CHECK(back.config.p_c == 0.25);
    REQUIRE(back.samples.size() == 5);
    for (std::size_t i = 0; i < 5; ++i) CHECK(back.samples[i].h == d.samples[i].h);
    sys::write_dataset(back, p2);
    CHECK(testing::read_bytes(p1) == testing::read_bytes(p2));

    auto bytes = testing::read_bytes(p1);
    auto bad = bytes;
    bad[0] = 'X';
    testing::write_bytes(p2, bad);
    CHECK_THROWS_AS(sys::read_dataset(p2), FormatError);

    bad = bytes;
    bad[4] = 2;  // version
    testing::write_bytes(p2, bad);
    try {
      sys::read_dataset(p2);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 4);
    }

    bad = bytes;
    bad.resize(bad.size() - 8);
    testing::write_bytes(p2, bad);
    CHECK_THROWS_AS(sys::read_dataset(p2), FormatError);

    bad = bytes;
    bad[16] = 50;  // count = 50 while the file holds 5 records
    testing::write_bytes(p2, bad);
    try {
      sys::read_dataset(p2);
      FAIL("expected FormatError");
    } catch (const FormatError& e) {
      CHECK(std::string(e.what()).find("offset") != std::string::npos);
    }
  }
}
