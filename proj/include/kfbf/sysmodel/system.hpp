#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "kfbf/autodiff/tensor.hpp"

namespace kfbf::sys {

using Complex = std::complex<double>;

/// Downlink MISO scenario: one n_t-antenna transmitter, k single-antenna users.
struct SystemConfig {
  std::size_t n_t = 4;
  std::size_t k = 2;
  double p_max = 1.0;        // transmit power budget [W]
  double p_c = 0.1;          // circuit power [W]
  double noise_power = 1.0;  // sigma_k^2, shared by all users [W]
  std::vector<double> weights;  // alpha_k; empty means all ones

  double weight(std::size_t user) const { return weights.empty() ? 1.0 : weights[user]; }
  /// Throws ContractError when any field is out of range.
  void validate() const;
};

/// One problem instance. Row u of `h` holds the channel vector h_u.
struct ChannelSample {
  std::size_t k = 0;
  std::size_t n_t = 0;
  std::vector<Complex> h;  // k x n_t, row-major

  Complex at(std::size_t user, std::size_t antenna) const { return h[user * n_t + antenna]; }
};

/// K complex beamforming vectors, row u = w_u.
struct BeamformingMatrix {
  std::size_t k = 0;
  std::size_t n_t = 0;
  std::vector<Complex> w;

  static BeamformingMatrix zeros(std::size_t k, std::size_t n_t) {
    return {k, n_t, std::vector<Complex>(k * n_t)};
  }
  Complex at(std::size_t user, std::size_t antenna) const { return w[user * n_t + antenna]; }
  Complex& at(std::size_t user, std::size_t antenna) { return w[user * n_t + antenna]; }

  /// sum_u ||w_u||^2
  double total_power() const;
  bool feasible(double p_max, double tolerance = 1e-12) const {
    return total_power() <= p_max + tolerance;
  }
};

/// i.i.d. CN(0, 1) channel entries (real and imaginary parts each N(0, 1/2)).
/// Draw order: sample, user, antenna, real then imaginary.
std::vector<ChannelSample> generate_rayleigh(const SystemConfig& config, std::size_t count,
                                             std::uint64_t seed);

/// Achievable rate of `user` in bits/s/Hz.
double rate(const SystemConfig& config, const ChannelSample& sample, const BeamformingMatrix& w,
            std::size_t user);

/// Weighted sum rate over total consumed power.
double energy_efficiency(const SystemConfig& config, const ChannelSample& sample,
                         const BeamformingMatrix& w);

/// Radial projection onto the power ball: every w_u is multiplied by
/// sqrt(p_max / max(p_max, sum_u ||w_u||^2)).
BeamformingMatrix scale_to_budget(const BeamformingMatrix& w_tilde, double p_max);

/// Real layout used on the differentiable path: row u = [Re(w_u), Im(w_u)].
std::vector<double> to_real_rows(const BeamformingMatrix& w);
BeamformingMatrix from_real_rows(std::span<const double> rows, std::size_t k, std::size_t n_t);

/// Differentiable energy efficiency for a stack of samples sharing one K.
/// `w_rows` is (B*K) x (2*n_t) in the real layout above, sample b occupying
/// rows [b*K, (b+1)*K). Returns a Bx1 tensor of per-sample EE values.
ad::Tensor energy_efficiency_graph(ad::Tape& tape, const SystemConfig& config,
                                   std::span<const ChannelSample* const> samples,
                                   const ad::Tensor& w_rows);

/// A collection of samples with their common configuration.
struct Dataset {
  SystemConfig config;
  std::vector<ChannelSample> samples;
};

/// Binary dataset file, little-endian:
///   "KFDS" | u32 version=1 | u32 n_t | u32 k | u64 count |
///   f64 noise_power | f64 p_max | f64 p_c |
///   count records of k*n_t (f64 re, f64 im) pairs, user-major.
void write_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace kfbf::sys
