#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kfbf/sysmodel/system.hpp"

namespace kfbf::oracle {

enum class Method { kClosedFormK1, kPgaMultistart, kDinkelbach };

std::string to_string(Method m);
Method parse_method(const std::string& s);

struct OracleConfig {
  Method method = Method::kPgaMultistart;
  std::size_t restarts = 20;
  std::size_t max_iters = 1000;
  double tolerance = 1e-10;  // relative objective improvement that ends a run
  std::uint64_t seed = 1;
  double armijo = 1e-4;  // sufficient-increase constant
  double shrink = 0.5;
  double initial_step = 1.0;

  void validate() const;
};

struct Solution {
  sys::BeamformingMatrix w;
  double ee = 0.0;
  std::size_t iterations = 0;  // total accepted ascent steps across restarts
};

/// Exact optimum for a single user: maximum-ratio transmission with the
/// transmit power found by golden-section search on (0, p_max].
Solution solve_k1(const sys::SystemConfig& config, const sys::ChannelSample& sample);

/// Energy efficiency of single-user MRT at transmit power p.
double k1_energy_efficiency(const sys::SystemConfig& config, double channel_gain, double p);

/// Projected gradient ascent on EE from several starting points (MRT at a
/// few power levels, regularized zero-forcing, then random draws). Returns
/// the best point found; the lowest restart index wins ties.
Solution solve_pga(const sys::SystemConfig& config, const sys::ChannelSample& sample,
                   const OracleConfig& options);

/// Dinkelbach iterations on lambda, each parametric subproblem
/// max sum_k alpha_k R_k - lambda (P + P_C) solved by warm-started projected
/// gradient ascent. `lambda_trace`, if given, receives lambda per iteration of
/// the best restart.
Solution solve_dinkelbach(const sys::SystemConfig& config, const sys::ChannelSample& sample,
                          const OracleConfig& options, std::vector<double>* lambda_trace = nullptr);

/// Dispatches on options.method. kClosedFormK1 requires K = 1.
Solution solve(const sys::SystemConfig& config, const sys::ChannelSample& sample,
               const OracleConfig& options);

/// Starting points used by the multistart solvers, in restart order.
std::vector<sys::BeamformingMatrix> initial_points(const sys::SystemConfig& config,
                                                   const sys::ChannelSample& sample,
                                                   const OracleConfig& options);

struct CacheEntry {
  std::size_t sample_index = 0;
  double ee = 0.0;
  std::string method;
  std::size_t iterations = 0;
};

/// Sidecar CSV `sample_index,ee_oracle,method,iters`.
std::vector<CacheEntry> read_cache(const std::filesystem::path& path);
void write_cache(const std::vector<CacheEntry>& entries, const std::filesystem::path& path);

/// Oracle EE for every sample. When `cache` names an existing file whose rows
/// cover every index with the requested method, those values are reused;
/// otherwise the solver runs (in parallel, deterministically) and the cache
/// is rewritten.
std::vector<double> oracle_energy_efficiencies(const sys::SystemConfig& config,
                                               std::span<const sys::ChannelSample> samples,
                                               const OracleConfig& options,
                                               const std::filesystem::path& cache = {});

}  // namespace kfbf::oracle
