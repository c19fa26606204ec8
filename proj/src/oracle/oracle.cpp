#include "kfbf/oracle/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "kfbf/autodiff/ops.hpp"
#include "kfbf/error.hpp"
#include "kfbf/parallel.hpp"

namespace kfbf::oracle {
namespace {

using sys::BeamformingMatrix;
using sys::ChannelSample;
using sys::Complex;
using sys::SystemConfig;

struct Evaluation {
  double value = 0.0;
  std::vector<double> grad;
};

// EE (lambda unset) or the Dinkelbach objective (EE - lambda) (P + P_C) at the
// real-row point x, with its gradient from the tape.
Evaluation evaluate(const SystemConfig& config, const ChannelSample& sample,
                    std::span<const double> x, const double* lambda) {
  ad::Tape tape;
  const auto point = ad::Tensor::from({sample.k, 2 * sample.n_t},
                                      std::vector<double>(x.begin(), x.end()), true);
  const ChannelSample* one[] = {&sample};
  auto objective = sys::energy_efficiency_graph(tape, config, one, point);
  if (lambda) {
    const auto power = ad::add_scalar(tape, ad::reduce_sum(tape, ad::square(tape, point)), config.p_c);
    objective = ad::mul(tape, ad::add_scalar(tape, objective, -*lambda), power);
  }
  tape.backward(objective);
  Evaluation out;
  out.value = objective.item();
  out.grad.assign(point.grad().begin(), point.grad().end());
  if (out.grad.empty()) out.grad.assign(x.size(), 0.0);
  return out;
}

void project(std::vector<double>& x, double p_max) {
  double s = 0.0;
  for (double v : x) s += v * v;
  if (s > p_max) {
    const double f = std::sqrt(p_max / s);
    for (double& v : x) v *= f;
  }
}

struct Ascent {
  std::vector<double> x;
  double value = 0.0;
  std::size_t iterations = 0;
};

// Projected gradient ascent with Armijo backtracking along the projection arc.
Ascent projected_ascent(const SystemConfig& config, const ChannelSample& sample,
                        std::vector<double> x, const OracleConfig& options,
                        const double* lambda) {
  project(x, config.p_max);
  Evaluation current = evaluate(config, sample, x, lambda);
  Ascent out;
  std::vector<double> trial(x.size());
  for (std::size_t it = 0; it < options.max_iters; ++it) {
    double step = options.initial_step;
    bool accepted = false;
    Evaluation next;
    while (step > 1e-14) {
      for (std::size_t q = 0; q < x.size(); ++q) trial[q] = x[q] + step * current.grad[q];
      project(trial, config.p_max);
      double slope = 0.0;
      for (std::size_t q = 0; q < x.size(); ++q) slope += current.grad[q] * (trial[q] - x[q]);
      next = evaluate(config, sample, trial, lambda);
      if (next.value >= current.value + options.armijo * slope && next.value >= current.value) {
        accepted = true;
        break;
      }
      step *= options.shrink;
    }
    if (!accepted) break;
    const double gain = next.value - current.value;
    x.swap(trial);
    const double previous = current.value;
    current = std::move(next);
    ++out.iterations;
    if (gain <= options.tolerance * std::max(std::abs(previous), 1.0)) break;
  }
  out.x = std::move(x);
  out.value = current.value;
  return out;
}

std::vector<double> to_real(const BeamformingMatrix& w) { return sys::to_real_rows(w); }

BeamformingMatrix scaled_to_power(BeamformingMatrix w, double power) {
  const double total = w.total_power();
  if (total > 0.0) {
    const double f = std::sqrt(power / total);
    for (auto& v : w.w) v *= f;
  }
  return w;
}

BeamformingMatrix mrt(const ChannelSample& sample) {
  auto w = BeamformingMatrix::zeros(sample.k, sample.n_t);
  for (std::size_t u = 0; u < sample.k; ++u) {
    double norm = 0.0;
    for (std::size_t n = 0; n < sample.n_t; ++n) norm += std::norm(sample.at(u, n));
    norm = std::sqrt(norm);
    if (norm == 0.0) continue;
    for (std::size_t n = 0; n < sample.n_t; ++n) w.at(u, n) = sample.at(u, n) / norm;
  }
  return w;
}

// Solves a x = b for a small dense complex system (Gauss-Jordan, partial pivoting).
std::vector<Complex> solve_linear(std::vector<Complex> a, std::vector<Complex> b, std::size_t n,
                                  std::size_t rhs) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t pivot = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r * n + c]) > std::abs(a[pivot * n + c])) pivot = r;
    if (std::abs(a[pivot * n + c]) == 0.0) throw NumericError("singular system in RZF init");
    if (pivot != c) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[c * n + j], a[pivot * n + j]);
      for (std::size_t j = 0; j < rhs; ++j) std::swap(b[c * rhs + j], b[pivot * rhs + j]);
    }
    const Complex inv = 1.0 / a[c * n + c];
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c) continue;
      const Complex f = a[r * n + c] * inv;
      if (f == Complex{}) continue;
      for (std::size_t j = c; j < n; ++j) a[r * n + j] -= f * a[c * n + j];
      for (std::size_t j = 0; j < rhs; ++j) b[r * rhs + j] -= f * b[c * rhs + j];
    }
  }
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < rhs; ++j) b[r * rhs + j] /= a[r * n + r];
  return b;
}

// Regularized zero-forcing directions, each beam unit-norm.
BeamformingMatrix rzf(const SystemConfig& config, const ChannelSample& sample) {
  const std::size_t k = sample.k, n_t = sample.n_t;
  const double reg = config.noise_power * static_cast<double>(k) / config.p_max;
  // gram[k][j] = h_k^H h_j
  std::vector<Complex> gram(k * k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      Complex acc{};
      for (std::size_t n = 0; n < n_t; ++n) acc += std::conj(sample.at(a, n)) * sample.at(b, n);
      gram[a * k + b] = acc + (a == b ? reg : 0.0);
    }
  std::vector<Complex> identity(k * k);
  for (std::size_t a = 0; a < k; ++a) identity[a * k + a] = 1.0;
  const auto inv = solve_linear(gram, identity, k, k);
  // w_i = sum_j h_j inv[j][i]
  auto w = BeamformingMatrix::zeros(k, n_t);
  for (std::size_t i = 0; i < k; ++i) {
    double norm = 0.0;
    for (std::size_t n = 0; n < n_t; ++n) {
      Complex acc{};
      for (std::size_t j = 0; j < k; ++j) acc += sample.at(j, n) * inv[j * k + i];
      w.at(i, n) = acc;
      norm += std::norm(acc);
    }
    norm = std::sqrt(norm);
    if (norm > 0.0)
      for (std::size_t n = 0; n < n_t; ++n) w.at(i, n) /= norm;
  }
  return w;
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::kClosedFormK1: return "closed_form_k1";
    case Method::kPgaMultistart: return "pga_multistart";
    case Method::kDinkelbach: return "dinkelbach_sca";
  }
  return "unknown";
}

Method parse_method(const std::string& s) {
  if (s == "closed_form_k1") return Method::kClosedFormK1;
  if (s == "pga_multistart" || s == "pga") return Method::kPgaMultistart;
  if (s == "dinkelbach_sca" || s == "dinkelbach") return Method::kDinkelbach;
  throw ContractError("unknown oracle method '" + s + "'");
}

void OracleConfig::validate() const {
  if (restarts < 1) throw ContractError("oracle restarts must be >= 1");
  if (!(tolerance > 0.0)) throw ContractError("oracle tolerance must be > 0");
  if (!(shrink > 0.0 && shrink < 1.0)) throw ContractError("line-search shrink must lie in (0, 1)");
  if (!(initial_step > 0.0)) throw ContractError("initial step must be > 0");
}

double k1_energy_efficiency(const SystemConfig& config, double channel_gain, double p) {
  return config.weight(0) * std::log2(1.0 + p * channel_gain / config.noise_power) /
         (p + config.p_c);
}

Solution solve_k1(const SystemConfig& config, const ChannelSample& sample) {
  if (sample.k != 1) throw ContractError("solve_k1 needs K=1, got K=" + std::to_string(sample.k));
  double gain = 0.0;
  for (const auto& v : sample.h) gain += std::norm(v);
  Solution out{BeamformingMatrix::zeros(1, sample.n_t), 0.0, 0};
  if (gain == 0.0) return out;

  const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = 0.0, b = config.p_max;
  double c = b - ratio * (b - a), d = a + ratio * (b - a);
  double fc = k1_energy_efficiency(config, gain, c), fd = k1_energy_efficiency(config, gain, d);
  while (b - a > 1e-10) {
    if (fc < fd) {
      a = c;
      c = d;
      fc = fd;
      d = a + ratio * (b - a);
      fd = k1_energy_efficiency(config, gain, d);
    } else {
      b = d;
      d = c;
      fd = fc;
      c = b - ratio * (b - a);
      fc = k1_energy_efficiency(config, gain, c);
    }
    ++out.iterations;
  }
  const double p = 0.5 * (a + b);
  out.w = scaled_to_power(mrt(sample), p);
  out.ee = sys::energy_efficiency(config, sample, out.w);
  return out;
}

std::vector<BeamformingMatrix> initial_points(const SystemConfig& config,
                                              const ChannelSample& sample,
                                              const OracleConfig& options) {
  std::vector<BeamformingMatrix> points;
  const auto base_mrt = mrt(sample);
  points.push_back(scaled_to_power(base_mrt, config.p_max));
  points.push_back(scaled_to_power(base_mrt, 0.3 * config.p_max));
  if (sample.k > 1) {
    const auto base_rzf = rzf(config, sample);
    points.push_back(scaled_to_power(base_rzf, config.p_max));
    points.push_back(scaled_to_power(base_rzf, 0.3 * config.p_max));
  }
  for (std::size_t r = points.size(); r < options.restarts; ++r) {
    std::mt19937_64 rng(mix(options.seed, r));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> fraction(0.05, 1.0);
    auto w = BeamformingMatrix::zeros(sample.k, sample.n_t);
    for (auto& v : w.w) {
      const double re = normal(rng);
      v = {re, normal(rng)};
    }
    points.push_back(scaled_to_power(std::move(w), fraction(rng) * config.p_max));
  }
  points.resize(std::min(points.size(), options.restarts));
  return points;
}

Solution solve_pga(const SystemConfig& config, const ChannelSample& sample,
                   const OracleConfig& options) {
  options.validate();
  Solution best{BeamformingMatrix::zeros(sample.k, sample.n_t), -1.0, 0};
  for (const auto& start : initial_points(config, sample, options)) {
    const auto run = projected_ascent(config, sample, to_real(start), options, nullptr);
    best.iterations += run.iterations;
    if (run.value > best.ee) {
      best.ee = run.value;
      best.w = sys::from_real_rows(run.x, sample.k, sample.n_t);
    }
  }
  best.ee = sys::energy_efficiency(config, sample, best.w);
  return best;
}

Solution solve_dinkelbach(const SystemConfig& config, const ChannelSample& sample,
                          const OracleConfig& options, std::vector<double>* lambda_trace) {
  options.validate();
  constexpr std::size_t kMaxOuter = 100;
  Solution best{BeamformingMatrix::zeros(sample.k, sample.n_t), -1.0, 0};
  for (const auto& start : initial_points(config, sample, options)) {
    std::vector<double> x = to_real(start);
    project(x, config.p_max);
    double lambda = sys::energy_efficiency(config, sample, sys::from_real_rows(x, sample.k, sample.n_t));
    std::vector<double> trace{lambda};
    std::size_t iterations = 0;
    for (std::size_t outer = 0; outer < kMaxOuter; ++outer) {
      auto inner = projected_ascent(config, sample, x, options, &lambda);
      iterations += inner.iterations;
      x = std::move(inner.x);
      const double next =
          sys::energy_efficiency(config, sample, sys::from_real_rows(x, sample.k, sample.n_t));
      const double f_lambda = inner.value;
      const double previous = lambda;
      lambda = std::max(lambda, next);
      trace.push_back(lambda);
      if (std::abs(f_lambda) < options.tolerance || lambda - previous <= options.tolerance * previous) {
        break;
      }
    }
    best.iterations += iterations;
    if (lambda > best.ee) {
      best.ee = lambda;
      best.w = sys::from_real_rows(x, sample.k, sample.n_t);
      if (lambda_trace) *lambda_trace = trace;
    }
  }
  best.ee = sys::energy_efficiency(config, sample, best.w);
  return best;
}

Solution solve(const SystemConfig& config, const ChannelSample& sample, const OracleConfig& options) {
  switch (options.method) {
    case Method::kClosedFormK1: return solve_k1(config, sample);
    case Method::kPgaMultistart: return solve_pga(config, sample, options);
    case Method::kDinkelbach: return solve_dinkelbach(config, sample, options);
  }
  throw ContractError("unknown oracle method");
}

std::vector<CacheEntry> read_cache(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open oracle cache " + path.string());
  std::vector<CacheEntry> out;
  std::string line;
  std::uint64_t offset = 0;
  bool header = true;
  while (std::getline(in, line)) {
    const auto at = offset;
    offset += line.size() + 1;
    if (header) {
      if (line != "sample_index,ee_oracle,method,iters") {
        throw FormatError("unexpected oracle cache header '" + line + "'", at);
      }
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string idx, ee, method, iters;
    if (!std::getline(ss, idx, ',') || !std::getline(ss, ee, ',') ||
        !std::getline(ss, method, ',') || !std::getline(ss, iters)) {
      throw FormatError("malformed oracle cache row '" + line + "'", at);
    }
    try {
      out.push_back({std::stoul(idx), std::stod(ee), method, std::stoul(iters)});
    } catch (const std::exception&) {
      throw FormatError("malformed oracle cache row '" + line + "'", at);
    }
  }
  return out;
}

void write_cache(const std::vector<CacheEntry>& entries, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.precision(17);
  out << "sample_index,ee_oracle,method,iters\n";
  for (const auto& e : entries)
    out << e.sample_index << ',' << e.ee << ',' << e.method << ',' << e.iterations << '\n';
}

std::vector<double> oracle_energy_efficiencies(const SystemConfig& config,
                                               std::span<const ChannelSample> samples,
                                               const OracleConfig& options,
                                               const std::filesystem::path& cache) {
  const std::string method = to_string(options.method);
  if (!cache.empty() && std::filesystem::exists(cache)) {
    std::map<std::size_t, double> found;
    for (const auto& e : read_cache(cache))
      if (e.method == method) found[e.sample_index] = e.ee;
    bool complete = true;
    std::vector<double> out(samples.size());
    for (std::size_t i = 0; i < samples.size() && complete; ++i) {
      auto it = found.find(i);
      if (it == found.end()) complete = false;
      else out[i] = it->second;
    }
    if (complete) return out;
  }

  std::vector<Solution> solutions(samples.size());
  parallel_for(samples.size(), [&](std::size_t i) { solutions[i] = solve(config, samples[i], options); });
  std::vector<double> out(samples.size());
  std::vector<CacheEntry> entries;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[i] = solutions[i].ee;
    entries.push_back({i, solutions[i].ee, method, solutions[i].iterations});
  }
  if (!cache.empty()) write_cache(entries, cache);
  return out;
}

}  // namespace kfbf::oracle
