#include "kfbf/sysmodel/system.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "kfbf/autodiff/ops.hpp"
#include "kfbf/binary_io.hpp"
#include "kfbf/error.hpp"

namespace kfbf::sys {

void SystemConfig::validate() const {
  if (n_t < 1) throw ContractError("n_t must be >= 1");
  if (k < 1) throw ContractError("k must be >= 1");
  if (!(p_max > 0.0)) throw ContractError("p_max must be > 0");
  if (!(p_c >= 0.0)) throw ContractError("p_c must be >= 0");
  if (!(noise_power > 0.0)) throw ContractError("noise_power must be > 0");
  if (!weights.empty()) {
    if (weights.size() != k) {
      throw ContractError("weights has " + std::to_string(weights.size()) + " entries for k=" +
                          std::to_string(k));
    }
    for (double a : weights)
      if (!(a > 0.0)) throw ContractError("user weights must be > 0");
  }
}

double BeamformingMatrix::total_power() const {
  double p = 0.0;
  for (const auto& v : w) p += std::norm(v);
  return p;
}

std::vector<ChannelSample> generate_rayleigh(const SystemConfig& config, std::size_t count,
                                             std::uint64_t seed) {
  config.validate();
  if (count < 1) throw ContractError("generate_rayleigh: count must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::sqrt(0.5));
  std::vector<ChannelSample> out(count);
  for (auto& s : out) {
    s.k = config.k;
    s.n_t = config.n_t;
    s.h.resize(config.k * config.n_t);
    for (auto& v : s.h) {
      const double re = normal(rng);
      const double im = normal(rng);
      v = {re, im};
    }
  }
  return out;
}

namespace {

void check_shapes(const ChannelSample& sample, const BeamformingMatrix& w) {
  if (sample.k != w.k || sample.n_t != w.n_t) {
    throw DimensionError("channel is " + std::to_string(sample.k) + "x" +
                         std::to_string(sample.n_t) + " but beamformer is " +
                         std::to_string(w.k) + "x" + std::to_string(w.n_t));
  }
}

// h_u^H w_i
Complex inner(const ChannelSample& sample, std::size_t user, const BeamformingMatrix& w,
              std::size_t i) {
  Complex acc{0.0, 0.0};
  for (std::size_t n = 0; n < sample.n_t; ++n) acc += std::conj(sample.at(user, n)) * w.at(i, n);
  return acc;
}

}  // namespace

double rate(const SystemConfig& config, const ChannelSample& sample, const BeamformingMatrix& w,
            std::size_t user) {
  check_shapes(sample, w);
  if (user >= sample.k) throw ContractError("user index out of range");
  const double signal = std::norm(inner(sample, user, w, user));
  double interference = 0.0;
  for (std::size_t i = 0; i < sample.k; ++i)
    if (i != user) interference += std::norm(inner(sample, user, w, i));
  return std::log2(1.0 + signal / (interference + config.noise_power));
}

double energy_efficiency(const SystemConfig& config, const ChannelSample& sample,
                         const BeamformingMatrix& w) {
  check_shapes(sample, w);
  double weighted = 0.0;
  for (std::size_t u = 0; u < sample.k; ++u) weighted += config.weight(u) * rate(config, sample, w, u);
  return weighted / (w.total_power() + config.p_c);
}

BeamformingMatrix scale_to_budget(const BeamformingMatrix& w_tilde, double p_max) {
  const double total = w_tilde.total_power();
  BeamformingMatrix out = w_tilde;
  if (total > p_max) {
    const double f = std::sqrt(p_max / total);
    for (auto& v : out.w) v *= f;
  }
  return out;
}

std::vector<double> to_real_rows(const BeamformingMatrix& w) {
  std::vector<double> rows(w.k * 2 * w.n_t);
  for (std::size_t u = 0; u < w.k; ++u)
    for (std::size_t n = 0; n < w.n_t; ++n) {
      rows[u * 2 * w.n_t + n] = w.at(u, n).real();
      rows[u * 2 * w.n_t + w.n_t + n] = w.at(u, n).imag();
    }
  return rows;
}

BeamformingMatrix from_real_rows(std::span<const double> rows, std::size_t k, std::size_t n_t) {
  if (rows.size() != k * 2 * n_t) {
    throw DimensionError("from_real_rows: " + std::to_string(rows.size()) +
                         " values for k=" + std::to_string(k) + ", n_t=" + std::to_string(n_t));
  }
  auto w = BeamformingMatrix::zeros(k, n_t);
  for (std::size_t u = 0; u < k; ++u)
    for (std::size_t n = 0; n < n_t; ++n)
      w.at(u, n) = {rows[u * 2 * n_t + n], rows[u * 2 * n_t + n_t + n]};
  return w;
}

ad::Tensor energy_efficiency_graph(ad::Tape& tape, const SystemConfig& config,
                                   std::span<const ChannelSample* const> samples,
                                   const ad::Tensor& w_rows) {
  if (samples.empty()) throw ContractError("energy_efficiency_graph: empty batch");
  const std::size_t k = samples.front()->k;
  const std::size_t n_t = samples.front()->n_t;
  if (w_rows.rows() != samples.size() * k || w_rows.cols() != 2 * n_t) {
    throw DimensionError("energy_efficiency_graph: beamformer rows " + w_rows.shape().str() +
                         " for " + std::to_string(samples.size()) + " samples of " +
                         std::to_string(k) + "x" + std::to_string(n_t));
  }
  std::vector<double> alpha(k);
  for (std::size_t u = 0; u < k; ++u) alpha[u] = config.weight(u);
  const auto alpha_t = ad::Tensor::from({k, 1}, alpha);

  std::vector<ad::Tensor> per_sample;
  per_sample.reserve(samples.size());
  for (std::size_t b = 0; b < samples.size(); ++b) {
    const ChannelSample& s = *samples[b];
    if (s.k != k || s.n_t != n_t) throw DimensionError("energy_efficiency_graph: mixed K in batch");
    std::vector<double> hr(k * n_t), hi(k * n_t);
    for (std::size_t q = 0; q < k * n_t; ++q) {
      hr[q] = s.h[q].real();
      hi[q] = s.h[q].imag();
    }
    const auto h_re = ad::Tensor::from({k, n_t}, std::move(hr));
    const auto h_im = ad::Tensor::from({k, n_t}, std::move(hi));

    const auto wb = ad::slice_rows(tape, w_rows, b * k, (b + 1) * k);
    const auto w_re_t = ad::transpose(tape, ad::slice_columns(tape, wb, 0, n_t));
    const auto w_im_t = ad::transpose(tape, ad::slice_columns(tape, wb, n_t, 2 * n_t));
    // z[u][i] = h_u^H w_i split into real and imaginary parts.
    const auto z_re =
        ad::add(tape, ad::matmul(tape, h_re, w_re_t), ad::matmul(tape, h_im, w_im_t));
    const auto z_im =
        ad::sub(tape, ad::matmul(tape, h_re, w_im_t), ad::matmul(tape, h_im, w_re_t));
    const auto gain = ad::add(tape, ad::square(tape, z_re), ad::square(tape, z_im));

    const auto signal = ad::diag(tape, gain);
    const auto interference = ad::sub(tape, ad::sum_rows(tape, gain), signal);
    const auto sinr = ad::div(tape, signal, ad::add_scalar(tape, interference, config.noise_power));
    const auto rates =
        ad::scale(tape, ad::log(tape, ad::add_scalar(tape, sinr, 1.0)), 1.0 / std::numbers::ln2);
    const auto numerator = ad::reduce_sum(tape, ad::mul(tape, rates, alpha_t));
    const auto denominator =
        ad::add_scalar(tape, ad::reduce_sum(tape, ad::square(tape, wb)), config.p_c);
    per_sample.push_back(ad::div(tape, numerator, denominator));
  }
  return per_sample.size() == 1 ? per_sample.front() : ad::concat_rows(tape, per_sample);
}

namespace {
constexpr char kDatasetMagic[] = "KFDS";
constexpr std::uint32_t kDatasetVersion = 1;
}  // namespace

void write_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  const auto& c = dataset.config;
  c.validate();
  io::ByteWriter out;
  out.bytes({kDatasetMagic, 4});
  out.u32(kDatasetVersion);
  out.u32(static_cast<std::uint32_t>(c.n_t));
  out.u32(static_cast<std::uint32_t>(c.k));
  out.u64(dataset.samples.size());
  out.f64(c.noise_power);
  out.f64(c.p_max);
  out.f64(c.p_c);
  for (const auto& s : dataset.samples) {
    if (s.k != c.k || s.n_t != c.n_t || s.h.size() != c.k * c.n_t) {
      throw DimensionError("write_dataset: sample shape disagrees with config");
    }
    for (const auto& v : s.h) {
      out.f64(v.real());
      out.f64(v.imag());
    }
  }
  out.save(path);
}

Dataset read_dataset(const std::filesystem::path& path) {
  auto in = io::ByteReader::load(path);
  const auto magic = in.bytes(4, "magic");
  if (magic != std::string_view(kDatasetMagic, 4)) {
    throw FormatError("bad dataset magic '" + magic + "'", 0);
  }
  const auto version_at = in.offset();
  const auto version = in.u32("version");
  if (version != kDatasetVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(version), version_at);
  }
  Dataset ds;
  ds.config.n_t = in.u32("n_t");
  ds.config.k = in.u32("k");
  const auto count_at = in.offset();
  const auto count = in.u64("count");
  ds.config.noise_power = in.f64("noise_power");
  ds.config.p_max = in.f64("p_max");
  ds.config.p_c = in.f64("p_c");
  try {
    ds.config.validate();
  } catch (const ContractError& e) {
    throw FormatError(std::string("invalid dataset header: ") + e.what(), version_at);
  }
  const std::uint64_t record_bytes = ds.config.k * ds.config.n_t * 16;
  if (count > in.remaining() / record_bytes) {
    throw FormatError("header declares " + std::to_string(count) + " records but only " +
                          std::to_string(in.remaining() / record_bytes) + " fit in the file",
                      count_at);
  }
  ds.samples.resize(count);
  std::vector<double> raw(ds.config.k * ds.config.n_t * 2);
  for (auto& s : ds.samples) {
    in.f64s(raw, "record");
    s.k = ds.config.k;
    s.n_t = ds.config.n_t;
    s.h.resize(s.k * s.n_t);
    for (std::size_t q = 0; q < s.h.size(); ++q) s.h[q] = {raw[2 * q], raw[2 * q + 1]};
  }
  if (in.remaining() != 0) {
    throw FormatError("trailing bytes after " + std::to_string(count) + " records", in.offset());
  }
  return ds;
}

}  // namespace kfbf::sys
