#include "kfbf/cli/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "kfbf/error.hpp"

namespace kfbf::cli {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::string real(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace

LatencyStats summarize_latency(std::vector<double> samples_ms) {
  if (samples_ms.empty()) throw ContractError("no latency samples");
  std::sort(samples_ms.begin(), samples_ms.end());
  auto rank = [&](double q) {
    const auto n = samples_ms.size();
    const auto r = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n)));
    return samples_ms[std::clamp<std::size_t>(r, 1, n) - 1];
  };
  LatencyStats s;
  s.passes = samples_ms.size();
  for (double v : samples_ms) s.mean_ms += v;
  s.mean_ms /= static_cast<double>(s.passes);
  s.p50_ms = rank(0.50);
  s.p95_ms = rank(0.95);
  return s;
}

LatencyStats measure_latency(const model::Model& model, std::span<const sys::ChannelSample> samples,
                             double p_max, std::size_t warmup, std::size_t timed) {
  if (samples.empty()) throw ContractError("latency needs at least one sample");
  if (timed == 0) throw ContractError("latency needs at least one timed pass");
  for (std::size_t i = 0; i < warmup; ++i) (void)model.forward(samples[i % samples.size()], p_max);
  std::vector<double> times;
  times.reserve(timed);
  for (std::size_t i = 0; i < timed; ++i) {
    const auto start = Clock::now();
    const auto w = model.forward(samples[i % samples.size()], p_max);
    times.push_back(elapsed_ms(start));
    if (w.w.empty()) throw NumericError("empty forward output");
  }
  return summarize_latency(std::move(times));
}

double mean(std::span<const double> values) {
  if (values.empty()) throw ContractError("mean of an empty range");
  double total = 0.0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

double optimality_ratio(double model_ee, double oracle_ee) {
  if (!(oracle_ee > 0.0)) throw NumericError("oracle EE must be positive");
  return 100.0 * model_ee / oracle_ee;
}

EvalReport evaluate(const model::Model& model, const sys::SystemConfig& system,
                    std::span<const sys::ChannelSample> samples, std::span<const double> oracle_ee) {
  if (samples.size() != oracle_ee.size()) {
    throw ContractError("oracle values do not match the sample count");
  }
  EvalReport r;
  r.k_train = model.trained_k();
  r.k_test = samples.front().k;
  r.n_t = system.n_t;
  r.samples = samples.size();
  r.mean_ee = train::mean_energy_efficiency(model, system, samples);
  r.oracle_mean_ee = mean(oracle_ee);
  r.optimality_ratio = optimality_ratio(r.mean_ee, r.oracle_mean_ee);
  return r;
}

std::string to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["model_id"] = r.model_id;
  j["dataset_id"] = r.dataset_id;
  j["k_train"] = r.k_train;
  j["k_test"] = r.k_test;
  j["n_t"] = r.n_t;
  j["mean_ee"] = r.mean_ee;
  j["oracle_mean_ee"] = r.oracle_mean_ee;
  j["optimality_ratio"] = r.optimality_ratio;
  j["oracle_method"] = r.oracle_method;
  j["latency_ms"] = {{"mean", r.latency.mean_ms},
                     {"p50", r.latency.p50_ms},
                     {"p95", r.latency.p95_ms},
                     {"passes", r.latency.passes}};
  j["samples"] = r.samples;
  j["seed"] = r.seed;
  return j.dump(2) + "\n";
}

const char* const kEvalCsvHeader =
    "model_id,dataset_id,k_train,k_test,n_t,mean_ee,oracle_mean_ee,optimality_ratio,"
    "oracle_method,latency_mean_ms,latency_p50_ms,latency_p95_ms,latency_passes,samples,seed";

std::string csv_row(const EvalReport& r) {
  std::ostringstream out;
  out << r.model_id << ',' << r.dataset_id << ',' << r.k_train << ',' << r.k_test << ',' << r.n_t
      << ',' << real(r.mean_ee) << ',' << real(r.oracle_mean_ee) << ',' << real(r.optimality_ratio)
      << ',' << r.oracle_method << ',' << real(r.latency.mean_ms) << ','
      << real(r.latency.p50_ms) << ',' << real(r.latency.p95_ms) << ',' << r.latency.passes << ','
      << r.samples << ',' << r.seed;
  return out.str();
}

void append_csv(const std::filesystem::path& path, const std::string& header,
                const std::string& row) {
  const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  if (!fresh) {
    std::ifstream in(path);
    std::string existing;
    std::getline(in, existing);
    if (existing != header) {
      throw ContractError("refusing to append to " + path.string() + ": header differs");
    }
  }
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  if (fresh) out << header << '\n';
  out << row << '\n';
}

const char* const kTransferCsvHeader =
    "epochs,plain_scaling_ratio,fine_tuned_ratio,retrained_ratio,plain_scaling_ee,"
    "fine_tuned_ee,retrained_ee,oracle_ee";

std::string csv_row(const TransferRow& row) {
  std::ostringstream out;
  out << row.epochs << ',' << real(optimality_ratio(row.plain_ee, row.oracle_ee)) << ','
      << real(optimality_ratio(row.fine_tuned_ee, row.oracle_ee)) << ',';
  if (row.retrained_ee) out << real(optimality_ratio(*row.retrained_ee, row.oracle_ee));
  out << ',' << real(row.plain_ee) << ',' << real(row.fine_tuned_ee) << ',';
  if (row.retrained_ee) out << real(*row.retrained_ee);
  out << ',' << real(row.oracle_ee);
  return out.str();
}

model::Model copy_model(const model::Model& source) {
  model::Model copy(source.config(), source.n_t(), source.fixed_k());
  copy.set_trained_k(source.trained_k());
  copy.parameters().assign_values(source.parameters());
  return copy;
}

std::vector<TransferRow> run_transfer(const model::Model& base, const sys::Dataset& train_data,
                                      std::span<const sys::ChannelSample> test,
                                      std::span<const double> oracle_ee,
                                      const train::TrainConfig& config,
                                      std::span<const std::size_t> budgets,
                                      std::size_t retrain_epochs) {
  const double oracle = mean(oracle_ee);
  const double plain = train::mean_energy_efficiency(base, train_data.config, test);

  std::optional<double> retrained;
  if (retrain_epochs > 0) {
    model::Model fresh(base.config(), base.n_t(), base.scalable() ? 0 : train_data.config.k);
    train::TrainConfig c = config;
    c.epochs = retrain_epochs;
    train::train(fresh, train_data, c);
    retrained = train::mean_energy_efficiency(fresh, train_data.config, test);
  }

  std::vector<TransferRow> rows;
  for (const auto epochs : budgets) {
    TransferRow row{epochs, plain, plain, retrained, oracle};
    if (epochs > 0) {
      auto tuned = copy_model(base);
      train::fine_tune(tuned, train_data, config, epochs);
      row.fine_tuned_ee = train::mean_energy_efficiency(tuned, train_data.config, test);
    }
    rows.push_back(row);
  }
  return rows;
}

const AblationCell& AblationResult::cell(model::EncoderKind e, model::DecoderKind d,
                                         std::size_t k) const {
  for (const auto& c : cells)
    if (c.encoder == e && c.decoder == d && c.k_test == k) return c;
  throw ContractError("no ablation cell for " + model::to_string(e) + "+" + model::to_string(d) +
                      " at K=" + std::to_string(k));
}

AblationResult run_ablation(const model::ModelConfig& base, const sys::Dataset& train_data,
                            std::span<const TestSet> tests, const train::TrainConfig& config,
                            std::span<const model::EncoderKind> encoders,
                            std::span<const model::DecoderKind> decoders) {
  if (base.architecture != model::Architecture::kEncoderDecoder) {
    throw ContractError("ablation needs an encoder/decoder model");
  }
  AblationResult result;
  for (const auto& t : tests) result.ks.push_back(t.k);
  for (const auto e : encoders) {
    for (const auto d : decoders) {
      model::ModelConfig mc = base;
      mc.encoder = e;
      mc.decoder = d;
      model::Model m(mc, train_data.config.n_t);
      m.set_trained_k(train_data.config.k);
      train::train(m, train_data, config);
      for (const auto& t : tests) {
        sys::SystemConfig system = train_data.config;
        system.k = t.k;
        AblationCell c{e, d, t.k};
        c.mean_ee = train::mean_energy_efficiency(m, system, t.samples);
        c.oracle_ee = mean(t.oracle_ee);
        c.ratio = optimality_ratio(c.mean_ee, c.oracle_ee);
        result.cells.push_back(c);
      }
    }
  }

  auto has = [](auto span, auto v) { return std::find(span.begin(), span.end(), v) != span.end(); };
  using model::DecoderKind;
  using model::EncoderKind;
  const bool enc_pair = has(encoders, EncoderKind::kTransformer) && has(encoders, EncoderKind::kGat);
  const bool dec_pair = has(decoders, DecoderKind::kKan) && has(decoders, DecoderKind::kMlp);
  for (const auto k : result.ks) {
    if (enc_pair) {
      double g = 0.0;
      for (const auto d : decoders)
        g += result.cell(EncoderKind::kTransformer, d, k).ratio - result.cell(EncoderKind::kGat, d, k).ratio;
      result.encoder_gain.push_back(g / static_cast<double>(decoders.size()));
    }
    if (dec_pair) {
      double g = 0.0;
      for (const auto e : encoders)
        g += result.cell(e, DecoderKind::kKan, k).ratio - result.cell(e, DecoderKind::kMlp, k).ratio;
      result.decoder_gain.push_back(g / static_cast<double>(encoders.size()));
    }
  }
  return result;
}

const char* const kAblationCsvHeader = "row,encoder,decoder,k_test,mean_ee,oracle_ee,optimality_ratio";

void write_ablation_csv(const AblationResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << kAblationCsvHeader << '\n';
  for (const auto& c : result.cells) {
    out << "cell," << model::to_string(c.encoder) << ',' << model::to_string(c.decoder) << ','
        << c.k_test << ',' << real(c.mean_ee) << ',' << real(c.oracle_ee) << ',' << real(c.ratio)
        << '\n';
  }
  // gain rows carry a difference of ratios (percentage points), no EE values
  for (std::size_t i = 0; i < result.encoder_gain.size(); ++i) {
    out << "encoder_gain,transformer-gat,*," << result.ks[i] << ",,," << real(result.encoder_gain[i])
        << '\n';
  }
  for (std::size_t i = 0; i < result.decoder_gain.size(); ++i) {
    out << "decoder_gain,*,kan-mlp," << result.ks[i] << ",,," << real(result.decoder_gain[i]) << '\n';
  }
}

void print_ablation(const AblationResult& result, std::ostream& out) {
  out << std::left << std::setw(20) << "model";
  for (auto k : result.ks) out << std::setw(12) << ("K=" + std::to_string(k));
  out << '\n' << std::fixed << std::setprecision(2);
  for (std::size_t i = 0; i < result.cells.size(); i += result.ks.size()) {
    const auto& c = result.cells[i];
    out << std::setw(20) << (model::to_string(c.encoder) + "+" + model::to_string(c.decoder));
    for (std::size_t j = 0; j < result.ks.size(); ++j) out << std::setw(12) << result.cells[i + j].ratio;
    out << '\n';
  }
  if (!result.encoder_gain.empty()) {
    out << std::setw(20) << "gain transformer";
    for (double g : result.encoder_gain) out << std::setw(12) << g;
    out << '\n';
  }
  if (!result.decoder_gain.empty()) {
    out << std::setw(20) << "gain kan";
    for (double g : result.decoder_gain) out << std::setw(12) << g;
    out << '\n';
  }
  out.unsetf(std::ios::floatfield);
}

const char* const kBenchCsvHeader =
    "k_test,n_t,model_mean_ms,model_p50_ms,model_p95_ms,model_passes,oracle_mean_ms,"
    "oracle_samples,oracle_method";

std::string csv_row(const BenchRow& row) {
  std::ostringstream out;
  out << row.k_test << ',' << row.n_t << ',' << real(row.model.mean_ms) << ','
      << real(row.model.p50_ms) << ',' << real(row.model.p95_ms) << ',' << row.model.passes << ','
      << real(row.oracle_mean_ms) << ',' << row.oracle_samples << ',' << row.oracle_method;
  return out.str();
}

BenchRow bench(const model::Model& model, const sys::SystemConfig& system,
               std::span<const sys::ChannelSample> samples, std::size_t repeats,
               const oracle::OracleConfig& oracle_config, std::size_t oracle_samples) {
  BenchRow row;
  row.k_test = samples.front().k;
  row.n_t = system.n_t;
  row.model = measure_latency(model, samples, system.p_max, 10, repeats);
  row.oracle_method = oracle::to_string(oracle_config.method);
  row.oracle_samples = std::min(oracle_samples, samples.size());
  if (row.oracle_samples > 0) {
    double total = 0.0;
    for (std::size_t i = 0; i < row.oracle_samples; ++i) {
      const auto start = Clock::now();
      (void)oracle::solve(system, samples[i], oracle_config);
      total += elapsed_ms(start);
    }
    row.oracle_mean_ms = total / static_cast<double>(row.oracle_samples);
  }
  return row;
}

}  // namespace kfbf::cli
