#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "kfbf/model/model.hpp"
#include "kfbf/oracle/oracle.hpp"
#include "kfbf/sysmodel/system.hpp"
#include "kfbf/training/training.hpp"

namespace kfbf::cli {

struct LatencyStats {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p95_ms = 0.0;
  std::size_t passes = 0;
};

/// Nearest-rank percentiles of per-pass wall times.
LatencyStats summarize_latency(std::vector<double> samples_ms);

/// Single-sample forward passes, strictly sequential on the calling thread:
/// `warmup` untimed passes, then `timed` timed passes cycling through
/// `samples`.
LatencyStats measure_latency(const model::Model& model, std::span<const sys::ChannelSample> samples,
                             double p_max, std::size_t warmup = 10, std::size_t timed = 100);

struct EvalReport {
  std::string model_id;
  std::string dataset_id;
  std::size_t k_train = 0;
  std::size_t k_test = 0;
  std::size_t n_t = 0;
  double mean_ee = 0.0;
  double oracle_mean_ee = 0.0;
  double optimality_ratio = 0.0;  // percent
  std::string oracle_method;
  LatencyStats latency;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
};

double mean(std::span<const double> values);
/// 100 * model / oracle.
double optimality_ratio(double model_ee, double oracle_ee);

/// Mean EE of the model on `samples` against precomputed oracle values.
EvalReport evaluate(const model::Model& model, const sys::SystemConfig& system,
                    std::span<const sys::ChannelSample> samples, std::span<const double> oracle_ee);

std::string to_json(const EvalReport& report);
extern const char* const kEvalCsvHeader;
std::string csv_row(const EvalReport& report);

/// Appends `row` to a CSV file, writing `header` first when the file is new
/// or empty.
void append_csv(const std::filesystem::path& path, const std::string& header,
                const std::string& row);

struct TransferRow {
  std::size_t epochs = 0;
  double plain_ee = 0.0;      // K_Tr checkpoint applied as is
  double fine_tuned_ee = 0.0;
  std::optional<double> retrained_ee;
  double oracle_ee = 0.0;
};

extern const char* const kTransferCsvHeader;
std::string csv_row(const TransferRow& row);

/// Fine-tunes a copy of `base` on `train_data` once per epoch budget and
/// evaluates on `test`. A budget of 0 is plain scaling. With
/// `retrain_epochs` > 0 a freshly initialized model of the same config is
/// also trained for that many epochs (once, reported on every row).
std::vector<TransferRow> run_transfer(const model::Model& base, const sys::Dataset& train_data,
                                      std::span<const sys::ChannelSample> test,
                                      std::span<const double> oracle_ee,
                                      const train::TrainConfig& config,
                                      std::span<const std::size_t> budgets,
                                      std::size_t retrain_epochs = 0);

/// Held-out test samples for user count k, from the dataset's configuration.
struct TestSet {
  std::size_t k = 0;
  std::vector<sys::ChannelSample> samples;
  std::vector<double> oracle_ee;
};

struct AblationCell {
  model::EncoderKind encoder;
  model::DecoderKind decoder;
  std::size_t k_test = 0;
  double mean_ee = 0.0;
  double oracle_ee = 0.0;
  double ratio = 0.0;
};

struct AblationResult {
  std::vector<AblationCell> cells;  // encoder-major, then decoder, then K
  /// Per K: mean over decoders of (transformer - gat) ratio, and mean over
  /// encoders of (kan - mlp) ratio, in percentage points.
  std::vector<std::size_t> ks;
  std::vector<double> encoder_gain;
  std::vector<double> decoder_gain;

  const AblationCell& cell(model::EncoderKind e, model::DecoderKind d, std::size_t k) const;
};

/// Trains every encoder x decoder combination from the same seed and data
/// and evaluates each on every test set.
AblationResult run_ablation(const model::ModelConfig& base, const sys::Dataset& train_data,
                            std::span<const TestSet> tests, const train::TrainConfig& config,
                            std::span<const model::EncoderKind> encoders,
                            std::span<const model::DecoderKind> decoders);

extern const char* const kAblationCsvHeader;
void write_ablation_csv(const AblationResult& result, const std::filesystem::path& path);
void print_ablation(const AblationResult& result, std::ostream& out);

struct BenchRow {
  std::size_t k_test = 0;
  std::size_t n_t = 0;
  LatencyStats model;
  double oracle_mean_ms = 0.0;
  std::size_t oracle_samples = 0;
  std::string oracle_method;
};

extern const char* const kBenchCsvHeader;
std::string csv_row(const BenchRow& row);

/// Model latency per measure_latency() plus the mean wall time of the
/// oracle on the first `oracle_samples` samples.
BenchRow bench(const model::Model& model, const sys::SystemConfig& system,
               std::span<const sys::ChannelSample> samples, std::size_t repeats,
               const oracle::OracleConfig& oracle_config, std::size_t oracle_samples);

/// Deep copy whose parameters share nothing with the source.
model::Model copy_model(const model::Model& source);

}  // namespace kfbf::cli
