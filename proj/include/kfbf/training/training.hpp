#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "kfbf/autodiff/tensor.hpp"
#include "kfbf/key_values.hpp"
#include "kfbf/model/model.hpp"
#include "kfbf/sysmodel/system.hpp"

namespace kfbf::train {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 16;
  std::size_t epochs = 100;
  std::uint64_t seed = 1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double val_fraction = 0.1;  // tail of the dataset held out for model selection
  double output_gain = 0.02;  // see InitOptions
  bool unit_kan_base = false;
  /// Rotate every user's channel by an independent random phase each time a
  /// sample enters a batch. EE depends on h_k only through |h_k^H w_i|, so
  /// the rotated instance has the same optimal beamformers.
  bool phase_augmentation = true;
  std::filesystem::path dataset;
  std::filesystem::path checkpoint_out;
  std::optional<std::filesystem::path> fine_tune_from;

  void validate() const;
  void store(KeyValues& kv) const;
  static TrainConfig load(const KeyValues& kv);
};

struct InitOptions {
  /// Extra factor on the weights (and spline coefficients) of the layer that
  /// emits beamformer entries, so the initial raw output lies inside the
  /// power budget. Outside it the budget projection is scale invariant and
  /// the transmit power receives no gradient.
  double output_gain = 0.02;
  /// beta = 1 on every KAN edge instead of He-normal. With beta = 1 all
  /// outputs of a KAN layer start as the same sum of SiLUs.
  bool unit_kan_base = false;
};

/// He (Kaiming) normal initialization: weights and KAN base weights beta
/// ~ N(0, 2 / fan_in), biases 0, spline scales gamma = 1, spline
/// coefficients ~ N(0, 0.1^2). The output layer's weights, betas and spline
/// coefficients are further scaled by options.output_gain. Deterministic in `seed`.
void he_init(model::ParameterSet& params, std::uint64_t seed, const InitOptions& options = {});

/// Negative batch-mean energy efficiency of the model's beamformers.
ad::Tensor loss(ad::Tape& tape, const model::Model& model, const sys::SystemConfig& system,
                std::span<const sys::ChannelSample* const> batch);

/// Bias-corrected Adam moments, one slot per parameter tensor.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::uint64_t step = 0;
};

struct AdamOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// One Adam update using the gradients currently stored on the parameters.
/// Parameters without a gradient are treated as having a zero gradient.
void adam_step(model::ParameterSet& params, AdamState& state, const AdamOptions& options);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_ee = 0.0;
  double wall_ms = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;  // 0 when no epoch ran
  double best_val_ee = 0.0;
};

/// Mean energy efficiency of the model over `samples` (inference only).
double mean_energy_efficiency(const model::Model& model, const sys::SystemConfig& system,
                              std::span<const sys::ChannelSample> samples);

/// Per-sample energy efficiency, in sample order.
std::vector<double> energy_efficiencies(const model::Model& model, const sys::SystemConfig& system,
                                        std::span<const sys::ChannelSample> samples);

/// The optimization loop shared by train() and fine_tune(): shuffled
/// mini-batches, Adam, validation EE after each epoch, and the model left
/// holding the parameters of the best validation epoch.
TrainResult run_epochs(model::Model& model, const sys::Dataset& data, const TrainConfig& config);

/// He-initializes the model from config.seed, then runs the loop.
TrainResult train(model::Model& model, const sys::Dataset& data, const TrainConfig& config);

/// Continues from the model's current parameters (e.g. a checkpoint trained
/// on another user count) for `epochs` epochs. Zero epochs leaves the model
/// untouched.
TrainResult fine_tune(model::Model& model, const sys::Dataset& data, const TrainConfig& config,
                      std::size_t epochs);

/// CSV with header `epoch,train_loss,val_ee,wall_ms`.
void write_log_csv(const TrainResult& result, const std::filesystem::path& path);

}  // namespace kfbf::train
