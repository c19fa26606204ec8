#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "kfbf/autodiff/ops.hpp"
#include "kfbf/model/config.hpp"
#include "kfbf/model/layers.hpp"
#include "kfbf/model/parameters.hpp"
#include "kfbf/sysmodel/system.hpp"

namespace kfbf::model {

/// A built model: configuration plus its parameter set for a fixed antenna
/// count. Encoder/decoder models accept any user count; the flat MLP
/// baseline is bound to `fixed_k`.
class Model {
 public:
  Model(ModelConfig config, std::size_t n_t, std::size_t fixed_k = 0);

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t n_t() const noexcept { return n_t_; }
  std::size_t fixed_k() const noexcept { return fixed_k_; }
  bool scalable() const noexcept { return config_.architecture == Architecture::kEncoderDecoder; }

  /// User count of the data the parameters were trained on (0 if unknown).
  /// Informational only; it is stored in checkpoints for reports.
  std::size_t trained_k() const noexcept { return trained_k_; }
  void set_trained_k(std::size_t k) noexcept { trained_k_ = k; }

  ParameterSet& parameters() noexcept { return params_; }
  const ParameterSet& parameters() const noexcept { return params_; }
  const ad::SplineGrid& grid() const noexcept { return grid_; }

  /// Raw decoder output F^(T+1), (B*K) x (2*N_T), before budget scaling.
  /// Throws ContractError on N_T mismatch, DimensionError when a flat MLP
  /// sees a K it was not built for.
  ad::Tensor decode(ad::Tape& tape, std::span<const sys::ChannelSample* const> samples) const;

  /// decode() followed by postprocessing: feasible real beamformer rows.
  ad::Tensor forward_rows(ad::Tape& tape, std::span<const sys::ChannelSample* const> samples,
                          double p_max) const;

  /// Inference without gradient recording.
  sys::BeamformingMatrix forward(const sys::ChannelSample& sample, double p_max) const;
  std::vector<sys::BeamformingMatrix> forward_batch(
      std::span<const sys::ChannelSample* const> samples, double p_max) const;

  TelWeights tel(std::size_t layer) const;
  GatWeights gat(std::size_t layer) const;
  KdlWeights kdl(std::size_t layer) const;
  std::vector<DenseWeights> dense(const char* prefix, std::size_t layers) const;

 private:
  void check_input(std::span<const sys::ChannelSample* const> samples) const;
  ad::Tensor plain_mlp_forward(ad::Tape& tape,
                               std::span<const sys::ChannelSample* const> samples) const;

  ModelConfig config_;
  std::size_t n_t_;
  std::size_t fixed_k_;
  std::size_t trained_k_ = 0;
  ad::SplineGrid grid_;
  ParameterSet params_;
};

/// Checkpoint file, little-endian:
///   "KFCK" | u32 version=1 | u32 param_count | u64 config_offset |
///   param_count manifest entries { u32 name_len | name | u64 rows | u64 cols | u64 offset } |
///   raw f64 parameter blocks |
///   at config_offset: u64 text_len | key=value text (model config, n_t, fixed_k, k_train)
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace kfbf::model
