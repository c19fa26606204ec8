#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "kfbf/key_values.hpp"

namespace kfbf::model {

enum class Architecture { kEncoderDecoder, kPlainMlp };
enum class EncoderKind { kTransformer, kGat };
enum class DecoderKind { kKan, kMlp };

std::string to_string(Architecture a);
std::string to_string(EncoderKind e);
std::string to_string(DecoderKind d);
EncoderKind parse_encoder(const std::string& s);
DecoderKind parse_decoder(const std::string& s);

/// Hyperparameters of an encoder/decoder model (or of the flat MLP baseline).
/// Defaults are the desk-scale KANsformer.
struct ModelConfig {
  Architecture architecture = Architecture::kEncoderDecoder;
  EncoderKind encoder = EncoderKind::kTransformer;
  DecoderKind decoder = DecoderKind::kKan;

  std::size_t d = 64;      // embedding width D
  std::size_t d_ff = 128;  // position-wise feed-forward width D'
  std::size_t l_layers = 2;
  std::size_t t_layers = 2;
  std::vector<std::size_t> heads = {4, 4};        // one entry per encoder layer
  std::vector<std::size_t> kan_hidden_dims = {64};  // decoder widths F(2..T)

  std::size_t spline_count = 8;  // B-spline coefficients per KAN edge
  int spline_degree = 3;
  double grid_lo = -2.0;
  double grid_hi = 2.0;

  /// Encoder layer output adds the attention-block output instead of the
  /// feed-forward output to LayerNorm(H_FF).
  bool conventional_residual = false;
  double leaky_slope = 0.2;  // GAT attention scores

  std::vector<std::size_t> mlp_hidden = {256, 256};  // flat MLP baseline

  /// Throws ContractError on inconsistent settings.
  void validate() const;

  void store(KeyValues& kv) const;
  /// Reads keys written by store(); absent keys keep the defaults.
  static ModelConfig load(const KeyValues& kv);
};

}  // namespace kfbf::model
