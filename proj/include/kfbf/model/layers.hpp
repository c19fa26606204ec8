#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "kfbf/autodiff/ops.hpp"
#include "kfbf/sysmodel/system.hpp"

namespace kfbf::model {

// All layer functions operate on a stack of B samples with the same user
// count K: row b*K + u of every activation belongs to user u of sample b.
// Row-wise maps treat the stack as one matrix; attention mixes rows only
// within a sample block.

/// One transformer encoder layer. Q/K/V projections are D x D with head m
/// owning columns [m*D/M, (m+1)*D/M).
struct TelWeights {
  ad::Tensor w_q, w_k, w_v;
  ad::Tensor w_ma;  // D x D output projection of the concatenated heads
  ad::Tensor w_1;   // D x D'
  ad::Tensor w_2;   // D' x D
  std::size_t heads = 1;
};

/// One graph-attention layer over the fully connected user graph. `w` is
/// D x D (head m owns a column block); a_src / a_dst are M x (D/M).
struct GatWeights {
  ad::Tensor w;
  ad::Tensor a_src;
  ad::Tensor a_dst;
  std::size_t heads = 1;
  double slope = 0.2;
};

/// One KAN layer: beta, gamma F_out x F_in; coef F_out x (F_in * P).
struct KdlWeights {
  ad::Tensor beta, gamma, coef;
};

struct DenseWeights {
  ad::Tensor w;  // in x out
  ad::Tensor b;  // 1 x out
};

/// Constant (B*K) x (2*N_T) matrix of [Re(h_u), Im(h_u)] rows.
ad::Tensor channel_rows(std::span<const sys::ChannelSample* const> samples);

/// [Re(h_u), Im(h_u)] * W_0 for every user row.
ad::Tensor preprocess(ad::Tape& tape, std::span<const sys::ChannelSample* const> samples,
                      const ad::Tensor& w0);

/// Multi-head self-attention (scores scaled by sqrt(D)), head concat and
/// projection, LayerNorm + residual, ReLU feed-forward, and the output
/// LayerNorm(H_FF) + H_FF (or + attention block when conventional_residual).
ad::Tensor tel_forward(ad::Tape& tape, const ad::Tensor& h, const TelWeights& weights,
                       std::size_t users, bool conventional_residual = false);

/// Per head: e[u][i] = LeakyReLU(a_src . W x_u + a_dst . W x_i), softmax
/// over i, node update sum_i alpha[u][i] W x_i; heads concatenated.
ad::Tensor gat_encoder_forward(ad::Tape& tape, const ad::Tensor& h, const GatWeights& weights,
                               std::size_t users);

/// out[r][j] = sum_i beta_ji silu(x_ri) + gamma_ji Spline_ji(x_ri).
ad::Tensor kdl_forward(ad::Tape& tape, const ad::Tensor& f, const KdlWeights& weights,
                       const ad::SplineGrid& grid);

/// Row-shared dense stack, ReLU between layers and none after the last.
ad::Tensor mlp_forward(ad::Tape& tape, const ad::Tensor& x, std::span<const DenseWeights> layers);

/// Splits the real rows into complex beamformers per sample block and scales
/// each block onto the power budget.
ad::Tensor postprocess_rows(ad::Tape& tape, const ad::Tensor& f_out, std::size_t users,
                            double p_max);

/// Converts a (B*K) x (2*N_T) real stack into B beamforming matrices.
std::vector<sys::BeamformingMatrix> to_beamformers(const ad::Tensor& rows, std::size_t users,
                                                   std::size_t n_t);

}  // namespace kfbf::model
