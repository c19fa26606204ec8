#include "kfbf/model/layers.hpp"

#include <cmath>
#include <string>

#include "kfbf/error.hpp"

namespace kfbf::model {
namespace {

std::size_t block_count(const ad::Tensor& h, std::size_t users) {
  if (users == 0 || h.rows() % users != 0) {
    throw DimensionError("activation " + h.shape().str() + " is not a stack of " +
                         std::to_string(users) + "-user blocks");
  }
  return h.rows() / users;
}

ad::Tensor join_rows(ad::Tape& tape, const std::vector<ad::Tensor>& parts) {
  return parts.size() == 1 ? parts.front() : ad::concat_rows(tape, parts);
}

ad::Tensor join_columns(ad::Tape& tape, const std::vector<ad::Tensor>& parts) {
  return parts.size() == 1 ? parts.front() : ad::concat_columns(tape, parts);
}

}  // namespace

ad::Tensor channel_rows(std::span<const sys::ChannelSample* const> samples) {
  if (samples.empty()) throw ContractError("empty sample batch");
  const std::size_t k = samples.front()->k, n_t = samples.front()->n_t;
  std::vector<double> rows;
  rows.reserve(samples.size() * k * 2 * n_t);
  for (const auto* s : samples) {
    if (s->k != k || s->n_t != n_t) throw DimensionError("batch mixes sample shapes");
    for (std::size_t u = 0; u < k; ++u) {
      for (std::size_t n = 0; n < n_t; ++n) rows.push_back(s->at(u, n).real());
      for (std::size_t n = 0; n < n_t; ++n) rows.push_back(s->at(u, n).imag());
    }
  }
  return ad::Tensor::from({samples.size() * k, 2 * n_t}, std::move(rows));
}

ad::Tensor preprocess(ad::Tape& tape, std::span<const sys::ChannelSample* const> samples,
                      const ad::Tensor& w0) {
  return ad::matmul(tape, channel_rows(samples), w0);
}

ad::Tensor tel_forward(ad::Tape& tape, const ad::Tensor& h, const TelWeights& weights,
                       std::size_t users, bool conventional_residual) {
  const std::size_t blocks = block_count(h, users);
  const std::size_t d = h.cols();
  const std::size_t heads = weights.heads;
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("tel_forward: width " + std::to_string(d) + " not divisible by " +
                         std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d));

  const auto q = ad::matmul(tape, h, weights.w_q);
  const auto k = ad::matmul(tape, h, weights.w_k);
  const auto v = ad::matmul(tape, h, weights.w_v);

  std::vector<ad::Tensor> per_sample;
  per_sample.reserve(blocks);
  std::vector<ad::Tensor> per_head(heads);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t r0 = b * users, r1 = r0 + users;
    for (std::size_t m = 0; m < heads; ++m) {
      const std::size_t c0 = m * dh, c1 = c0 + dh;
      const auto qb = ad::slice(tape, q, r0, r1, c0, c1);
      const auto kb = ad::slice(tape, k, r0, r1, c0, c1);
      const auto vb = ad::slice(tape, v, r0, r1, c0, c1);
      const auto scores = ad::scale(tape, ad::matmul(tape, qb, ad::transpose(tape, kb)), inv_scale);
      per_head[m] = ad::matmul(tape, ad::softmax_rows(tape, scores), vb);
    }
    per_sample.push_back(join_columns(tape, per_head));
  }
  const auto h_ma = ad::matmul(tape, join_rows(tape, per_sample), weights.w_ma);
  const auto h_att = ad::add(tape, ad::layernorm_rows(tape, h_ma), h);

  const auto hidden = ad::relu(tape, ad::matmul(tape, h_att, weights.w_1));
  const auto h_ff = ad::matmul(tape, hidden, weights.w_2);
  return ad::add(tape, ad::layernorm_rows(tape, h_ff), conventional_residual ? h_att : h_ff);
}

ad::Tensor gat_encoder_forward(ad::Tape& tape, const ad::Tensor& h, const GatWeights& weights,
                               std::size_t users) {
  const std::size_t blocks = block_count(h, users);
  const std::size_t d = weights.w.cols();
  const std::size_t heads = weights.heads;
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("gat_encoder_forward: width " + std::to_string(d) +
                         " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;
  const auto z = ad::matmul(tape, h, weights.w);

  // Per-head source/destination score halves for every row at once.
  std::vector<ad::Tensor> z_head(heads), src(heads), dst(heads);
  for (std::size_t m = 0; m < heads; ++m) {
    z_head[m] = ad::slice_columns(tape, z, m * dh, (m + 1) * dh);
    const auto a_s = ad::transpose(tape, ad::slice_rows(tape, weights.a_src, m, m + 1));
    const auto a_d = ad::transpose(tape, ad::slice_rows(tape, weights.a_dst, m, m + 1));
    src[m] = ad::matmul(tape, z_head[m], a_s);
    dst[m] = ad::matmul(tape, z_head[m], a_d);
  }

  std::vector<ad::Tensor> per_sample;
  per_sample.reserve(blocks);
  std::vector<ad::Tensor> per_head(heads);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t r0 = b * users, r1 = r0 + users;
    for (std::size_t m = 0; m < heads; ++m) {
      const auto s = ad::slice_rows(tape, src[m], r0, r1);
      const auto t = ad::transpose(tape, ad::slice_rows(tape, dst[m], r0, r1));
      const auto e = ad::leaky_relu(tape, ad::outer_sum(tape, s, t), weights.slope);
      per_head[m] = ad::matmul(tape, ad::softmax_rows(tape, e), ad::slice_rows(tape, z_head[m], r0, r1));
    }
    per_sample.push_back(join_columns(tape, per_head));
  }
  return join_rows(tape, per_sample);
}

ad::Tensor kdl_forward(ad::Tape& tape, const ad::Tensor& f, const KdlWeights& weights,
                       const ad::SplineGrid& grid) {
  return ad::kan_layer(tape, f, weights.beta, weights.gamma, weights.coef, grid);
}

ad::Tensor mlp_forward(ad::Tape& tape, const ad::Tensor& x, std::span<const DenseWeights> layers) {
  ad::Tensor out = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out = ad::add_row_broadcast(tape, ad::matmul(tape, out, layers[i].w), layers[i].b);
    if (i + 1 < layers.size()) out = ad::relu(tape, out);
  }
  return out;
}

ad::Tensor postprocess_rows(ad::Tape& tape, const ad::Tensor& f_out, std::size_t users,
                            double p_max) {
  if (f_out.cols() % 2 != 0) {
    throw DimensionError("postprocess: " + f_out.shape().str() +
                         " has an odd column count, expected 2*N_T");
  }
  return ad::scale_blocks_to_budget(tape, f_out, users, p_max);
}

std::vector<sys::BeamformingMatrix> to_beamformers(const ad::Tensor& rows, std::size_t users,
                                                   std::size_t n_t) {
  if (rows.cols() != 2 * n_t) {
    throw DimensionError("beamformer rows " + rows.shape().str() + " for n_t=" +
                         std::to_string(n_t));
  }
  const std::size_t blocks = block_count(rows, users);
  const std::size_t len = users * 2 * n_t;
  std::vector<sys::BeamformingMatrix> out;
  out.reserve(blocks);
  for (std::size_t b = 0; b < blocks; ++b)
    out.push_back(sys::from_real_rows(rows.data().subspan(b * len, len), users, n_t));
  return out;
}

}  // namespace kfbf::model
