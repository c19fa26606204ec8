#pragma once

#include <span>
#include <vector>

#include "kfbf/autodiff/tensor.hpp"

namespace kfbf::ad {

// Every operation takes the tape it records onto first. Shapes are checked
// eagerly and mismatches raise DimensionError naming both shapes.

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor transpose(Tape& tape, const Tensor& x);
/// Same row-major data viewed with a new shape of equal size.
Tensor reshape(Tape& tape, const Tensor& x, Shape shape);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
/// Elementwise (Hadamard) product.
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
/// Elementwise quotient.
Tensor div(Tape& tape, const Tensor& a, const Tensor& b);
/// x + bias, with bias 1xn added to every row.
Tensor add_row_broadcast(Tape& tape, const Tensor& x, const Tensor& bias);
/// out[i][j] = col[i] + row[j] for col mx1 and row 1xn.
Tensor outer_sum(Tape& tape, const Tensor& col, const Tensor& row);

Tensor scale(Tape& tape, const Tensor& x, double factor);
Tensor add_scalar(Tape& tape, const Tensor& x, double value);
Tensor square(Tape& tape, const Tensor& x);
/// Natural logarithm; non-positive entries raise NumericError.
Tensor log(Tape& tape, const Tensor& x);

Tensor relu(Tape& tape, const Tensor& x);
Tensor leaky_relu(Tape& tape, const Tensor& x, double slope);
/// x * sigmoid(x).
Tensor silu(Tape& tape, const Tensor& x);

/// Row-wise softmax with max subtraction. NaN input raises NumericError.
Tensor softmax_rows(Tape& tape, const Tensor& x);
/// Row-wise (x - mean) / sqrt(var + eps), population variance, no affine.
Tensor layernorm_rows(Tape& tape, const Tensor& x, double eps = 1e-5);

Tensor concat_columns(Tape& tape, const std::vector<Tensor>& parts);
Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts);
/// Sub-block [r0, r1) x [c0, c1).
Tensor slice(Tape& tape, const Tensor& x, std::size_t r0, std::size_t r1, std::size_t c0,
             std::size_t c1);
Tensor slice_columns(Tape& tape, const Tensor& x, std::size_t c0, std::size_t c1);
Tensor slice_rows(Tape& tape, const Tensor& x, std::size_t r0, std::size_t r1);

Tensor reduce_sum(Tape& tape, const Tensor& x);
Tensor reduce_mean(Tape& tape, const Tensor& x);
/// Per-row sum, mxn -> mx1.
Tensor sum_rows(Tape& tape, const Tensor& x);
/// Main diagonal of a square matrix as an nx1 column.
Tensor diag(Tape& tape, const Tensor& x);

/// Fixed spline grid shared by every edge of a KAN layer.
struct SplineGrid {
  std::vector<double> knots;  // extended knot vector
  int degree = 3;
  double lo = -2.0;
  double hi = 2.0;

  std::size_t basis_count() const { return knots.size() - static_cast<std::size_t>(degree) - 1; }

  /// Uniform grid on [lo, hi] extended by `degree` knots on each side so that
  /// exactly `basis_count` B-splines are defined.
  static SplineGrid uniform(double lo, double hi, std::size_t basis_count, int degree);
};

/// One Kolmogorov-Arnold layer over the rows of x (R x F_in):
///   out[r][j] = sum_i beta[j][i] * silu(x[r][i])
///             + gamma[j][i] * sum_p coef[j][i*P + p] * B_p(clamp(x[r][i]))
/// beta, gamma are F_out x F_in; coef is F_out x (F_in * P). Inputs outside
/// [grid.lo, grid.hi] are clamped for the spline branch, whose derivative is
/// zero there.
Tensor kan_layer(Tape& tape, const Tensor& x, const Tensor& beta, const Tensor& gamma,
                 const Tensor& coef, const SplineGrid& grid);

/// Splits the rows of x into consecutive blocks of `block_rows` rows and
/// multiplies each block by sqrt(p_max / max(p_max, ||block||_F^2)).
Tensor scale_blocks_to_budget(Tape& tape, const Tensor& x, std::size_t block_rows, double p_max);

}  // namespace kfbf::ad
