#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cdt/nn/array.hpp"
#include "cdt/random.hpp"

namespace cdt::nn {

// All ops take row-major 2-D arrays. Shape errors throw ShapeError naming
// the op and the offending shapes.

Var matmul(Tape& t, const Var& a, const Var& b);
// x w + b with the bias row broadcast; one node instead of matmul + add_bias.
Var linear(Tape& t, const Var& x, const Var& w, const Var& b);
Var add(Tape& t, const Var& a, const Var& b);
// x (n x m) + b (1 x m) broadcast over rows.
Var add_bias(Tape& t, const Var& x, const Var& bias);
Var mul(Tape& t, const Var& a, const Var& b);
Var scale(Tape& t, const Var& x, double s);
// a * x + b elementwise.
Var scale_shift(Tape& t, const Var& x, double a, double b);
Var sum(Tape& t, const Var& x);
Var mean(Tape& t, const Var& x);

Var tanh(Tape& t, const Var& x);
// GELU, tanh form: 0.5 x (1 + tanh(sqrt(2 / pi) (x + 0.044715 x^3))).
Var gelu(Tape& t, const Var& x);
Var softmax_rows(Tape& t, const Var& x);
// Row-wise normalization with affine parameters gamma, beta (1 x m). A
// constant row maps to beta.
Var layer_norm(Tape& t, const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
// Inverted dropout: survivors scaled by 1 / (1 - p). Identity when !train or
// p == 0. Drop decisions use 16-bit uniform draws, so the realized drop rate
// is p rounded to a multiple of 2^-16.
Var dropout(Tape& t, const Var& x, double p, bool train, Rng& rng);
// Rows of `table` selected by `indices`.
Var embedding(Tape& t, const Var& table, std::span<const std::size_t> indices);
Var gather_rows(Tape& t, const Var& x, std::span<const std::size_t> rows);
// Builds a (total_rows x D) array where row r of inputs[i] lands at
// positions[i][r]. Rows not covered stay zero.
Var assemble_rows(Tape& t, const std::vector<Var>& inputs,
                  const std::vector<std::vector<std::size_t>>& positions, std::size_t total_rows);

// Multi-head causal self-attention over `batch` sequences of length
// `seq_len` stacked row-wise. qkv holds [Q | K | V] (each D wide) per row.
// Keys with key_valid == 0 are never attended to; a query with no admissible
// key outputs zeros.
Var causal_attention(Tape& t, const Var& qkv, std::size_t batch, std::size_t seq_len,
                     std::size_t heads, std::span<const std::uint8_t> key_valid);

// Weighted mean over rows of the diagonal-Gaussian negative log-likelihood
// sum_j [ (a - mu)^2 / (2 sigma^2) + log sigma + 0.5 log(2 pi) ].
Var gaussian_nll(Tape& t, const Var& mean, const Var& log_std, const Matrix& target,
                 std::span<const double> row_weights);
// Weighted mean over rows of sum_j [ log sigma + 0.5 (1 + log(2 pi)) ].
Var gaussian_entropy(Tape& t, const Var& log_std, std::span<const double> row_weights);
// Weighted mean over rows and columns of (pred - target)^2.
Var mse(Tape& t, const Var& pred, const Matrix& target, std::span<const double> row_weights);

}  // namespace cdt::nn
