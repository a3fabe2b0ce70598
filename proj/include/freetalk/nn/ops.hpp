#pragma once

#include <freetalk/nn/autograd.hpp>

#include <Eigen/SparseCore>

#include <vector>

namespace freetalk::nn {

// Differentiable primitives over 2-D matrices. Constant operands passed by
// reference (sparse operators, spectral bases) must outlive the tape.

Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);  // elementwise
Var scale(const Var& a, double s);
/// a (r x c) + row (1 x c) broadcast over rows.
Var add_row(const Var& a, const Var& row);
/// Adds a constant matrix of the same shape (attention masks).
Var add_const(const Var& a, const Mat& c);
/// Repeats a 1 x c row n times.
Var broadcast_rows(const Var& row, Eigen::Index n);

Var gelu(const Var& a);
Var relu(const Var& a);
Var tanh(const Var& a);

/// Row-wise layer normalization with learned gain/bias rows (1 x c).
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps = 1e-5);
Var softmax_rows(const Var& a);

Var transpose(const Var& a);
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Eigen::Index start, Eigen::Index count);
Var slice_rows(const Var& a, Eigen::Index start, Eigen::Index count);
Var gather_rows(const Var& table, const std::vector<int>& rows);

/// r x c -> 1 x (r c), row-major order.
Var flatten_row(const Var& a);
/// 1 x (r c) -> r x c, row-major order.
Var unflatten_row(const Var& a, Eigen::Index rows, Eigen::Index cols);

/// c * a for a constant left factor. `c` is referenced, not copied: it must
/// outlive the backward pass (mesh operators are shared this way).
Var left_multiply(const Mat& c, const Var& a);
Var left_multiply(const Eigen::SparseMatrix<double>& c, const Var& a);

/// Inverted dropout; identity unless the tape is in training mode with an rng.
Var dropout(const Var& a, double p);

Var sum(const Var& a);
Var mean(const Var& a);

/// Per-channel spectral heat diffusion used inside intrinsic blocks:
/// out = x + Phi ((1/(1 + t_c lambda) - 1) o (Phi^T M x)), with t (1 x C)
/// clamped at 0 from below.
Var spectral_diffusion(const Var& x, const Var& times, const Mat& basis, const Eigen::VectorXd& eigenvalues,
                       const Eigen::VectorXd& mass);

} // namespace freetalk::nn
