#pragma once

// Neural primitives with hand-written reverse-mode gradients.
//
// Forward functions are pure. Backward functions *accumulate* (+=) into the
// gradient tensors they are given, so a caller can sum contributions from
// several uses of the same parameter without extra buffers. Any gradient
// pointer may be null when that gradient is not needed.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ptft/tensor.hpp"

namespace ptft {

using TokenId = std::int32_t;

namespace ops {

inline constexpr double kLayerNormEps = 1e-12;

// --- probabilities and losses ---------------------------------------------

/// Max-subtracted softmax. Throws on empty input or non-finite entries.
std::vector<double> softmax(std::span<const double> x);
void softmax_inplace(std::span<double> x);
/// dx += y * (dy - <y, dy>), where y = softmax(x).
void softmax_backward(std::span<const double> y, std::span<const double> dy, std::span<double> dx);

double log_sum_exp(std::span<const double> x);

/// -log softmax(logits)[target], through log-sum-exp.
double cross_entropy(std::span<const double> logits, std::size_t target);
/// Same loss; also adds scale * (softmax(logits) - onehot(target)) into grad.
double cross_entropy_with_grad(std::span<const double> logits, std::size_t target, std::span<double> grad,
                               double scale = 1.0);

double mse(std::span<const double> pred, std::span<const double> target);
/// Adds scale * d mse / d pred into grad.
double mse_with_grad(std::span<const double> pred, std::span<const double> target, std::span<double> grad,
                     double scale = 1.0);

// --- dense algebra ---------------------------------------------------------

/// [m x k] * [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out, Tensor* grad_a, Tensor* grad_b);

/// x [m x k] * w [k x n] + bias [n]. bias may be null.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias);
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out, Tensor* grad_x, Tensor* grad_w,
                     Tensor* grad_bias);

// --- normalization and activation -----------------------------------------

struct LayerNormCache {
    Tensor normalized;             // (x - mean) * inv_std, same shape as x
    std::vector<double> inv_std;   // one per row
};

/// Normalizes each row of x [m x n] to zero mean / unit variance, then
/// applies gamma [n] and beta [n]. cache may be null.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = kLayerNormEps,
                  LayerNormCache* cache = nullptr);
void layer_norm_backward(const LayerNormCache& cache, const Tensor& gamma, const Tensor& grad_out, Tensor* grad_x,
                         Tensor* grad_gamma, Tensor* grad_beta);

/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
double gelu(double x) noexcept;
double gelu_derivative(double x) noexcept;
Tensor gelu(const Tensor& x);
void gelu_backward(const Tensor& x, const Tensor& grad_out, Tensor* grad_x);

// --- lookup ----------------------------------------------------------------

/// Rows of table [V x n] selected by ids -> [ids.size() x n]. Throws on id >= V.
Tensor embedding_lookup(const Tensor& table, std::span<const TokenId> ids);
void embedding_backward(std::span<const TokenId> ids, const Tensor& grad_out, Tensor& grad_table);

}  // namespace ops
}  // namespace ptft
