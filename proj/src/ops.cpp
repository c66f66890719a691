#include "ptft/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "ptft/error.hpp"

namespace ptft::ops {
namespace {

void require_finite(std::span<const double> x, const char* what) {
    for (double v : x) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string{what} + ": non-finite input");
        }
    }
}

void require_rank2(const Tensor& t, const char* what) {
    if (t.rank() != 2) {
        throw ShapeError(std::string{what} + ": expected a matrix, got " + shape_string(t.shape()));
    }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (a.shape() != b.shape()) {
        throw ShapeError(std::string{what} + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    }
}

constexpr double kGeluScale = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluCubic = 0.044715;

}  // namespace

std::vector<double> softmax(std::span<const double> x) {
    std::vector<double> out(x.begin(), x.end());
    softmax_inplace(out);
    return out;
}

void softmax_inplace(std::span<double> x) {
    if (x.empty()) {
        throw ShapeError("softmax: empty vector");
    }
    require_finite(x, "softmax");
    const double peak = *std::max_element(x.begin(), x.end());
    double total = 0.0;
    for (double& v : x) {
        v = std::exp(v - peak);
        total += v;
    }
    for (double& v : x) {
        v /= total;
    }
}

void softmax_backward(std::span<const double> y, std::span<const double> dy, std::span<double> dx) {
    double dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        dot += y[i] * dy[i];
    }
    for (std::size_t i = 0; i < y.size(); ++i) {
        dx[i] += y[i] * (dy[i] - dot);
    }
}

double log_sum_exp(std::span<const double> x) {
    if (x.empty()) {
        throw ShapeError("log_sum_exp: empty vector");
    }
    require_finite(x, "log_sum_exp");
    const double peak = *std::max_element(x.begin(), x.end());
    double total = 0.0;
    for (double v : x) {
        total += std::exp(v - peak);
    }
    return peak + std::log(total);
}

double cross_entropy(std::span<const double> logits, std::size_t target) {
    if (target >= logits.size()) {
        throw Error("cross_entropy: target " + std::to_string(target) + " out of range for " +
                    std::to_string(logits.size()) + " classes");
    }
    require_finite(logits, "cross_entropy");
    // Peak-relative form: uniform logits give exactly log(K).
    const double peak = *std::max_element(logits.begin(), logits.end());
    double total = 0.0;
    for (double v : logits) {
        total += std::exp(v - peak);
    }
    return (peak - logits[target]) + std::log(total);
}

double cross_entropy_with_grad(std::span<const double> logits, std::size_t target, std::span<double> grad,
                               double scale) {
    const double loss = cross_entropy(logits, target);
    const double lse = log_sum_exp(logits);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        grad[i] += scale * std::exp(logits[i] - lse);
    }
    grad[target] -= scale;
    return loss;
}

double mse(std::span<const double> pred, std::span<const double> target) {
    if (pred.size() != target.size()) {
        throw ShapeError("mse: length mismatch " + std::to_string(pred.size()) + " vs " +
                         std::to_string(target.size()));
    }
    if (pred.empty()) {
        throw ShapeError("mse: empty input");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        total += d * d;
    }
    return total / static_cast<double>(pred.size());
}

double mse_with_grad(std::span<const double> pred, std::span<const double> target, std::span<double> grad,
                     double scale) {
    const double loss = mse(pred, target);
    const double factor = 2.0 * scale / static_cast<double>(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) {
        grad[i] += factor * (pred[i] - target[i]);
    }
    return loss;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + shape_string(a.shape()) + " * " + shape_string(b.shape()));
    }
    const std::size_t m = a.rows();
    const std::size_t k = a.cols();
    const std::size_t n = b.cols();
    Tensor c{Shape{m, n}};
    for (std::size_t i = 0; i < m; ++i) {
        double* out = c.data() + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a(i, p);
            const double* brow = b.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) {
                out[j] += av * brow[j];
            }
        }
    }
    return c;
}

void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& grad_out, Tensor* grad_a, Tensor* grad_b) {
    const std::size_t m = a.rows();
    const std::size_t k = a.cols();
    const std::size_t n = b.cols();
    if (grad_out.rows() != m || grad_out.cols() != n) {
        throw ShapeError("matmul_backward: gradient shape " + shape_string(grad_out.shape()));
    }
    if (grad_a != nullptr) {
        // dA = dC * B^T
        for (std::size_t i = 0; i < m; ++i) {
            const double* g = grad_out.data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double* brow = b.data() + p * n;
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    acc += g[j] * brow[j];
                }
                (*grad_a)(i, p) += acc;
            }
        }
    }
    if (grad_b != nullptr) {
        // dB = A^T * dC
        for (std::size_t i = 0; i < m; ++i) {
            const double* g = grad_out.data() + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = a(i, p);
                double* out = grad_b->data() + p * n;
                for (std::size_t j = 0; j < n; ++j) {
                    out[j] += av * g[j];
                }
            }
        }
    }
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor* bias) {
    Tensor y = matmul(x, w);
    if (bias != nullptr) {
        if (bias->size() != w.cols()) {
            throw ShapeError("linear: bias " + shape_string(bias->shape()) + " for weight " +
                             shape_string(w.shape()));
        }
        for (std::size_t i = 0; i < y.rows(); ++i) {
            auto r = y.row(i);
            for (std::size_t j = 0; j < r.size(); ++j) {
                r[j] += (*bias)[j];
            }
        }
    }
    return y;
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& grad_out, Tensor* grad_x, Tensor* grad_w,
                     Tensor* grad_bias) {
    matmul_backward(x, w, grad_out, grad_x, grad_w);
    if (grad_bias != nullptr) {
        for (std::size_t i = 0; i < grad_out.rows(); ++i) {
            auto g = grad_out.row(i);
            for (std::size_t j = 0; j < g.size(); ++j) {
                (*grad_bias)[j] += g[j];
            }
        }
    }
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps, LayerNormCache* cache) {
    require_rank2(x, "layer_norm");
    const std::size_t m = x.rows();
    const std::size_t n = x.cols();
    if (gamma.size() != n || beta.size() != n) {
        throw ShapeError("layer_norm: scale/shift length does not match width " + std::to_string(n));
    }
    Tensor y{x.shape()};
    Tensor normalized{x.shape()};
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        auto in = x.row(i);
        double mean = 0.0;
        for (double v : in) {
            mean += v;
        }
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (double v : in) {
            var += (v - mean) * (v - mean);
        }
        var /= static_cast<double>(n);
        const double rstd = 1.0 / std::sqrt(var + eps);
        inv_std[i] = rstd;
        auto xhat = normalized.row(i);
        auto out = y.row(i);
        for (std::size_t j = 0; j < n; ++j) {
            xhat[j] = (in[j] - mean) * rstd;
            out[j] = gamma[j] * xhat[j] + beta[j];
        }
    }
    if (cache != nullptr) {
        cache->normalized = std::move(normalized);
        cache->inv_std = std::move(inv_std);
    }
    return y;
}

void layer_norm_backward(const LayerNormCache& cache, const Tensor& gamma, const Tensor& grad_out, Tensor* grad_x,
                         Tensor* grad_gamma, Tensor* grad_beta) {
    const std::size_t m = cache.normalized.rows();
    const std::size_t n = cache.normalized.cols();
    std::vector<double> dxhat(n);
    for (std::size_t i = 0; i < m; ++i) {
        auto g = grad_out.row(i);
        auto xhat = cache.normalized.row(i);
        if (grad_gamma != nullptr) {
            for (std::size_t j = 0; j < n; ++j) {
                (*grad_gamma)[j] += g[j] * xhat[j];
            }
        }
        if (grad_beta != nullptr) {
            for (std::size_t j = 0; j < n; ++j) {
                (*grad_beta)[j] += g[j];
            }
        }
        if (grad_x == nullptr) {
            continue;
        }
        double mean_d = 0.0;
        double mean_dx = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            dxhat[j] = g[j] * gamma[j];
            mean_d += dxhat[j];
            mean_dx += dxhat[j] * xhat[j];
        }
        mean_d /= static_cast<double>(n);
        mean_dx /= static_cast<double>(n);
        auto out = grad_x->row(i);
        const double rstd = cache.inv_std[i];
        for (std::size_t j = 0; j < n; ++j) {
            out[j] += rstd * (dxhat[j] - mean_d - xhat[j] * mean_dx);
        }
    }
}

double gelu(double x) noexcept {
    const double inner = kGeluScale * (x + kGeluCubic * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(inner));
}

double gelu_derivative(double x) noexcept {
    const double inner = kGeluScale * (x + kGeluCubic * x * x * x);
    const double t = std::tanh(inner);
    const double dinner = kGeluScale * (1.0 + 3.0 * kGeluCubic * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * dinner;
}

Tensor gelu(const Tensor& x) {
    Tensor y{x.shape()};
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = gelu(x[i]);
    }
    return y;
}

void gelu_backward(const Tensor& x, const Tensor& grad_out, Tensor* grad_x) {
    require_same_shape(x, grad_out, "gelu_backward");
    for (std::size_t i = 0; i < x.size(); ++i) {
        (*grad_x)[i] += grad_out[i] * gelu_derivative(x[i]);
    }
}

Tensor embedding_lookup(const Tensor& table, std::span<const TokenId> ids) {
    require_rank2(table, "embedding_lookup");
    const std::size_t width = table.cols();
    Tensor out{Shape{ids.size(), width}};
    for (std::size_t t = 0; t < ids.size(); ++t) {
        if (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= table.rows()) {
            throw Error("embedding_lookup: id " + std::to_string(ids[t]) + " out of range for table of " +
                        std::to_string(table.rows()) + " rows");
        }
        auto src = table.row(static_cast<std::size_t>(ids[t]));
        std::copy(src.begin(), src.end(), out.row(t).begin());
    }
    return out;
}

void embedding_backward(std::span<const TokenId> ids, const Tensor& grad_out, Tensor& grad_table) {
    for (std::size_t t = 0; t < ids.size(); ++t) {
        auto g = grad_out.row(t);
        auto dst = grad_table.row(static_cast<std::size_t>(ids[t]));
        for (std::size_t j = 0; j < g.size(); ++j) {
            dst[j] += g[j];
        }
    }
}

}  // namespace ptft::ops
