#include "ptft/optimizer.hpp"

#include <cmath>

#include "ptft/error.hpp"

namespace ptft {

bool applies_weight_decay(std::string_view name) noexcept {
    return !(name.ends_with(".bias") || name.ends_with(".gamma") || name.ends_with(".beta"));
}

AdamW::AdamW(const Parameters& layout, AdamWConfig config)
    : config_{config}, m_{layout.zeros_like()}, v_{layout.zeros_like()} {}

void AdamW::step(Parameters& params, const Parameters& grads, double learning_rate) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
        throw InvariantError("AdamW: parameter layout changed between steps");
    }
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double correction1 = 1.0 - std::pow(config_.beta1, t);
    const double correction2 = 1.0 - std::pow(config_.beta2, t);
    auto& p_entries = params.entries();
    const auto& g_entries = grads.entries();
    for (std::size_t k = 0; k < p_entries.size(); ++k) {
        auto& [name, p] = p_entries[k];
        const Tensor& g = g_entries[k].second;
        Tensor& m = m_.entries()[k].second;
        Tensor& v = v_.entries()[k].second;
        if (g.size() != p.size() || m.size() != p.size()) {
            throw InvariantError("AdamW: shape mismatch for '" + name + "'");
        }
        const double decay = applies_weight_decay(name) ? config_.weight_decay : 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
            v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
            const double m_hat = m[i] / correction1;
            const double v_hat = v[i] / correction2;
            p[i] -= learning_rate * (m_hat / (std::sqrt(v_hat) + config_.eps) + decay * p[i]);
        }
    }
}

double clip_grad_norm(Parameters& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& [name, g] : grads.entries()) {
        for (double x : g.values()) {
            sq += x * x;
        }
    }
    const double norm = std::sqrt(sq);
    if (!std::isfinite(norm)) {
        throw NumericError("gradient norm is not finite");
    }
    if (max_norm > 0.0 && norm > max_norm) {
        const double scale = max_norm / (norm + 1e-6);
        for (auto& [name, g] : grads.entries()) {
            for (double& x : g.values()) {
                x *= scale;
            }
        }
    }
    return norm;
}

double scheduled_learning_rate(double base, std::size_t warmup_steps, std::size_t step) noexcept {
    if (warmup_steps == 0 || step >= warmup_steps) {
        return base;
    }
    return base * static_cast<double>(step) / static_cast<double>(warmup_steps);
}

}  // namespace ptft
