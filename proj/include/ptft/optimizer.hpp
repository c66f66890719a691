#pragma once

#include <cstddef>
#include <string_view>

#include "ptft/model.hpp"

namespace ptft {

struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

/// Biases and layer-norm parameters are exempt from weight decay.
bool applies_weight_decay(std::string_view name) noexcept;

/// Adam with decoupled weight decay: p -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * p).
class AdamW {
public:
    AdamW(const Parameters& layout, AdamWConfig config);

    void step(Parameters& params, const Parameters& grads, double learning_rate);
    std::size_t steps_taken() const noexcept { return steps_; }

private:
    AdamWConfig config_;
    Parameters m_;
    Parameters v_;
    std::size_t steps_ = 0;
};

/// Rescales grads so their global L2 norm is at most max_norm (no-op when
/// max_norm <= 0). Returns the norm before clipping.
double clip_grad_norm(Parameters& grads, double max_norm);

/// Linear ramp from 0 over warmup_steps, then constant. `step` is 1-based.
double scheduled_learning_rate(double base, std::size_t warmup_steps, std::size_t step) noexcept;

}  // namespace ptft
