#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>

#include "ptft/tensor.hpp"

namespace ptft {

/// A scalar function of a parameter tensor. When `grad` is non-null the
/// function must also write (not accumulate) its reverse-mode gradient there;
/// `grad` arrives zero-filled with the shape of theta.
using ScalarFunction = std::function<double(const Tensor& theta, Tensor* grad)>;

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Coordinates compared per call; 0 or >= theta.size() checks all.
    std::size_t max_coordinates = 0;
    std::uint64_t seed = 0;
};

struct GradCheckReport {
    std::string name;
    double max_relative_error = 0.0;
    std::size_t worst_index = 0;
    std::size_t coordinates_checked = 0;
    bool pass = true;
};

/// |g_ad - g_fd| / max(|g_ad|, |g_fd|, 1e-8), the per-coordinate error measure.
double relative_error(double analytic, double numeric) noexcept;

/// Compares the analytic gradient of f at theta against central differences
/// (f(theta + h e_i) - f(theta - h e_i)) / 2h on a seeded coordinate subset.
/// Throws NumericError if f is non-finite anywhere it is evaluated.
GradCheckReport grad_check(std::string name, const ScalarFunction& f, const Tensor& theta,
                           const GradCheckOptions& options = {});

}  // namespace ptft
