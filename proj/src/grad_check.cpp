#include "ptft/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "ptft/error.hpp"
#include "ptft/rng.hpp"

namespace ptft {
namespace {

double evaluate(const ScalarFunction& f, const Tensor& theta, Tensor* grad, const std::string& name) {
    const double value = f(theta, grad);
    if (!std::isfinite(value)) {
        throw NumericError("grad_check(" + name + "): function value is not finite");
    }
    return value;
}

}  // namespace

double relative_error(double analytic, double numeric) noexcept {
    const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / scale;
}

GradCheckReport grad_check(std::string name, const ScalarFunction& f, const Tensor& theta,
                           const GradCheckOptions& options) {
    GradCheckReport report;
    report.name = std::move(name);

    Tensor analytic{theta.shape()};
    evaluate(f, theta, &analytic, report.name);
    analytic.check_finite("grad_check(" + report.name + ") analytic gradient");

    std::vector<std::size_t> coords(theta.size());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (options.max_coordinates > 0 && options.max_coordinates < coords.size()) {
        Rng rng{options.seed};
        rng.shuffle(std::span<std::size_t>{coords});
        coords.resize(options.max_coordinates);
        std::sort(coords.begin(), coords.end());
    }

    Tensor probe = theta;
    for (std::size_t index : coords) {
        const double original = probe[index];
        probe[index] = original + options.step;
        const double up = evaluate(f, probe, nullptr, report.name);
        probe[index] = original - options.step;
        const double down = evaluate(f, probe, nullptr, report.name);
        probe[index] = original;

        const double numeric = (up - down) / (2.0 * options.step);
        const double err = relative_error(analytic[index], numeric);
        if (err > report.max_relative_error) {
            report.max_relative_error = err;
            report.worst_index = index;
        }
        ++report.coordinates_checked;
    }
    report.pass = report.max_relative_error < options.tolerance;
    return report;
}

}  // namespace ptft
