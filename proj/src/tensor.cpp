#include "ptft/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "ptft/error.hpp"

namespace ptft {

std::size_t shape_size(const Shape& shape) noexcept {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i > 0) {
            out += " x ";
        }
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_{std::move(shape)}, data_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_{std::move(shape)}, data_{std::move(data)} {
    if (data_.size() != shape_size(shape_)) {
        throw ShapeError("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
    }
}

Tensor Tensor::vector(std::initializer_list<double> values) {
    return Tensor{Shape{values.size()}, std::vector<double>(values)};
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values) {
    return Tensor{Shape{rows, cols}, std::vector<double>(values)};
}

std::span<double> Tensor::row(std::size_t r) noexcept {
    const std::size_t width = shape_.back();
    return std::span<double>{data_}.subspan(r * width, width);
}

std::span<const double> Tensor::row(std::size_t r) const noexcept {
    const std::size_t width = shape_.back();
    return std::span<const double>{data_}.subspan(r * width, width);
}

void Tensor::fill(double value) noexcept { std::fill(data_.begin(), data_.end(), value); }

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
        throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor{std::move(shape), data_};
}

void Tensor::check_finite(std::string_view what) const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i])) {
            throw NumericError(std::string{what} + ": non-finite value at flat index " + std::to_string(i));
        }
    }
}

}  // namespace ptft
