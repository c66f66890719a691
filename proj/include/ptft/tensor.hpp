#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ptft {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Value type: copies are deep.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    static Tensor vector(std::initializer_list<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<double> values);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }

    // Rank-2 access. Rows/cols refer to the last two axes of a matrix.
    std::size_t rows() const { return shape_.at(0); }
    std::size_t cols() const { return shape_.at(1); }
    double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * shape_[1] + c]; }

    /// Row `r` over the last axis (rank >= 2 treated as [prod(leading) x last]).
    std::span<double> row(std::size_t r) noexcept;
    std::span<const double> row(std::size_t r) const noexcept;

    void fill(double value) noexcept;
    /// Same data, new shape of equal element count.
    Tensor reshaped(Shape shape) const;

    /// Throws NumericError naming `what` if any entry is NaN or infinite.
    void check_finite(std::string_view what) const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

}  // namespace ptft
