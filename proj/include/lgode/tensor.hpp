#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace lgode {

/// Extents of a rank-2 row-major array. Scalars are 1x1, vectors are 1xn.
struct Shape {
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const { return rows * cols; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

/// Dense float64 matrix with value semantics.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor row(std::vector<double> values);
    static Tensor column(std::vector<double> values);
    static Tensor identity(std::size_t n);

    const Shape& shape() const { return shape_; }
    std::size_t rows() const { return shape_.rows; }
    std::size_t cols() const { return shape_.cols; }
    std::size_t size() const { return values_.size(); }
    bool empty() const { return values_.empty(); }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::vector<double>& storage() { return values_; }
    const std::vector<double>& storage() const { return values_; }

    double& operator()(std::size_t r, std::size_t c) { return values_[r * shape_.cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * shape_.cols + c]; }
    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }

    std::span<double> row_span(std::size_t r) { return {values_.data() + r * shape_.cols, shape_.cols}; }
    std::span<const double> row_span(std::size_t r) const {
        return {values_.data() + r * shape_.cols, shape_.cols};
    }

    /// Value of a 1x1 tensor.
    double item() const;
    void fill(double v);
    bool all_finite() const;

private:
    Shape shape_{};
    std::vector<double> values_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace lgode
