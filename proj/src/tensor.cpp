#include "lgode/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lgode {

std::string Shape::str() const { return std::to_string(rows) + "x" + std::to_string(cols); }

Tensor::Tensor(Shape shape, double fill) : shape_(shape), values_(shape.size(), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(shape), values_(std::move(values)) {
    if (values_.size() != shape_.size()) {
        throw std::invalid_argument("Tensor: shape " + shape_.str() + " needs " + std::to_string(shape_.size()) +
                                    " values, got " + std::to_string(values_.size()));
    }
}

Tensor Tensor::scalar(double v) { return Tensor({1, 1}, std::vector<double>{v}); }

Tensor Tensor::row(std::vector<double> values) {
    const Shape s{1, values.size()};
    return Tensor(s, std::move(values));
}

Tensor Tensor::column(std::vector<double> values) {
    const Shape s{values.size(), 1};
    return Tensor(s, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t({n, n});
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

double Tensor::item() const {
    if (values_.size() != 1) throw std::invalid_argument("Tensor::item on shape " + shape_.str());
    return values_[0];
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) {
        throw std::invalid_argument("max_abs_diff: " + a.shape().str() + " vs " + b.shape().str());
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace lgode
