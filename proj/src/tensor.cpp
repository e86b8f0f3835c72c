#include "dclp/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "dclp/error.hpp"

namespace dclp {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape s, double fill) : shape(std::move(s)), data(shape_size(shape), fill) {}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (shape_size(shape) != data.size()) {
        throw ShapeError("shape " + shape_string(shape) + " does not hold " + std::to_string(data.size()) +
                         " values");
    }
}

std::size_t Tensor::rows() const noexcept {
    if (shape.size() < 2) return 1;
    return data.size() / shape.back();
}

std::size_t Tensor::cols() const noexcept { return shape.empty() ? 1 : shape.back(); }

bool Tensor::all_finite() const noexcept {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace dclp
