#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dclp {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. Model parameters carry requires_grad and
/// receive accumulated gradients in `grad`; intermediate values live in a Graph.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;  // empty when absent

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0);
    Tensor(Shape s, std::vector<double> values);

    static Tensor zeros(Shape s) { return Tensor(std::move(s)); }
    static Tensor scalar(double v) { return Tensor(Shape{1}, std::vector<double>{v}); }
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
        return Tensor(Shape{rows, cols}, std::move(values));
    }

    std::size_t size() const noexcept { return data.size(); }
    std::size_t rank() const noexcept { return shape.size(); }

    // 2-D views: a rank-1 tensor is treated as a single row.
    std::size_t rows() const noexcept;
    std::size_t cols() const noexcept;
    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    void zero_grad() { grad.assign(data.size(), 0.0); }
    bool all_finite() const noexcept;
};

}  // namespace dclp
