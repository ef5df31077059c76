#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmpose/error.h"

namespace cmpose {

using Shape = std::vector<int>;

std::int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major tensor of doubles. `grad`, when non-empty, has the same
// length as `data` and holds the accumulated adjoint.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    bool requires_grad = false;
    std::vector<double> grad;

    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0)
        : shape(std::move(s)), data(static_cast<size_t>(shape_numel(shape)), fill) {}

    static Tensor from(Shape s, std::vector<double> d) {
        Tensor t;
        t.shape = std::move(s);
        if (shape_numel(t.shape) != static_cast<std::int64_t>(d.size()))
            throw ShapeError("Tensor::from: " + shape_str(t.shape) + " vs " +
                             std::to_string(d.size()) + " values");
        t.data = std::move(d);
        return t;
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
    int ndim() const { return static_cast<int>(shape.size()); }

    // 2-d accessors
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols() + c]; }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    }
    void zero_grad() {
        if (!grad.empty()) std::fill(grad.begin(), grad.end(), 0.0);
    }

    bool all_finite() const;
};

bool same_shape(const Tensor& a, const Tensor& b);

}  // namespace cmpose
