#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "setchoice/common.hpp"

namespace setchoice {

// Dense row-major matrix of doubles. Deliberately minimal: the numeric work
// happens in kern::, this is just owned storage with bounds-checked shape.
struct Matrix {
    size_t rows = 0;
    size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(size_t r, size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(size_t r, size_t c) { return data[r * cols + c]; }
    double operator()(size_t r, size_t c) const { return data[r * cols + c]; }

    double* row(size_t r) { return data.data() + r * cols; }
    const double* row(size_t r) const { return data.data() + r * cols; }

    double* ptr() { return data.data(); }
    const double* ptr() const { return data.data(); }

    size_t size() const { return data.size(); }

    void zero() { std::fill(data.begin(), data.end(), 0.0); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline void require_shape(const Matrix& m, size_t rows, size_t cols, const char* what) {
    if (m.rows != rows || m.cols != cols)
        throw ShapeError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + std::to_string(m.rows) + "x" +
                         std::to_string(m.cols));
}

} // namespace setchoice
