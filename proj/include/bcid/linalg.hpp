#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "bcid/errors.hpp"

namespace bcid {

using Vector = std::vector<double>;

// Dense row-major matrix. Small and allocation-owning; the layer sizes in
// this project never justify an external linear algebra dependency.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* row(std::size_t r) { return data_.data() + r * cols_; }
    const double* row(std::size_t r) const { return data_.data() + r * cols_; }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }

    bool operator==(const Matrix& o) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// z = W^T x + b with W: M x N, x: M, b: N. Iterates rows of W so the inner
// loop is contiguous; zero inputs (one-hot encodings) are skipped.
inline Vector affine_transposed(const Matrix& w, const Vector& x, const Vector& b) {
    if (x.size() != w.rows() || b.size() != w.cols())
        throw DimensionMismatch("affine_transposed: x " + std::to_string(x.size()) + ", W " +
                                std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
    Vector z = b;
    for (std::size_t m = 0; m < w.rows(); ++m) {
        const double xm = x[m];
        if (xm == 0.0)
            continue;
        const double* wr = w.row(m);
        for (std::size_t n = 0; n < w.cols(); ++n)
            z[n] += xm * wr[n];
    }
    return z;
}

// z = W x + b with W: M x N, x: N, b: M.
inline Vector affine(const Matrix& w, const Vector& x, const Vector& b) {
    if (x.size() != w.cols() || b.size() != w.rows())
        throw DimensionMismatch("affine: x " + std::to_string(x.size()) + ", W " +
                                std::to_string(w.rows()) + "x" + std::to_string(w.cols()));
    Vector z = b;
    for (std::size_t m = 0; m < w.rows(); ++m) {
        const double* wr = w.row(m);
        double acc = 0.0;
        for (std::size_t n = 0; n < w.cols(); ++n)
            acc += wr[n] * x[n];
        z[m] += acc;
    }
    return z;
}

inline void add_scaled(Vector& y, const Vector& x, double a) {
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] += a * x[i];
}

inline void add_scaled(Matrix& y, const Matrix& x, double a) {
    auto& yd = y.data();
    const auto& xd = x.data();
    for (std::size_t i = 0; i < yd.size(); ++i)
        yd[i] += a * xd[i];
}

// W += a * u v^T, u over rows, v over cols.
inline void outer_add(Matrix& w, const Vector& u, const Vector& v, double a = 1.0) {
    for (std::size_t m = 0; m < w.rows(); ++m) {
        const double um = a * u[m];
        if (um == 0.0)
            continue;
        double* wr = w.row(m);
        for (std::size_t n = 0; n < w.cols(); ++n)
            wr[n] += um * v[n];
    }
}

inline void scale(Vector& v, double a) {
    for (double& x : v)
        x *= a;
}

inline void scale(Matrix& m, double a) {
    for (double& x : m.data())
        x *= a;
}

inline double sum_squares(const Vector& v) {
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return s;
}

inline double sum_squares(const Matrix& m) {
    double s = 0.0;
    for (double x : m.data())
        s += x * x;
    return s;
}

} // namespace bcid
