#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "crae/common.hpp"
#include "crae/rng.hpp"

namespace crae {

using Vector = std::vector<double>;

// Dense row-major matrix. Sizes here are small (K, K_W at most a few hundred),
// so plain loops are fine.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    const double* row(std::size_t r) const { return data.data() + r * cols; }
    double* row(std::size_t r) { return data.data() + r * cols; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    static Matrix gaussian(std::size_t r, std::size_t c, double stddev, Rng& rng) {
        Matrix m(r, c);
        for (auto& v : m.data) v = stddev * rng.normal();
        return m;
    }
};

inline Vector zeros(std::size_t n) { return Vector(n, 0.0); }

// out = M * x
inline void matvec(const Matrix& m, const Vector& x, Vector& out) {
    out.assign(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* mr = m.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) acc += mr[c] * x[c];
        out[r] = acc;
    }
}

// out += M * x
inline void matvec_add(const Matrix& m, const Vector& x, Vector& out) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* mr = m.row(r);
        double acc = 0.0;
        for (std::size_t c = 0; c < m.cols; ++c) acc += mr[c] * x[c];
        out[r] += acc;
    }
}

// out += M^T * x
inline void matTvec_add(const Matrix& m, const Vector& x, Vector& out) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        const double* mr = m.row(r);
        const double xr = x[r];
        for (std::size_t c = 0; c < m.cols; ++c) out[c] += mr[c] * xr;
    }
}

// M += u * v^T
inline void add_outer(Matrix& m, const Vector& u, const Vector& v) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        double* mr = m.row(r);
        const double ur = u[r];
        for (std::size_t c = 0; c < m.cols; ++c) mr[c] += ur * v[c];
    }
}

inline double dot(const Vector& a, const Vector& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

inline void axpy(double alpha, const Vector& x, Vector& y) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline double sq_norm(const Vector& v) { return dot(v, v); }

inline double sq_norm(const Matrix& m) {
    double acc = 0.0;
    for (double v : m.data) acc += v * v;
    return acc;
}

// Solves A x = b for symmetric positive definite A via Cholesky. A is copied;
// breakdown (non-SPD input) raises numeric_error.
inline Vector cholesky_solve(Matrix a, Vector b) {
    const std::size_t n = a.rows;
    // decompose A = L L^T in the lower triangle
    for (std::size_t j = 0; j < n; ++j) {
        double d = a(j, j);
        for (std::size_t k = 0; k < j; ++k) d -= a(j, k) * a(j, k);
        if (!(d > 0.0)) throw numeric_error("cholesky: matrix not positive definite");
        const double ljj = std::sqrt(d);
        a(j, j) = ljj;
        for (std::size_t i = j + 1; i < n; ++i) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= a(i, k) * a(j, k);
            a(i, j) = s / ljj;
        }
    }
    // forward substitution L y = b
    for (std::size_t i = 0; i < n; ++i) {
        double s = b[i];
        for (std::size_t k = 0; k < i; ++k) s -= a(i, k) * b[k];
        b[i] = s / a(i, i);
    }
    // back substitution L^T x = y
    for (std::size_t i = n; i-- > 0;) {
        double s = b[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= a(k, i) * b[k];
        b[i] = s / a(i, i);
    }
    return b;
}

}  // namespace crae
