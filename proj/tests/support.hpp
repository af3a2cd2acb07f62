#pragma once

#include "tcm/matrix.hpp"
#include "tcm/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

// Deliberately naive reference arithmetic, kept apart from the library so the
// checks below do not share code paths with what they check.
namespace ref {

using tcm::Matrix;
using tcm::Vector;

inline Matrix mul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            long double acc = 0.0L;
            for (std::size_t p = 0; p < a.cols(); ++p) acc += static_cast<long double>(a(i, p)) * b(p, j);
            out(i, j) = static_cast<double>(acc);
        }
    return out;
}

inline Vector mul(const Matrix& a, const Vector& x) {
    Vector out(a.rows(), 0.0);
    for (std::size_t i = 0; i < a.rows(); ++i) {
        long double acc = 0.0L;
        for (std::size_t p = 0; p < a.cols(); ++p) acc += static_cast<long double>(a(i, p)) * x[p];
        out[i] = static_cast<double>(acc);
    }
    return out;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

inline double max_abs(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) m = std::max(m, std::abs(a(i, j) - b(i, j)));
    return m;
}

inline double max_abs(const Vector& a, const Vector& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

inline Matrix gaussian(tcm::RngStream& rng, std::size_t rows, std::size_t cols, double std = 1.0) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < cols; ++j) m(i, j) = std * rng.normal();
    return m;
}

inline Vector gaussian_vector(tcm::RngStream& rng, std::size_t n, double std = 1.0) {
    Vector v(n);
    for (auto& x : v) x = std * rng.normal();
    return v;
}

inline Vector softmax(const Vector& z) {
    const double m = *std::max_element(z.begin(), z.end());
    Vector p(z.size());
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - m));
    for (auto& v : p) v /= s;
    return p;
}

// Inverse of a small square matrix by Gauss-Jordan with partial pivoting.
inline Matrix inverse(Matrix a) {
    const std::size_t n = a.rows();
    Matrix inv = Matrix::identity(n);
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t piv = c;
        for (std::size_t r = c + 1; r < n; ++r)
            if (std::abs(a(r, c)) > std::abs(a(piv, c))) piv = r;
        for (std::size_t j = 0; j < n; ++j) {
            std::swap(a(c, j), a(piv, j));
            std::swap(inv(c, j), inv(piv, j));
        }
        const double d = a(c, c);
        for (std::size_t j = 0; j < n; ++j) {
            a(c, j) /= d;
            inv(c, j) /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c) continue;
            const double f = a(r, c);
            for (std::size_t j = 0; j < n; ++j) {
                a(r, j) -= f * a(c, j);
                inv(r, j) -= f * inv(c, j);
            }
        }
    }
    return inv;
}

// Left inverse (A^T A)^-1 A^T of a full-column-rank matrix.
inline Matrix left_inverse(const Matrix& a) {
    const Matrix at = transpose(a);
    return mul(inverse(mul(at, a)), at);
}

} // namespace ref
