#pragma once

#include "tcm/matrix.hpp"

namespace tcm {

struct Svd {
    Matrix u;  // m x r, orthonormal columns, r = min(m, n)
    Vector s;  // r values, non-negative, non-increasing
    Matrix v;  // n x r, orthonormal columns
};

struct SvdOptions {
    int max_sweeps = 60;
    double tolerance = 1e-15;
    // Fault injection for the verify suite: drop the final rotating sweep.
    bool skip_last_sweep = false;
};

// Thin SVD by one-sided (Hestenes) Jacobi rotations. Throws NumericError if the
// sweep cap is hit before every column pair is orthogonal to `tolerance`.
Svd svd(const Matrix& a, const SvdOptions& options = {});

inline constexpr double kDefaultRcond = 1e-12;

// Moore-Penrose pseudo-inverse; singular values below rcond * s_max are dropped.
Matrix pinv(const Matrix& a, double rcond = kDefaultRcond, const SvdOptions& options = {});

double smallest_singular_value(const Matrix& a);
double condition_number(const Matrix& a);

// Worst entrywise residual of the four Penrose conditions.
struct PenroseResidual {
    double axa = 0.0;     // A X A - A
    double xax = 0.0;     // X A X - X
    double ax_sym = 0.0;  // (A X)^T - A X
    double xa_sym = 0.0;  // (X A)^T - X A
    double worst() const;
};
PenroseResidual penrose_residual(const Matrix& a, const Matrix& x);

} // namespace tcm
