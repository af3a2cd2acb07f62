#include "tcm/linalg.hpp"

#include "tcm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace tcm {
namespace {

double column_dot(const Matrix& m, std::size_t p, std::size_t q) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m.rows(); ++i) acc += m(i, p) * m(i, q);
    return acc;
}

void rotate_columns(Matrix& m, std::size_t p, std::size_t q, double c, double s) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        const double mp = m(i, p);
        const double mq = m(i, q);
        m(i, p) = c * mp - s * mq;
        m(i, q) = s * mp + c * mq;
    }
}

// Overwrites the columns of `u` not flagged in `valid` with unit vectors
// orthogonal to every other column.
void complete_orthonormal(Matrix& u, std::vector<bool> valid) {
    std::size_t next_basis = 0;
    for (std::size_t j = 0; j < u.cols(); ++j) {
        if (valid[j]) continue;
        while (next_basis < u.rows()) {
            Vector cand(u.rows(), 0.0);
            cand[next_basis++] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t k = 0; k < u.cols(); ++k) {
                    if (!valid[k]) continue;
                    double proj = 0.0;
                    for (std::size_t i = 0; i < u.rows(); ++i) proj += u(i, k) * cand[i];
                    for (std::size_t i = 0; i < u.rows(); ++i) cand[i] -= proj * u(i, k);
                }
            }
            const double nrm = std::sqrt(squared_norm(cand));
            if (nrm > 0.5) {
                for (std::size_t i = 0; i < u.rows(); ++i) u(i, j) = cand[i] / nrm;
                valid[j] = true;
                break;
            }
        }
    }
}

Svd svd_tall(const Matrix& a, const SvdOptions& opt) {
    const std::size_t n = a.cols();
    Matrix u = a;
    Matrix v = Matrix::identity(n);

    Matrix u_pre;
    Matrix v_pre;
    Matrix u_last;
    Matrix v_last;
    bool converged = n < 2;
    for (int sweep = 0; sweep < opt.max_sweeps && !converged; ++sweep) {
        if (opt.skip_last_sweep) {
            u_pre = u;
            v_pre = v;
        }
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double alpha = column_dot(u, p, p);
                const double beta = column_dot(u, q, q);
                const double gamma = column_dot(u, p, q);
                if (gamma == 0.0 || std::abs(gamma) <= opt.tolerance * std::sqrt(alpha * beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                rotate_columns(u, p, q, c, s);
                rotate_columns(v, p, q, c, s);
            }
        }
        if (rotated && opt.skip_last_sweep) {
            u_last = std::move(u_pre);
            v_last = std::move(v_pre);
        }
        converged = !rotated;
    }
    if (!converged) {
        throw NumericError("svd: Jacobi sweeps did not converge for " + a.shape_string() + " matrix");
    }
    if (opt.skip_last_sweep && !u_last.empty()) {
        u = std::move(u_last);
        v = std::move(v_last);
    }

    Vector norms(n);
    for (std::size_t j = 0; j < n; ++j) norms[j] = std::sqrt(column_dot(u, j, j));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return norms[x] > norms[y]; });

    Svd out{Matrix(a.rows(), n), Vector(n), Matrix(n, n)};
    const double s_max = n == 0 ? 0.0 : norms[order.front()];
    const double null_cut = s_max * static_cast<double>(a.rows()) * std::numeric_limits<double>::epsilon();
    std::vector<bool> valid(n, false);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        out.s[j] = norms[src];
        for (std::size_t i = 0; i < n; ++i) out.v(i, j) = v(i, src);
        if (norms[src] > null_cut && norms[src] > 0.0) {
            for (std::size_t i = 0; i < a.rows(); ++i) out.u(i, j) = u(i, src) / norms[src];
            valid[j] = true;
        }
    }
    complete_orthonormal(out.u, std::move(valid));
    return out;
}

} // namespace

Svd svd(const Matrix& a, const SvdOptions& options) {
    if (!a.all_finite()) throw NumericError("svd: non-finite input " + a.shape_string());
    if (a.rows() >= a.cols()) return svd_tall(a, options);
    Svd t = svd_tall(a.transpose(), options);
    return {std::move(t.v), std::move(t.s), std::move(t.u)};
}

Matrix pinv(const Matrix& a, double rcond, const SvdOptions& options) {
    if (!(rcond > 0.0 && rcond < 1.0)) throw ContractError("pinv: rcond must lie in (0, 1)");
    const Svd d = svd(a, options);
    Matrix out(a.cols(), a.rows());
    if (d.s.empty() || d.s.front() == 0.0) return out;
    const double cut = rcond * d.s.front();
    for (std::size_t k = 0; k < d.s.size(); ++k) {
        if (d.s[k] <= cut) continue;
        const double inv = 1.0 / d.s[k];
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double vik = d.v(i, k) * inv;
            for (std::size_t j = 0; j < a.rows(); ++j) out(i, j) += vik * d.u(j, k);
        }
    }
    return out;
}

double smallest_singular_value(const Matrix& a) {
    const Svd d = svd(a);
    return d.s.empty() ? 0.0 : d.s.back();
}

double condition_number(const Matrix& a) {
    const Svd d = svd(a);
    if (d.s.empty()) return 1.0;
    return d.s.back() == 0.0 ? std::numeric_limits<double>::infinity() : d.s.front() / d.s.back();
}

double PenroseResidual::worst() const { return std::max({axa, xax, ax_sym, xa_sym}); }

PenroseResidual penrose_residual(const Matrix& a, const Matrix& x) {
    const Matrix ax = matmul(a, x);
    const Matrix xa = matmul(x, a);
    PenroseResidual r;
    r.axa = max_abs_diff(matmul(ax, a), a);
    r.xax = max_abs_diff(matmul(xa, x), x);
    r.ax_sym = max_abs_diff(ax.transpose(), ax);
    r.xa_sym = max_abs_diff(xa.transpose(), xa);
    return r;
}

} // namespace tcm
